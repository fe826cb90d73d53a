"""Pretraining loop for every objective and data regime."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dataset import Dataset
from .errors import ConfigError, ContractError, ParameterError
from .model import Encoder, EncoderSpec
from .objectives import DinoHead, barlow_loss, dino_loss, mixsr_loss, supervised_ce
from .optim import SGD, Adam
from .params import ParamStore
from .tensor import Tensor, concat, no_grad
from .views import PRESETS, CropMix, augment_batch, build_multicrop_batch, build_pair_batch, preset
from .world import STREAMS, _check_k

log = logging.getLogger(__name__)

OBJECTIVES = ("simclr", "barlow", "dino", "supervised")
REGIMES = ("real", "syn", "mixdiff", "mixing", "sequential")
HISTORY_COLUMNS = ("run_id", "epoch", "loss", "lr", "emb_std", "wall_ms")
COLLAPSE_THRESHOLD = 1e-3


@dataclass(frozen=True)
class MethodConfig:
    objective: str = "simclr"
    regime: str = "mixdiff"
    guidance: float = 8.0
    aug: str = "all"
    crop_mix: tuple[int, int, int, int] = (6, 1, 2, 1)
    epochs: int = 100
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0
    fraction: float = 1.0
    optimizer: str = "adam"
    momentum: float = 0.9
    ntxent_canonical: bool = False
    barlow_standardize: bool = False
    dino_centering: bool = True
    ema_momentum: float = 0.99
    center_momentum: float = 0.9
    tau: float = 0.5
    barlow_lambda: float = 0.005
    tau_s: float = 0.1
    tau_t: float = 0.04
    head_dim: int = 64
    input_size: int = 32

    def validate(self) -> None:
        def bad(name, msg):
            raise ConfigError(f"method.{name}", msg)

        if self.objective not in OBJECTIVES:
            bad("objective", f"must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.regime not in REGIMES:
            bad("regime", f"must be one of {REGIMES}, got {self.regime!r}")
        if self.objective == "supervised" and self.regime == "mixdiff":
            bad("regime", "supervised training has no second branch to replace")
        try:
            _check_k(self.guidance)
        except ParameterError as exc:
            bad("guidance", str(exc))
        if self.aug not in PRESETS:
            bad("aug", f"unknown preset {self.aug!r}")
        if len(self.crop_mix) != 4 or min(self.crop_mix) < 0:
            bad("crop_mix", "expected four non-negative counts")
        mix = CropMix(*self.crop_mix)
        if self.objective == "dino":
            if mix.n_global < 1 or mix.total < 2:
                bad("crop_mix", "need at least one global view and two views in total")
            if self.regime == "mixdiff" and (mix.real_global < 1 or mix.syn_global < 1):
                bad("crop_mix", "mixdiff distillation needs a global view from each branch")
        if self.epochs < 0:
            bad("epochs", "must be non-negative")
        if self.batch_size < 2:
            bad("batch_size", "must be at least 2")
        if not self.lr > 0:
            bad("lr", "must be positive")
        if not 0.0 < self.fraction <= 1.0:
            bad("fraction", "must lie in (0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            bad("optimizer", "must be 'adam' or 'sgd'")
        if not 0.0 <= self.ema_momentum <= 1.0:
            bad("ema_momentum", "must lie in [0, 1]")
        for name in ("tau", "tau_s", "tau_t"):
            if not getattr(self, name) > 0:
                bad(name, "must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["crop_mix"] = list(self.crop_mix)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MethodConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"method.{sorted(unknown)[0]}", "unknown field")
        d = dict(d)
        if "crop_mix" in d:
            d["crop_mix"] = tuple(d["crop_mix"])
        return cls(**d)

    def encoder_spec(self, n_classes: int) -> EncoderSpec:
        return EncoderSpec(
            input_size=self.input_size,
            head_dim=self.head_dim if self.objective == "dino" else 0,
            n_classes=n_classes if self.objective == "supervised" else 0,
        )


# --------------------------------------------------------------------------- small ops
def ema_update(teacher: ParamStore, student: ParamStore, m: float) -> ParamStore:
    """In place: every teacher tensor becomes ``m * teacher + (1 - m) * student``."""
    if not 0.0 <= m <= 1.0:
        raise ParameterError(f"EMA momentum must lie in [0, 1], got {m}")
    teacher.check_isomorphic(student)
    for name, t in teacher.items():
        t.data = m * t.data + (1.0 - m) * student[name].data
    return teacher


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    if step < 0 or step > total_steps:
        raise ParameterError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return base_lr
    return base_lr * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


def collapse_probe(embeddings) -> tuple[np.ndarray, bool]:
    """Per-dimension std and whether its mean falls below the collapse threshold."""
    e = np.asarray(embeddings.data if isinstance(embeddings, Tensor) else embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 2:
        raise ContractError("collapse_probe needs an (N >= 2, D) matrix")
    std = e.std(axis=0)
    return std, bool(std.mean() < COLLAPSE_THRESHOLD)


# --------------------------------------------------------------------------- training
@dataclass
class PretrainResult:
    encoder: Encoder  # the network to evaluate (teacher for dino)
    student: ParamStore
    teacher: ParamStore | None
    history: list[dict] = field(default_factory=list)
    head: DinoHead | None = None
    collapsed: bool = False

    @property
    def params(self) -> ParamStore:
        return self.encoder.params


def _epoch_source(cfg: MethodConfig, epoch: int) -> str:
    if cfg.regime == "sequential":
        return "real" if epoch < (cfg.epochs + 1) // 2 else "syn"
    return {"real": "real", "syn": "syn", "mixdiff": "mix", "mixing": "pool"}[cfg.regime]


def _aug_seeds(seed: int, epoch: int, n: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS["augment"], epoch))
    return ss.generate_state(n, dtype=np.uint64)


def _effective_mix(mix: CropMix, source: str) -> CropMix:
    if source == "mix":
        return mix
    locals_, globals_ = mix.real_local + mix.syn_local, mix.real_global + mix.syn_global
    if source == "syn":
        return CropMix(0, 0, locals_, globals_)
    return CropMix(locals_, globals_, 0, 0)


class _Batcher:
    """Resolves which pixels feed each branch for a given epoch."""

    def __init__(self, cfg: MethodConfig, data: Dataset):
        self.cfg = cfg
        self.idx = data.subset_indices(cfg.fraction)
        self.real = data.train.images
        self.labels = data.train.labels
        self.needs_syn = cfg.regime != "real"
        self.syn = data.counterparts(cfg.guidance) if self.needs_syn else None

    def epoch_order(self, epoch: int, source: str) -> np.ndarray:
        """Positions into the pool for this epoch; pool entries >= n are counterparts."""
        n = len(self.idx)
        rng = np.random.default_rng(np.random.SeedSequence(int(self.cfg.seed), spawn_key=(STREAMS["misc"], epoch)))
        if source == "pool":
            return rng.permutation(2 * n)[:n]
        return rng.permutation(n)

    def images(self, pos: np.ndarray, source: str):
        """(real_pixels, syn_pixels, labels, image_ids) for pool positions."""
        n = len(self.idx)
        if source == "pool":
            is_syn = pos >= n
            src = self.idx[np.where(is_syn, pos - n, pos)]
            px = np.where(is_syn[:, None, None, None], self.syn[src], self.real[src])
            ids = np.where(is_syn, src + len(self.real), src)
            return px, None, self.labels[src], ids
        src = self.idx[pos]
        syn = self.syn[src] if self.syn is not None else None
        return self.real[src], syn, self.labels[src], src


def pretrain(
    cfg: MethodConfig, data: Dataset, run_id: str = "run", on_step=None, stop_after: int | None = None
) -> PretrainResult:
    """Train an encoder under ``cfg`` and return it with its per-epoch history.

    ``on_step(step, student, teacher)`` is called after every optimizer step and
    EMA update; ``teacher`` is None for objectives without one. ``stop_after``
    runs only that many leading epochs of the full ``cfg.epochs`` schedule.
    """
    cfg.validate()
    enc_spec = cfg.encoder_spec(data.n_classes)
    student = Encoder.create(enc_spec, cfg.seed)
    teacher = Encoder(enc_spec, student.params.copy()) if cfg.objective == "dino" else None
    head = None
    if cfg.objective == "dino":
        head = DinoHead(cfg.head_dim, cfg.tau_s, cfg.tau_t, cfg.center_momentum, cfg.dino_centering)
    trainable = student.params
    if cfg.objective == "supervised":
        # the projector is not on the classification path
        trainable = ParamStore({k: v for k, v in student.params.items() if not k.startswith("proj.")})
    opt = Adam(trainable) if cfg.optimizer == "adam" else SGD(trainable, cfg.momentum)
    policy = preset(cfg.aug, out_size=cfg.input_size)
    batcher = _Batcher(cfg, data)
    n = len(batcher.idx)
    bs = min(cfg.batch_size, n)
    starts = [s for s in range(0, n, bs) if n - s >= 2]
    total_steps = cfg.epochs * len(starts)
    mix = CropMix(*cfg.crop_mix)

    history: list[dict] = []
    step = 0
    collapsed = False
    n_ids = 2 * len(data.train)
    n_epochs = cfg.epochs if stop_after is None else min(int(stop_after), cfg.epochs)
    for epoch in range(n_epochs):
        t0 = time.perf_counter()
        source = _epoch_source(cfg, epoch)
        order = batcher.epoch_order(epoch, source)
        seeds_all = _aug_seeds(cfg.seed, epoch, n_ids)
        losses, stds = [], []
        lr = cosine_lr(step, total_steps, cfg.lr)
        for s in starts:
            pos = order[s : s + bs]
            real, syn, labels, ids = batcher.images(pos, source)
            seeds = seeds_all[ids]
            lr = cosine_lr(step, total_steps, cfg.lr)
            if cfg.objective == "dino":
                loss, emb = _dino_step(student, teacher, head, real, syn, _effective_mix(mix, source), policy, seeds, step == 0)
            else:
                loss, emb = _pair_step(cfg, student, real, syn, labels, source, policy, seeds)
            loss.backward()
            opt.step(lr)
            opt.zero_grad()
            if teacher is not None:
                ema_update(teacher.params, student.params, cfg.ema_momentum)
            step += 1
            if on_step is not None:
                on_step(step, student, teacher)
            losses.append(loss.item())
            stds.append(collapse_probe(emb)[0].mean())
        emb_std = float(np.mean(stds))
        collapsed = collapsed or emb_std < COLLAPSE_THRESHOLD
        row = {
            "run_id": run_id,
            "epoch": epoch + 1,
            "loss": float(np.mean(losses)),
            "lr": float(lr),
            "emb_std": emb_std,
            "wall_ms": (time.perf_counter() - t0) * 1e3,
            "source": source,
        }
        history.append(row)
        log.info("%s epoch %d/%d loss %.5f emb_std %.4g (%s)", run_id, epoch + 1, cfg.epochs, row["loss"], emb_std, source)

    evaluated = teacher if teacher is not None else student
    return PretrainResult(
        encoder=evaluated,
        student=student.params,
        teacher=None if teacher is None else teacher.params,
        history=history,
        head=head,
        collapsed=collapsed,
    )


def _pair_step(cfg, enc: Encoder, real, syn, labels, source, policy, seeds):
    if cfg.objective == "supervised":
        px = syn if source == "syn" else real
        x = augment_batch(px, policy, seeds)
        logits = enc.classify(enc.features(x))
        return supervised_ce(logits, labels), logits.data
    mode = {"real": "real_real", "pool": "real_real", "syn": "syn_syn", "mix": "mix"}[source]
    v1, v2 = build_pair_batch(real, syn, mode, policy, seeds)
    b = len(v1)
    z = enc(np.concatenate([v1, v2]))
    z1, z2 = z[:b], z[b:]
    if cfg.objective == "simclr":
        loss = mixsr_loss(z1, z2, cfg.tau, cfg.ntxent_canonical)
    else:
        loss = barlow_loss(z1, z2, cfg.barlow_lambda, cfg.barlow_standardize)
    return loss, z1.data


def _dino_step(student: Encoder, teacher: Encoder, head: DinoHead, real, syn, mix: CropMix, policy, seeds, first: bool):
    views = build_multicrop_batch(real, syn, mix, policy, seeds)
    b = len(real)
    x = np.concatenate([v for v, _, _ in views])
    logits = student.head(student(x))
    student_views = [logits[i * b : (i + 1) * b] for i in range(len(views))]
    with no_grad():
        g = np.concatenate([v for v, _, is_g in views if is_g])
        t_logits = teacher.head(teacher(g)).data
    teacher_views = [t_logits[i * b : (i + 1) * b] for i in range(mix.n_global)]
    if first and head.centering:
        # start the running centre at the first batch mean rather than at zero, so
        # early steps are not scored against an uncentred, overly sharp teacher
        head.center = t_logits.mean(axis=0)
    loss = dino_loss(teacher_views, student_views, head)
    return loss, student_views[0].data
