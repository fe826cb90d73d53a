"""Pretrain a small encoder on real/synthetic view pairs and probe it.

    python demos/quickstart.py [epochs]
"""

import sys

from mixview.dataset import DatasetSpec, make_dataset
from mixview.evalsuite import linear_eval
from mixview.trainer import MethodConfig, pretrain

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10

ds = make_dataset(DatasetSpec(n_per_class=60, n_test_per_class=20, n_shift_per_class=20))
print(f"train {len(ds.train)} images, test {len(ds.test)}, shift sets {sorted(ds.shifts)}")

for regime in ("real", "syn", "mixdiff"):
    cfg = MethodConfig(objective="simclr", regime=regime, epochs=epochs, batch_size=120)
    result = pretrain(cfg, ds, run_id=regime)
    _, probe = linear_eval(result.encoder, ds)
    losses = [row["loss"] for row in result.history]
    print(f"{regime:>8}: loss {losses[0]:.3f} -> {losses[-1]:.3f}  "
          f"test {probe.accuracy['test']:.3f}  mean-shift {probe.mean_shift:.3f}")
