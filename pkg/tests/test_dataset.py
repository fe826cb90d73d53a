import json

import numpy as np
import pytest

from mixview import ParameterError
from mixview.dataset import DatasetSpec, dump_dataset, make_dataset, read_ppm, write_ppm

SMALL = DatasetSpec(n_classes=3, n_per_class=6, n_test_per_class=4, n_shift_per_class=2, image_size=16,
                    guidance_scales=(2.0, 8.0))


@pytest.fixture(scope="module")
def ds():
    return make_dataset(SMALL, cache=False)


def test_sizes(ds):
    assert ds.train.images.shape == (18, 3, 16, 16)
    assert len(ds.test) == 12
    assert np.bincount(ds.train.labels).tolist() == [6, 6, 6]
    assert {k: len(v) for k, v in ds.shifts.items()} == {k: 6 for k in SMALL.shift_kinds}
    assert ds.counterparts(8.0).shape == ds.train.images.shape


def test_deterministic(ds):
    again = make_dataset(SMALL, cache=False)
    assert again.content_hash() == ds.content_hash()


def test_splits_disjoint(ds):
    train = {s.seed for s in ds.train.samples}
    test = {s.seed for s in ds.test.samples}
    assert not train & test


def test_counterparts_track_labels(ds):
    for i in range(len(ds.train)):
        assert ds.counterpart_sample(i, 8.0).class_id == ds.train.labels[i]
    assert np.allclose(ds.counterpart_sample(4, 8.0).pixels, ds.counterparts(8.0)[4], atol=1e-6)


def test_subset_nesting(ds):
    small, large = ds.subset_indices(0.25), ds.subset_indices(0.5)
    assert set(small) <= set(large)
    assert len(ds.subset_indices(1.0)) == 18
    with pytest.raises(ParameterError):
        ds.subset_indices(0.0)


def test_spec_validation():
    with pytest.raises(ParameterError):
        make_dataset(DatasetSpec(train_seed=3, test_seed=3))
    with pytest.raises(ParameterError):
        make_dataset(DatasetSpec(n_shift_per_class=60))
    with pytest.raises(ParameterError):
        make_dataset(DatasetSpec(shift_kinds=("fog",)))


def test_spec_round_trip():
    assert DatasetSpec.from_dict(json.loads(json.dumps(SMALL.to_dict()))) == SMALL


def test_transfer_spec_uses_other_glyphs():
    t = SMALL.transfer()
    assert t.glyph_set == "transfer" and t.guidance_scales == () and t.shift_kinds == ()


def test_ppm_round_trip(tmp_path, rng):
    img = np.round(rng.uniform(size=(3, 5, 7)) * 255) / 255
    write_ppm(tmp_path / "x.ppm", img)
    assert np.allclose(read_ppm(tmp_path / "x.ppm"), img)


def test_dump(ds, tmp_path):
    path = dump_dataset(ds, tmp_path, per_class=1)
    manifest = json.loads(path.read_text())
    assert manifest["content_hash"] == ds.content_hash()
    assert all((tmp_path / f).exists() for f in manifest["files"])
    # train, test, two guidance scales, five shifts; one image per class each
    assert len(manifest["files"]) == 3 * (2 + 2 + 5)
