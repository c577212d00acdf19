import numpy as np
import pytest

import depthseg as ds
from depthseg.data import SynthesisConfig, load_dataset, save_dataset, synthesize_dataset
from depthseg.tensorio import read_json


def _cfg(n=4, seed=0, **kw):
    base = dict(n_samples=n, seed=seed, image_shape=(64, 64), depth_cap=5,
                base_depth_range=(3, 5))
    base.update(kw)
    return SynthesisConfig(**base)


def test_synthesis_is_deterministic():
    a = synthesize_dataset(_cfg(seed=3))
    b = synthesize_dataset(_cfg(seed=3))
    assert np.array_equal(a.clean, b.clean)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.weights, b.weights)
    assert a.seeds == b.seeds
    c = synthesize_dataset(_cfg(seed=4))
    assert not np.array_equal(a.clean, c.clean)


def test_samples_differ_within_dataset():
    dset = synthesize_dataset(_cfg(n=6))
    assert len({int(s) for s in dset.seeds}) == 6
    assert not np.array_equal(dset.clean[0], dset.clean[1])


def test_labels_respect_depth_cap():
    dset = synthesize_dataset(_cfg(n=8, depth_cap=5))
    assert dset.labels.max() <= 5
    assert dset.labels.min() == 0


def test_shapes_and_dtypes():
    dset = synthesize_dataset(_cfg(n=3))
    assert dset.clean.shape == (3, 64, 64) and dset.clean.dtype == np.float32
    assert dset.labels.shape == (3, 16, 16) and dset.labels.dtype == np.int64
    assert dset.weights.shape == (3, 16, 16) and dset.weights.dtype == np.float32
    assert (dset.weights > 0).all() and (dset.weights <= 1).all()


def test_save_load_round_trip(tmp_path):
    dset = synthesize_dataset(_cfg(n=3, seed=9))
    save_dataset(dset, tmp_path / "data")
    back = load_dataset(tmp_path / "data")
    assert np.array_equal(back.clean, dset.clean)
    assert np.array_equal(back.labels, dset.labels)
    assert np.array_equal(back.weights, dset.weights)
    assert back.ids == dset.ids
    assert back.seeds == dset.seeds
    assert back.label_factor == dset.label_factor
    for m_in, m_out in zip(dset.models, back.models):
        assert m_in.to_json_dict() == m_out.to_json_dict()


def test_manifest_schema(tmp_path):
    dset = synthesize_dataset(_cfg(n=2))
    save_dataset(dset, tmp_path / "data")
    manifest = read_json(tmp_path / "data" / "manifest.json")
    assert manifest["version"] == 1
    assert len(manifest["samples"]) == 2
    for entry in manifest["samples"]:
        assert set(entry) == {"id", "clean", "labels", "weights", "model", "seed"}
        for key in ("clean", "labels", "weights", "model"):
            assert (tmp_path / "data" / entry[key]).exists()


def test_subset_and_centers():
    dset = synthesize_dataset(_cfg(n=4))
    sub = dset.subset([1, 3])
    assert len(sub) == 2
    assert sub.ids == [dset.ids[1], dset.ids[3]]
    centers = sub.centers(0)
    assert centers, "expected at least one column center"
    oh, ow = sub.labels.shape[1:]
    for r, c, species in centers:
        assert 0 <= r < oh and 0 <= c < ow
        assert species in (ds.Species.HEAVY, ds.Species.LIGHT)


def test_raw_depth_recomputed_from_model():
    dset = synthesize_dataset(_cfg(n=2))
    raw = dset.raw_depth(0)
    assert raw.shape == dset.labels.shape[1:]
    # smoothed labels dominate the raw spikes
    assert (dset.labels[0] >= raw).all()
    assert raw.max() == dset.labels[0].max()


def test_n_samples_validation():
    with pytest.raises(ValueError):
        _cfg(n=0)
