import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsdc.errors import (DataError, DimensionError, FormatError, SpecError)
from fsdc.features_io import (Dataset, SplitManifest, SyntheticSpec,
                              generate_synthetic, load_dataset, load_split,
                              save_dataset, save_split)
from fsdc.transform import sample_skewness


def small_dataset():
    return Dataset([1, 1, 3], [[0.5, 0.25], [0.5, 0.75], [2.0, 4.0]])


# ---------------------------------------------------------------------- types

def test_dataset_basics():
    ds = small_dataset()
    assert ds.count == 3
    assert ds.dim == 2
    assert ds.classes() == [1, 3]
    assert list(ds.rows_for(1)) == [0, 1]
    assert ds.values.dtype == np.float32
    assert ds.features_f64().dtype == np.float64
    assert ds.nonneg


def test_dataset_rejects_empty():
    with pytest.raises(SpecError):
        Dataset(np.empty(0, dtype=np.int64), np.empty((0, 4)))


def test_dataset_rejects_nonfinite():
    with pytest.raises(DataError):
        Dataset([0], [[np.nan]])


def test_dataset_rejects_negative_class_id():
    with pytest.raises(SpecError):
        Dataset([-1], [[1.0]])


def test_dataset_rejects_ragged_via_object_array():
    with pytest.raises((DimensionError, ValueError)):
        Dataset([0, 1], np.array([[1.0], [1.0, 2.0]], dtype=object))


def test_nonneg_flag_tracks_values():
    assert not Dataset([0], [[-0.5, 1.0]]).nonneg


# --------------------------------------------------------------- binary codec

def test_binary_round_trip_is_bit_exact(tmp_path):
    ds = small_dataset()
    p = tmp_path / "d.fsdc"
    save_dataset(ds, p)
    back = load_dataset(p)
    assert np.array_equal(back.class_ids, ds.class_ids)
    assert back.values.tobytes() == ds.values.tobytes()


def test_binary_file_size_arithmetic(tmp_path):
    dim = 640
    ds = Dataset([0, 1], np.ones((2, dim), dtype=np.float32))
    p = tmp_path / "wide.fsdc"
    save_dataset(ds, p)
    assert p.stat().st_size == 16 + 2 * (4 + 4 * dim)


def test_bad_magic_is_rejected(tmp_path):
    p = tmp_path / "bad.fsdc"
    p.write_bytes(b"XXXX" + b"\x00" * 12)
    with pytest.raises(FormatError):
        load_dataset(p)


def test_bad_version_is_rejected(tmp_path):
    p = tmp_path / "bad.fsdc"
    p.write_bytes(struct.pack("<4sIII", b"FSDC", 2, 1, 1) + b"\x00" * 8)
    with pytest.raises(FormatError):
        load_dataset(p)


def test_truncated_payload_is_rejected(tmp_path):
    ds = small_dataset()
    p = tmp_path / "d.fsdc"
    save_dataset(ds, p)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FormatError):
        load_dataset(p)


def test_zero_record_header_is_rejected(tmp_path):
    p = tmp_path / "empty.fsdc"
    p.write_bytes(struct.pack("<4sIII", b"FSDC", 1, 0, 4))
    with pytest.raises(FormatError):
        load_dataset(p)


@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_binary_round_trip_random(tmp_path_factory, n, dim, seed):
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, 50, size=n)
    vals = rng.normal(size=(n, dim)).astype(np.float32)
    ds = Dataset(ids, vals)
    p = tmp_path_factory.mktemp("rt") / "d.fsdc"
    save_dataset(ds, p)
    back = load_dataset(p)
    assert back.values.tobytes() == ds.values.tobytes()
    assert np.array_equal(back.class_ids, ds.class_ids)


# ------------------------------------------------------------------ csv codec

def test_csv_parse():
    text = "1,0.5,0.25\n1,0.5,0.75\n"
    p_ids = [1, 1]
    ds = _load_csv_text(text)
    assert ds.dim == 2
    assert [int(c) for c in ds.class_ids] == p_ids


def _load_csv_text(text, tmp=None):
    import tempfile, os
    fd, path = tempfile.mkstemp(suffix=".csv")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        return load_dataset(path, format="csv")
    finally:
        os.unlink(path)


def test_csv_round_trip_is_exact(tmp_path):
    ds = Dataset([0, 7], [[0.1, 1e-8], [12345.678, 3.0]])
    p = tmp_path / "d.csv"
    save_dataset(ds, p, format="csv")
    back = load_dataset(p, format="csv")
    # %.9g carries enough digits that float32 values survive the text trip
    assert back.values.tobytes() == ds.values.tobytes()


def test_csv_ragged_rows_rejected():
    with pytest.raises(DimensionError):
        _load_csv_text("0,1.0,2.0\n1,3.0\n")


def test_csv_bad_values_rejected():
    with pytest.raises(FormatError):
        _load_csv_text("a,1.0\n")
    with pytest.raises(FormatError):
        _load_csv_text("0,zzz\n")
    with pytest.raises(DataError):
        _load_csv_text("0,nan\n")


def test_unknown_format_rejected(tmp_path):
    ds = small_dataset()
    with pytest.raises(SpecError):
        save_dataset(ds, tmp_path / "x", format="parquet")


# ------------------------------------------------------------ split manifests

def test_split_round_trip(tmp_path):
    m = SplitManifest(base=[0, 1, 2], val=[3], novel=[4, 5])
    p = tmp_path / "split.json"
    save_split(m, p)
    back = load_split(p)
    assert back.base_classes == frozenset({0, 1, 2})
    assert back.val_classes == frozenset({3})
    assert back.novel_classes == frozenset({4, 5})


def test_split_roles_must_be_disjoint():
    with pytest.raises(SpecError):
        SplitManifest(base=[0, 1], novel=[1])


def test_split_manifest_schema_errors(tmp_path):
    p = tmp_path / "split.json"
    p.write_text(json.dumps({"base": [0], "novel": [1]}))
    with pytest.raises(FormatError):
        load_split(p)
    p.write_text(json.dumps({"base": [0], "val": [], "novel": [1], "x": []}))
    with pytest.raises(FormatError):
        load_split(p)
    p.write_text("not json")
    with pytest.raises(FormatError):
        load_split(p)


# ------------------------------------------------------------- synthetic data

def test_synthetic_is_deterministic():
    spec = SyntheticSpec(num_classes=4, dim=6, samples_per_class=20,
                         group_size=2, seed=5)
    a, split_a, _ = generate_synthetic(spec)
    b, split_b, _ = generate_synthetic(spec)
    assert a.values.tobytes() == b.values.tobytes()
    assert np.array_equal(a.class_ids, b.class_ids)
    assert split_a.to_payload() == split_b.to_payload()


def test_synthetic_split_layout():
    spec = SyntheticSpec(num_classes=25, dim=8, samples_per_class=3,
                         group_size=5, seed=1)
    _, split, truth = generate_synthetic(spec)
    assert split.novel_classes == frozenset({4, 9, 14, 19, 24})
    assert len(split.base_classes) == 20
    assert truth.group_of(4) == 0
    assert truth.group_of(24) == 4


def test_synthetic_features_are_skewed():
    spec = SyntheticSpec(num_classes=1, dim=4, samples_per_class=10_000,
                         group_size=1, skew_power=2.0, seed=9)
    ds, _, _ = generate_synthetic(spec)
    skew = sample_skewness(ds.features_f64()[:, 0])
    assert skew > 0.5


def test_synthetic_truth_moments_match_empirical():
    spec = SyntheticSpec(num_classes=2, dim=5, samples_per_class=40_000,
                         group_size=2, seed=3)
    ds, _, truth = generate_synthetic(spec)
    for cid in (0, 1):
        feats = ds.features_for(cid)
        t = truth.classes[cid]
        n = feats.shape[0]
        # sample mean of each marginal is within 5 standard errors
        se = np.sqrt(t.feature_var / n)
        assert np.all(np.abs(feats.mean(axis=0) - t.feature_mean) < 5 * se)


def test_synthetic_quadrature_agrees_with_closed_form():
    from fsdc.features_io import _abs_power_moments
    u = np.array([0.3, 0.9, 1.5])
    m_closed, v_closed = _abs_power_moments(u, 0.3, 2)
    m_quad, v_quad = _abs_power_moments(u, 0.3, 2.0000001)
    assert np.allclose(m_closed, m_quad, rtol=1e-5)
    assert np.allclose(v_closed, v_quad, rtol=1e-4)


def test_synthetic_same_group_classes_are_closer():
    spec = SyntheticSpec(num_classes=4, dim=16, samples_per_class=2,
                         group_size=2, seed=11)
    _, _, truth = generate_synthetic(spec)
    m = {c: truth.classes[c].latent_mean for c in range(4)}
    within = np.linalg.norm(m[0] - m[1])
    across = min(np.linalg.norm(m[0] - m[2]), np.linalg.norm(m[0] - m[3]))
    assert within < across


def test_synthetic_rejects_bad_spec():
    with pytest.raises(SpecError):
        SyntheticSpec(num_classes=2, dim=1, samples_per_class=5)
    with pytest.raises(SpecError):
        SyntheticSpec(num_classes=2, dim=4, samples_per_class=0)
    with pytest.raises(SpecError):
        SyntheticSpec(num_classes=2, dim=4, samples_per_class=5, skew_power=0.5)
    with pytest.raises(SpecError):
        SyntheticSpec(num_classes=3, dim=4, samples_per_class=5,
                      groups=((0, 1),))
