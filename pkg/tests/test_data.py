"""Long-tailed data: count profiles, shot buckets, sampler math, draws, and
the dataset file format."""

import numpy as np
import pytest

from tailadapt.data import (
    LongTailedDataset,
    SamplerState,
    draw,
    draw_batch,
    exponential_counts,
    pareto_counts,
    read_dataset,
    sampler_probs,
    shot_split,
    synth_exponential,
    synth_pareto,
    write_dataset,
)
from tailadapt.errors import (
    ConfigurationError,
    DatasetFormatError,
    InvalidPowerError,
    InvalidRatioError,
)


# ---- count profiles ---------------------------------------------------------


def test_exponential_counts_k3_example():
    assert exponential_counts(3, 100, 100.0).tolist() == [100, 10, 1]


def test_exponential_counts_rho_one_is_flat():
    assert exponential_counts(5, 70, 1.0).tolist() == [70] * 5


def test_exponential_head_tail_ratio():
    for n_max in (100, 500, 1000):
        counts = exponential_counts(10, n_max, 50.0)
        assert counts[0] == n_max
        ratio = counts[0] / counts[-1]
        # tail count was rounded from n_max/rho, so the ratio can drift by
        # at most the half-step of that rounding
        assert abs(ratio - 50.0) <= 50.0 / (2 * counts[-1])


def test_exponential_counts_clamped_at_one():
    counts = exponential_counts(10, 20, 1000.0)
    assert counts.min() == 1
    assert counts[0] == 20
    assert np.all(np.diff(counts) <= 0)


def test_exponential_counts_match_formula():
    k, n_max, rho = 12, 345, 17.5
    counts = exponential_counts(k, n_max, rho)
    for j in range(k):
        expected = max(1, round(n_max * rho ** (-j / (k - 1))))
        assert counts[j] == expected


def test_exponential_rejects_bad_ratio():
    with pytest.raises(InvalidRatioError):
        exponential_counts(5, 100, 0.5)


def test_pareto_counts_shape_and_head():
    counts = pareto_counts(1000, 1280, 6.0)
    assert counts[0] == 1280
    assert counts.min() >= 1
    assert np.all(np.diff(counts) <= 0)
    # direct evaluation of the rank power law
    for j in (1, 7, 500, 1000):
        assert counts[j - 1] == max(1, round(1280 * j ** (-1.0 / 6.0)))


def test_pareto_rejects_bad_power():
    with pytest.raises(InvalidPowerError):
        pareto_counts(5, 100, 0.0)
    with pytest.raises(InvalidPowerError):
        pareto_counts(5, 100, -3.0)


# ---- shot buckets -----------------------------------------------------------


def test_shot_split_canonical_example():
    assert shot_split([150, 50, 5]) == ["many", "medium", "few"]


def test_shot_split_boundaries_inclusive():
    # both edges of the medium band belong to medium
    assert shot_split([101, 100, 20, 19]) == ["many", "medium", "medium", "few"]


# ---- sampler math -----------------------------------------------------------


def test_sampler_probs_closed_forms():
    counts = [100, 10, 1]
    inst = sampler_probs("instance", counts)
    assert np.allclose(inst, np.array([100, 10, 1]) / 111.0, atol=1e-15)
    bal = sampler_probs("class_balanced", counts)
    assert np.allclose(bal, [1 / 3] * 3, atol=1e-15)
    root = sampler_probs("square_root", counts)
    denom = 10.0 + np.sqrt(10.0) + 1.0
    assert np.allclose(root, [10.0 / denom, np.sqrt(10.0) / denom, 1.0 / denom],
                       atol=1e-15)


def test_square_root_two_class_hand_value():
    # counts [100, 1]: sqrt gives [10, 1] -> [10/11, 1/11]
    probs = sampler_probs("square_root", [100, 1])
    assert np.allclose(probs, [10 / 11, 1 / 11], atol=1e-12)


def test_mix_balanced_endpoints_and_midpoint():
    counts = [8, 4, 4]
    inst = sampler_probs("instance", counts)
    bal = sampler_probs("class_balanced", counts)
    assert np.allclose(sampler_probs("mix_balanced", counts, 0.0), inst, atol=1e-15)
    assert np.allclose(sampler_probs("mix_balanced", counts, 1.0), bal, atol=1e-15)
    mid = sampler_probs("mix_balanced", counts, 0.5)
    assert np.allclose(mid, 0.5 * inst + 0.5 * bal, atol=1e-15)


def test_sampler_probs_always_normalized():
    rng = np.random.default_rng(0)
    for _ in range(50):
        counts = rng.integers(1, 500, size=rng.integers(2, 30))
        for strat in ("instance", "class_balanced", "square_root"):
            p = sampler_probs(strat, counts)
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.all(p > 0)
        p = sampler_probs("mix_balanced", counts, float(rng.uniform()))
        assert abs(p.sum() - 1.0) < 1e-12


def test_sampler_rejects_unknown_strategy_and_bad_counts():
    with pytest.raises(ConfigurationError):
        sampler_probs("stratified", [1, 2])
    with pytest.raises(ConfigurationError):
        sampler_probs("instance", [3, 0])
    with pytest.raises(ConfigurationError):
        SamplerState.create("bogus", 0)


# ---- draws ------------------------------------------------------------------


def small_dataset(seed=0):
    return synth_exponential(5, 40, 8.0, 6, seed=seed, test_per_class=4)


def test_draw_returns_row_of_drawn_class():
    ds = small_dataset()
    state = SamplerState.create("class_balanced", 1)
    for _ in range(200):
        cls, row = draw(state, ds)
        assert ds.labels[row] == cls
        assert row < ds.n_train


def test_draw_deterministic_given_seed():
    ds = small_dataset()
    a = SamplerState.create("instance", 42)
    b = SamplerState.create("instance", 42)
    seq_a = [draw(a, ds) for _ in range(100)]
    seq_b = [draw(b, ds) for _ in range(100)]
    assert seq_a == seq_b


def test_draw_batch_matches_repeated_draws():
    ds = small_dataset()
    a = SamplerState.create("square_root", 7)
    b = SamplerState.create("square_root", 7)
    classes, rows = draw_batch(a, ds, 50)
    singles = [draw(b, ds) for _ in range(50)]
    assert classes.tolist() == [c for c, _ in singles]
    assert rows.tolist() == [r for _, r in singles]


def test_class_balanced_monte_carlo():
    ds = synth_exponential(10, 500, 100.0, 4, seed=3, test_per_class=2)
    state = SamplerState.create("class_balanced", 11)
    classes, _ = draw_batch(state, ds, 100_000)
    freq = np.bincount(classes, minlength=10) / 100_000
    assert np.all(np.abs(freq - 0.1) < 0.01)


def test_instance_monte_carlo_tracks_counts():
    ds = small_dataset(seed=5)
    state = SamplerState.create("instance", 13)
    classes, _ = draw_batch(state, ds, 50_000)
    freq = np.bincount(classes, minlength=5) / 50_000
    expected = ds.class_counts / ds.class_counts.sum()
    assert np.all(np.abs(freq - expected) < 0.01)


def test_progress_must_not_decrease():
    state = SamplerState.create("mix_balanced", 0)
    state.set_progress(0.4)
    with pytest.raises(ConfigurationError):
        state.set_progress(0.2)


# ---- synthesis --------------------------------------------------------------


def test_synth_layout_and_balanced_test():
    ds = synth_exponential(4, 30, 10.0, 5, seed=9, test_per_class=6)
    assert ds.class_counts.tolist() == exponential_counts(4, 30, 10.0).tolist()
    assert ds.n_test == 24
    assert np.all(np.bincount(ds.test_labels, minlength=4) == 6)
    # train rows grouped by class in id order
    assert ds.train_labels.tolist() == sorted(ds.train_labels.tolist())
    # class means are unit length
    assert np.allclose(np.linalg.norm(ds.class_means, axis=1), 1.0, atol=1e-12)
    assert ds.noise_sigma == 0.35


def test_synth_deterministic_per_seed():
    a = synth_exponential(4, 30, 10.0, 5, seed=9)
    b = synth_exponential(4, 30, 10.0, 5, seed=9)
    c = synth_exponential(4, 30, 10.0, 5, seed=10)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.features, c.features)


def test_synth_pareto_dataset():
    ds = synth_pareto(6, 50, 3.0, 4, seed=2, test_per_class=3)
    assert ds.class_counts.tolist() == pareto_counts(6, 50, 3.0).tolist()
    assert ds.n_test == 18


def test_zero_sigma_collapses_to_means():
    ds = synth_exponential(3, 10, 5.0, 4, seed=1, sigma=0.0, test_per_class=2)
    for k in range(3):
        rows = ds.train_features[ds.train_rows_for_class(k)]
        assert np.allclose(rows, ds.class_means[k], atol=1e-15)


# ---- file format ------------------------------------------------------------


def test_round_trip_preserves_everything(tmp_path):
    ds = synth_exponential(5, 60, 12.0, 7, seed=21, test_per_class=5)
    path = tmp_path / "data.ltds"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.class_counts, ds.class_counts)
    assert back.test_per_class == ds.test_per_class
    # synthesis metadata is not part of the file
    assert back.class_means is None


def test_second_write_is_byte_identical(tmp_path):
    ds = synth_exponential(4, 25, 6.0, 3, seed=8, test_per_class=2)
    first = tmp_path / "a.ltds"
    second = tmp_path / "b.ltds"
    write_dataset(ds, first)
    write_dataset(read_dataset(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ltds"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(DatasetFormatError, match="magic"):
        read_dataset(path)


def test_truncated_file_rejected(tmp_path):
    ds = synth_exponential(3, 10, 5.0, 4, seed=0, test_per_class=2)
    path = tmp_path / "t.ltds"
    write_dataset(ds, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-10])
    with pytest.raises(DatasetFormatError, match="truncated"):
        read_dataset(path)


def test_count_mismatch_names_expected_and_actual(tmp_path):
    ds = synth_exponential(3, 10, 5.0, 4, seed=0, test_per_class=2)
    path = tmp_path / "m.ltds"
    write_dataset(ds, path)
    blob = bytearray(path.read_bytes())
    # first train row's label lives right after the header
    header = 4 + 4 + 8 + 4 + 4 + 3 * 8 + 8
    assert blob[header] == 0
    blob[header] = 1  # now class 0 is short one row and class 1 has an extra
    path.write_bytes(bytes(blob))
    with pytest.raises(DatasetFormatError, match="expected"):
        read_dataset(path)


def test_non_finite_feature_rejected(tmp_path):
    ds = synth_exponential(3, 10, 5.0, 4, seed=0, test_per_class=2)
    path = tmp_path / "n.ltds"
    write_dataset(ds, path)
    blob = bytearray(path.read_bytes())
    header = 4 + 4 + 8 + 4 + 4 + 3 * 8 + 8
    import struct as _struct
    blob[header + 4:header + 12] = _struct.pack("<d", float("nan"))
    path.write_bytes(bytes(blob))
    with pytest.raises(DatasetFormatError, match="row 0"):
        read_dataset(path)


def test_header_row_count_mismatch_rejected(tmp_path):
    ds = synth_exponential(3, 10, 5.0, 4, seed=0, test_per_class=2)
    path = tmp_path / "h.ltds"
    write_dataset(ds, path)
    blob = bytearray(path.read_bytes())
    import struct as _struct
    blob[8:16] = _struct.pack("<Q", 9999)
    path.write_bytes(bytes(blob))
    with pytest.raises(DatasetFormatError, match="9999"):
        read_dataset(path)


def test_in_memory_count_validation():
    feats = np.zeros((5, 2))
    labels = np.array([0, 0, 1, 0, 1])
    with pytest.raises(ConfigurationError):
        LongTailedDataset(feats, labels, np.array([3, 2]), test_per_class=1)
