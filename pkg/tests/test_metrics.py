import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from creasegen import metrics
from creasegen.errors import NumericalError, ValidationError
from creasegen.metrics import FeatureSet, GaussianStats, ScoreSet


# --- SSIM -------------------------------------------------------------------

def _pair32(seed=0):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (32, 32)).astype(np.uint8)
    yy, xx = np.mgrid[0:32, 0:32]
    b = np.clip(a * 0.6 + 40 * np.sin(xx / 4.0) + 60, 0, 255).astype(np.uint8)
    return a, b


def test_ssim_reflexive_and_symmetric():
    a, b = _pair32()
    assert metrics.ssim(a, a) == 1.0
    assert metrics.ssim(a, b) == metrics.ssim(b, a)
    assert -1 <= metrics.ssim(a, b) <= 1


@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_window_oracle(seed):
    a, b = _pair32(seed)
    assert abs(metrics.ssim(a, b) - oracles.ssim_windows(a, b)) < 1e-10


def test_ssim_errors():
    with pytest.raises(ValidationError):
        metrics.ssim(np.zeros((20, 20)), np.zeros((20, 21)))
    with pytest.raises(ValidationError):
        metrics.ssim(np.zeros((10, 20)), np.zeros((10, 20)))


def test_intra_subject_ssim_identical_poses():
    a, b = _pair32()
    assert metrics.intra_subject_ssim({"x": [a, a, a], "y": [b, b]}) == 1.0


def test_intra_subject_ssim_hand_aggregation(caplog):
    a, b = _pair32(1)
    c, d = _pair32(2)
    s_ab, s_ac, s_cd = metrics.ssim(a, b), metrics.ssim(a, c), metrics.ssim(c, d)
    with caplog.at_level(logging.WARNING):
        got = metrics.intra_subject_ssim({"p": [a, b, c], "q": [c, d], "single": [a]})
    assert got == pytest.approx(((s_ab + s_ac) / 2 + s_cd) / 2, abs=1e-15)
    assert "single" in caplog.text
    with pytest.raises(ValidationError):
        metrics.intra_subject_ssim({"s": [a]})


# --- diversity --------------------------------------------------------------

def test_diversity_examples():
    assert metrics.diversity(FeatureSet(np.ones((4, 3)), ("a", "a", "b", "b"))) == 0.0
    assert metrics.diversity(FeatureSet(np.array([[0, 0], [3, 4]]), ("g", "g"))) == 5.0


@given(st.lists(st.floats(-100, 100), min_size=9, max_size=9))
def test_diversity_three_rows_brute_force(vals):
    rows = np.array(vals).reshape(3, 3)
    pairs = [np.linalg.norm(rows[i] - rows[j]) for i in range(3) for j in range(i + 1, 3)]
    got = metrics.diversity(FeatureSet(rows, ("g",) * 3))
    assert got == pytest.approx(np.mean(pairs), rel=1e-12, abs=1e-12)


def test_diversity_skips_small_groups(caplog):
    fs = FeatureSet(np.array([[0, 0], [3, 4], [9, 9]]), ("g", "g", "lonely"))
    with caplog.at_level(logging.WARNING):
        assert metrics.diversity(fs) == 5.0
    assert "lonely" in caplog.text


def test_pixel_features():
    img = np.zeros((32, 32), np.uint8)
    img[:16, :16] = 255
    np.testing.assert_array_equal(metrics.pixel_features(img, 16), [255, 0, 0, 0])
    np.testing.assert_array_equal(metrics.pixel_features(img, 1), img.ravel())
    with pytest.raises(ValidationError):
        metrics.pixel_features(img, 5)


# --- Frechet ----------------------------------------------------------------

def test_gaussian_stats_examples():
    s = metrics.gaussian_stats(np.full((5, 3), 2.0))
    np.testing.assert_array_equal(s.cov, 0.0)
    h = metrics.gaussian_stats(np.array([[1.0, 2.0], [3.0, 6.0], [5.0, 4.0]]))
    np.testing.assert_allclose(h.mean, [3.0, 4.0])
    np.testing.assert_allclose(h.cov, [[4.0, 2.0], [2.0, 4.0]])
    r = metrics.gaussian_stats(np.random.default_rng(0).normal(size=(50, 6)))
    np.testing.assert_array_equal(r.cov, r.cov.T)
    with pytest.raises(ValidationError):
        metrics.gaussian_stats(np.zeros((1, 3)))


def test_frechet_examples():
    one = GaussianStats([0.0], [[1.0]], 10)
    three = GaussianStats([3.0], [[1.0]], 10)
    assert metrics.frechet_distance(one, three) == 9.0
    r = metrics.gaussian_stats(np.random.default_rng(1).normal(size=(200, 8)))
    assert abs(metrics.frechet_distance(r, r)) < 1e-8


@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6), st.lists(st.floats(0.01, 9), min_size=6, max_size=6))
def test_frechet_diagonal_closed_form(mus, vs):
    m1, m2 = np.array(mus[:3]), np.array(mus[3:])
    v1, v2 = np.array(vs[:3]), np.array(vs[3:])
    got = metrics.frechet_distance(GaussianStats(m1, np.diag(v1), 2), GaussianStats(m2, np.diag(v2), 2))
    ref = np.sum((m1 - m2) ** 2 + (np.sqrt(v1) - np.sqrt(v2)) ** 2)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-9)


@given(st.integers(0, 2 ** 32))
def test_frechet_symmetric(seed):
    rng = np.random.default_rng(seed)
    a = metrics.gaussian_stats(rng.normal(size=(30, 4)))
    b = metrics.gaussian_stats(rng.normal(1.0, 2.0, size=(30, 4)))
    assert metrics.frechet_distance(a, b) == pytest.approx(metrics.frechet_distance(b, a), rel=1e-9)


def test_frechet_errors():
    with pytest.raises(ValidationError):
        metrics.frechet_distance(GaussianStats([0.0], [[1.0]], 2), GaussianStats([0.0, 0.0], np.eye(2), 2))
    with pytest.raises(ValidationError):
        GaussianStats([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]], 2)
    with pytest.raises(NumericalError):
        metrics.trace_sqrt_product(np.diag([1.0, -1.0]), np.eye(2))


# --- verification -----------------------------------------------------------

def test_eer_examples():
    assert metrics.eer(ScoreSet([0.9, 0.8], [0.1, 0.2]))[0] == 0.0
    assert metrics.eer(ScoreSet([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]))[0] == 0.5
    g, i = [0.9, 0.8, 0.4], [0.7, 0.3, 0.2]
    assert metrics.eer(ScoreSet(g, i)) == oracles.eer_sweep(g, i)


def _random_scores(rng, size):
    ng, ni = max(1, size // 3), size
    genuine = np.round(rng.normal(1.0, 1.0, ng), int(rng.integers(1, 4)))
    impostor = np.round(rng.normal(0.0, 1.0, ni), int(rng.integers(1, 4)))
    return genuine.tolist(), impostor.tolist()


@pytest.mark.parametrize("seed", range(8))
def test_eer_tmr_match_sweep(seed):
    rng = np.random.default_rng(seed)
    g, i = _random_scores(rng, int(rng.integers(10, 400)))
    s = ScoreSet(g, i)
    assert metrics.eer(s) == oracles.eer_sweep(g, i)
    for target in (0.001, 0.01, 0.1, 0.5):
        assert metrics.tmr_at_fmr(s, target) == oracles.tmr_sweep(g, i, target)


def test_tmr_separated_and_designed_case():
    assert metrics.tmr_at_fmr(ScoreSet([5, 6, 7], [1, 2, 3]), 0.0001) == 1.0
    rng = np.random.default_rng(3)
    genuine = rng.uniform(0.5, 1.0, 200).tolist()
    impostor = (rng.uniform(0.0, 0.4, 10_000 - 10).tolist() + rng.uniform(0.6, 0.9, 10).tolist())
    s = ScoreSet(genuine, impostor)
    assert metrics.tmr_at_fmr(s, 0.001) == oracles.tmr_sweep(genuine, impostor, 0.001)


@given(st.integers(0, 2 ** 32))
def test_tmr_monotone_in_target(seed):
    g, i = _random_scores(np.random.default_rng(seed), 60)
    s = ScoreSet(g, i)
    vals = [metrics.tmr_at_fmr(s, f) for f in (0.001, 0.01, 0.05, 0.2, 0.5, 0.9)]
    assert vals == sorted(vals)


@given(st.integers(0, 2 ** 32))
def test_rank_invariance(seed):
    g, i = _random_scores(np.random.default_rng(seed), 50)
    a, b = ScoreSet(g, i), ScoreSet(np.exp(g) * 3 + 1, np.exp(i) * 3 + 1)
    assert metrics.eer(a)[0] == metrics.eer(b)[0]
    assert metrics.tmr_at_fmr(a, 0.1) == metrics.tmr_at_fmr(b, 0.1)


def test_det_curve():
    sep = metrics.det_curve(ScoreSet([5, 6, 7], [1, 2, 3]), 50)
    assert any(f == 0.0 for f, _ in sep) and any(n == 0.0 for _, n in sep)
    same = metrics.det_curve(ScoreSet(list(range(100)), list(range(100))), 200)
    assert min(abs(f - 0.5) + abs(n - 0.5) for f, n in same) < 0.03
    g, i = [0.9, 0.8, 0.4, 0.4], [0.7, 0.3, 0.2, 0.4]
    assert metrics.det_curve(ScoreSet(g, i), 100) == oracles.det_sweep(g, i)


@given(st.integers(0, 2 ** 32), st.integers(2, 40))
def test_det_monotone_and_downsampled(seed, n_points):
    g, i = _random_scores(np.random.default_rng(seed), 120)
    curve = metrics.det_curve(ScoreSet(g, i), n_points)
    assert len(curve) <= n_points
    fmr = [p[0] for p in curve]
    fnmr = [p[1] for p in curve]
    assert fmr == sorted(fmr)
    assert all(b <= a for a, b in zip(fnmr, fnmr[1:]))
    full = oracles.det_sweep(g, i)
    assert curve[0] == full[0] and curve[-1] == full[-1]


def test_score_errors():
    with pytest.raises(ValidationError):
        ScoreSet([], [1.0])
    with pytest.raises(ValidationError):
        ScoreSet([1.0], [float("nan")])
    with pytest.raises(ValidationError):
        metrics.tmr_at_fmr(ScoreSet([1.0], [0.0]), 1.0)
    with pytest.raises(ValidationError):
        metrics.det_curve(ScoreSet([1.0], [0.0]), 1)


# --- files ------------------------------------------------------------------

def test_score_file_round_trip(tmp_path):
    p = tmp_path / "s.csv"
    metrics.write_scores([0.9, 0.1], [0.3], p)
    s = metrics.read_scores(p)
    assert s.genuine.tolist() == [0.1, 0.9] and s.impostor.tolist() == [0.3]
    (tmp_path / "bad.csv").write_text("label,score\nfoo,1\n")
    with pytest.raises(ValidationError):
        metrics.read_scores(tmp_path / "bad.csv")
    (tmp_path / "hdr.csv").write_text("a,b\n")
    with pytest.raises(ValidationError):
        metrics.read_scores(tmp_path / "hdr.csv")


def test_feature_file_round_trip(tmp_path):
    fs = FeatureSet(np.array([[1.5, 2.0], [3.0, -1.0]]), ("a", "b"))
    metrics.write_features(fs, tmp_path / "f.csv")
    back = metrics.read_features(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.rows, fs.rows)
    assert back.group_ids == ("a", "b")
    (tmp_path / "bad.csv").write_text("id,f1\nx,1\n")
    with pytest.raises(ValidationError):
        metrics.read_features(tmp_path / "bad.csv")


def test_det_file(tmp_path):
    metrics.write_det([(0.0, 1.0), (0.5, 0.25)], tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines() == ["fmr,fnmr", "0.0,1.0", "0.5,0.25"]
