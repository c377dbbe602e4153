import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import j0 as scipy_j0

from vecnoma import channel as ch
from vecnoma.errors import SingularChannelError
from vecnoma.scenario import VehiclePose, bs_position, entry_pose


@pytest.mark.parametrize("x, expected", [
    (0.0, 1.0),
    (1.0, 0.765197686557967),
    (5.0, -0.177596771314338),
    (2.404825557695773, 0.0),  # first zero
])
def test_bessel_values(x, expected):
    assert ch.bessel_j0(x) == pytest.approx(expected, abs=1e-13)


@given(st.floats(0.0, 60.0))
def test_bessel_matches_scipy(x):
    assert abs(ch.bessel_j0(x) - scipy_j0(x)) < 1e-11


@given(st.floats(-30.0, 30.0))
def test_bessel_even(x):
    assert ch.bessel_j0(-x) == ch.bessel_j0(x)


def test_entry_correlation(cfg):
    pose = entry_pose(2, cfg)
    assert ch.doppler_cosine(pose, bs_position(cfg)) == pytest.approx(0.9984038297885897, rel=1e-14)
    rho = ch.doppler_correlation(pose, bs_position(cfg), cfg.wavelength, cfg.slot_duration)
    assert rho == pytest.approx(0.9504318680184126, abs=1e-13)
    oracle = float(mpmath.besselj(0, 2 * math.pi * 25 / 7 * 0.9984038297885897 * 0.02))
    assert rho == pytest.approx(oracle, abs=1e-13)


def test_correlation_is_one_abeam(cfg):
    pose = VehiclePose(2, 0.0, 10.0, 25.0)
    assert ch.doppler_correlation(pose, bs_position(cfg), cfg.wavelength, cfg.slot_duration) == 1.0


def test_path_loss(cfg):
    pl = ch.path_loss(entry_pose(2, cfg).position, bs_position(cfg), cfg.ref_gain, 2.0)
    assert pl == pytest.approx(1.594896331738437e-08, rel=1e-13)
    with pytest.raises(ValueError):
        ch.path_loss([0, 0, 10], [0, 0, 10], 1e-3, 2.0)


def test_ar1_keeps_unit_variance(rng):
    state = ch.SmallScaleState(ch.complex_normal(rng, (4, 1)), np.array([0.9]))
    xs = []
    for _ in range(20000):
        state = ch.evolve_small_scale(state, rng)
        xs.append(state.h[:, 0])
    xs = np.array(xs)
    assert np.mean(np.abs(xs) ** 2) == pytest.approx(1.0, rel=0.05)


def test_rho_one_freezes_channel(rng):
    h = ch.complex_normal(rng, (4, 2))
    state = ch.evolve_small_scale(ch.SmallScaleState(h, np.ones(2)), rng)
    np.testing.assert_array_equal(state.h, h)


def test_invalid_rho():
    with pytest.raises(ValueError):
        ch.SmallScaleState(np.zeros((4, 1), complex), np.array([1.5]))


@given(m=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_zf_inverts(m, seed):
    rng = np.random.default_rng(seed)
    H = ch.complex_normal(rng, (4, m)) * rng.uniform(0.1, 10.0, size=m)
    G, g = ch.zf_detector(H)
    np.testing.assert_allclose(G @ H, np.eye(m), atol=1e-9)
    np.testing.assert_allclose(g, np.real(np.diag(np.linalg.inv(H.conj().T @ H))), rtol=1e-9)


def test_zf_single_user_is_matched_filter(rng):
    h = ch.complex_normal(rng, (4, 1))
    _, g = ch.zf_detector(h)
    assert g[0] == pytest.approx(1.0 / np.sum(np.abs(h) ** 2), rel=1e-12)


def test_interferer_scaling_leaves_target_norm(rng):
    # column scaling of other users does not change the target row of G
    H = ch.complex_normal(rng, (4, 4))
    _, g1 = ch.zf_detector(H)
    _, g2 = ch.zf_detector(H * np.array([1.0, 1e-3, 1e2, 7.0]))
    assert g2[0] == pytest.approx(g1[0], rel=1e-9)


def test_singular_channel_rejected(rng):
    h = ch.complex_normal(rng, (4, 1))
    with pytest.raises(SingularChannelError):
        ch.zf_detector(np.hstack([h, 2 * h]))


def test_complex_inverse(rng):
    a = ch.complex_normal(rng, (5, 5))
    np.testing.assert_allclose(ch.complex_inverse(a) @ a, np.eye(5), atol=1e-12)


def test_sinr_and_snapshot(rng):
    assert ch.sinr(1.0, 2.0, 1e-9) == pytest.approx(5e8)
    H = ch.compose_channel(ch.complex_normal(rng, (4, 2)), [1e-6, 1e-7])
    snap = ch.snapshot(H, [1.0, 0.5], 1e-9)
    np.testing.assert_allclose(snap.sinr, [1.0, 0.5] / (snap.g_norm_sq * 1e-9))


def test_channel_trace_csv(tmp_path):
    rows = [{"slot": 1, "g_norm_sq": [1.0, 2.0], "rho": [0.9, 1.0], "target_sinr": 3.5}]
    path = tmp_path / "c.csv"
    ch.write_channel_trace(path, rows, 4)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("slot,g_norm_sq_0,g_norm_sq_1")
    assert len(lines) == 2


def test_zf_scalar_pseudo_inverse():
    H = np.zeros((4, 1), complex)
    H[0, 0] = 2.0
    G, g = ch.zf_detector(H)
    np.testing.assert_allclose(G, [[0.5, 0, 0, 0]], atol=1e-15)
    assert g[0] == pytest.approx(0.25)


def test_zf_orthonormal_columns(rng):
    q, _ = np.linalg.qr(ch.complex_normal(rng, (4, 3)))
    G, g = ch.zf_detector(q)
    np.testing.assert_allclose(G, q.conj().T, atol=1e-14)
    np.testing.assert_allclose(g, 1.0, rtol=1e-13)


def test_extra_user_never_helps_target(rng):
    for _ in range(1000):
        m = int(rng.integers(1, 4))
        H = ch.complex_normal(rng, (4, m))
        extra = np.hstack([H, ch.complex_normal(rng, (4, 1))])
        assert ch.zf_detector(extra)[1][0] >= ch.zf_detector(H)[1][0] * (1 - 1e-12)


def test_compose_channel_scales_columns():
    h = np.eye(4, 2, dtype=complex)
    np.testing.assert_allclose(ch.compose_channel(h, [4.0, 1.0])[:, 0], [2, 0, 0, 0])
