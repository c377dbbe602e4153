"""Time-correlated MIMO-NOMA uplink channel and zero-forcing detection.

Each active vehicle owns one column of the N x M channel matrix. A column is
small-scale Rayleigh fading (unit-variance complex normal entries, evolving as
a first-order autoregression with Jakes correlation) scaled by the square root
of the distance path loss. The base station separates users with the
pseudo-inverse of the channel, so a user's SINR is its transmit power over the
noise amplified by its detector row.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from vecnoma.errors import SingularChannelError
from vecnoma.scenario import VehiclePose

COND_LIMIT = 1e12
_SERIES_LIMIT = 12.0


def bessel_j0(x: float) -> float:
    """Zeroth-order Bessel function of the first kind.

    Power series up to |x| = 12, Hankel asymptotic expansion beyond that.
    """
    x = abs(float(x))
    if x <= _SERIES_LIMIT:
        q = -0.25 * x * x
        term = 1.0
        total = 1.0
        k = 0
        while True:
            k += 1
            term *= q / (k * k)
            total += term
            if abs(term) < 1e-17 and k > 2:
                return total
    # asymptotic: sqrt(2/(pi x)) * (P cos(chi) - Q sin(chi)); q_sum holds -Q
    chi = x - math.pi / 4
    p_sum, q_sum = 0.0, 0.0
    a = 1.0
    k = 0
    while k < 60:
        nxt = a * (2 * k + 1) ** 2 / ((k + 1) * 8.0 * x)
        if abs(nxt) > abs(a):
            break
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2 == 0:
            p_sum += sign * a
        else:
            q_sum += sign * a
        a = nxt
        k += 1
    return math.sqrt(2.0 / (math.pi * x)) * (p_sum * math.cos(chi) + q_sum * math.sin(chi))


def path_loss(vu_pos, bs_pos, ref_gain: float, exponent: float) -> float:
    dist = float(np.linalg.norm(np.asarray(vu_pos, float) - np.asarray(bs_pos, float)))
    if dist == 0.0:
        raise ValueError("path loss undefined at zero distance")
    return ref_gain / dist**exponent


def doppler_cosine(pose: VehiclePose, bs_pos) -> float:
    """Cosine of the angle between travel direction (+x) and the uplink direction."""
    diff = np.asarray(bs_pos, float) - pose.position
    return float(diff[0] / np.linalg.norm(diff))


def doppler_correlation(pose: VehiclePose, bs_pos, wavelength: float, slot_duration: float) -> float:
    f_d = pose.velocity / wavelength * doppler_cosine(pose, bs_pos)
    return bessel_j0(2.0 * math.pi * f_d * slot_duration)


@dataclass
class SmallScaleState:
    h: np.ndarray  # complex, antennas x users
    rho: np.ndarray  # one correlation per user

    def __post_init__(self) -> None:
        self.rho = np.asarray(self.rho, dtype=float).reshape(-1)
        if self.h.ndim != 2 or self.h.shape[1] != self.rho.size:
            raise ValueError("need one correlation coefficient per channel column")
        if np.any(np.abs(self.rho) > 1.0):
            raise ValueError("|rho| must not exceed 1")


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric CN(0, 1) draws; real and imaginary parts each N(0, 1/2)."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * math.sqrt(0.5)


def evolve_small_scale(state: SmallScaleState, rng: np.random.Generator,
                       innovation: np.ndarray | None = None) -> SmallScaleState:
    e = complex_normal(rng, state.h.shape) if innovation is None else innovation
    rho = state.rho
    h = state.h * rho + e * np.sqrt(1.0 - rho * rho)
    return SmallScaleState(h=h, rho=rho.copy())


def compose_channel(small_scale: np.ndarray, path_losses) -> np.ndarray:
    pl = np.asarray(path_losses, dtype=float).reshape(-1)
    if small_scale.shape[1] != pl.size:
        raise ValueError("one path loss per channel column")
    return small_scale * np.sqrt(pl)[None, :]


def complex_inverse(a: np.ndarray, cond_limit: float = COND_LIMIT) -> np.ndarray:
    """Gauss-Jordan inverse with partial pivoting.

    Raises SingularChannelError when a pivot vanishes or the 1-norm
    condition number exceeds ``cond_limit``.
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("square matrix required")
    aug = np.concatenate([a, np.eye(n, dtype=complex)], axis=1)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[piv, col] == 0:
            raise SingularChannelError("zero pivot in Gram matrix")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= factors[:, None] * aug[col][None, :]
    inv = aug[:, n:]
    cond = np.abs(a).sum(axis=0).max() * np.abs(inv).sum(axis=0).max()
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularChannelError(f"Gram matrix condition {cond:.3g} exceeds {cond_limit:g}")
    return inv


def zf_detector(H: np.ndarray, cond_limit: float = COND_LIMIT) -> tuple[np.ndarray, np.ndarray]:
    """Pseudo-inverse detector G = (H^H H)^-1 H^H and squared norms of its rows.

    Forming the Gram matrix squares the condition number, so one Newton-Schulz
    step G <- G (2I - H G) is applied to pull the error back to the order of
    cond(H) * eps.
    """
    n, m = H.shape
    if m > n:
        raise SingularChannelError(f"{m} users cannot be separated by {n} antennas")
    Hh = H.conj().T
    G = complex_inverse(Hh @ H, cond_limit) @ Hh
    G = 2.0 * G - (G @ H) @ G
    g_norm_sq = (G.real**2 + G.imag**2).sum(axis=1)
    return G, g_norm_sq


def sinr(p_o: float, g_norm_sq: float, noise_power: float) -> float:
    return p_o / (g_norm_sq * noise_power)


@dataclass(frozen=True)
class ChannelSnapshot:
    H: np.ndarray
    G: np.ndarray
    g_norm_sq: np.ndarray
    sinr: np.ndarray  # at the powers passed to ``snapshot``


def snapshot(H: np.ndarray, powers: Sequence[float], noise_power: float) -> ChannelSnapshot:
    G, g_norm_sq = zf_detector(H)
    return ChannelSnapshot(H=H, G=G, g_norm_sq=g_norm_sq,
                           sinr=np.asarray(powers, float) / (g_norm_sq * noise_power))


def write_channel_trace(path: str | Path, rows: Iterable[dict], num_antennas: int) -> None:
    """CSV with slot, per-user detector norms and correlations, and the target SINR.

    Each row dict holds ``slot``, ``g_norm_sq`` (sequence), ``rho`` (sequence)
    and ``target_sinr``. Columns for users absent in a slot are left empty.
    """
    header = (["slot"] + [f"g_norm_sq_{i}" for i in range(num_antennas)]
              + [f"rho_{i}" for i in range(num_antennas)] + ["target_sinr"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            g = [repr(float(v)) for v in row["g_norm_sq"]]
            r = [repr(float(v)) for v in row["rho"]]
            pad = lambda xs: xs + [""] * (num_antennas - len(xs))  # noqa: E731
            writer.writerow([row["slot"]] + pad(g) + pad(r) + [repr(float(row["target_sinr"]))])
