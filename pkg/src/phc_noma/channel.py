"""Asynchronous superposition of delayed user frames and Poisson observation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .framing import FrameLayout
from .model import UserProfile, sample_poisson


@dataclass
class Timeline:
    """Receiver-side view of one trial.

    rates: expected photons per slot; counts: observed photo-electrons;
    true_delays: per-user slot delays; frame_starts: [K, J] start slot of
    each user frame (consecutive frames are exactly L_s apart)."""

    rates: np.ndarray
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]
    true_delays: np.ndarray = field(default=None)  # type: ignore[assignment]
    frame_starts: np.ndarray = field(default=None)  # type: ignore[assignment]


def sample_delays(rng: np.random.Generator, profiles: list[UserProfile], L_s: int) -> np.ndarray:
    """Integer slot delays: round(Normal(mean, std^2)) clamped to [0, L_s)."""
    out = np.empty(len(profiles), dtype=np.int64)
    for i, p in enumerate(profiles):
        if p.delay_std < 0:
            raise ValueError("delay_std must be non-negative")
        xi = rng.normal(p.delay_mean, p.delay_std) if p.delay_std > 0 else p.delay_mean
        out[i] = int(np.clip(round(xi), 0, L_s - 1))
    return out


def superpose(
    frames,  # frames[k][j] -> symbol array of length L_s, or None when silent
    delays: np.ndarray,
    gains: np.ndarray,  # [K, J] effective per-frame gains (alpha folded in by None frames)
    n_s: float,
    n_b: float,
    layout: FrameLayout,
    total_len: int | None = None,
) -> np.ndarray:
    """Expected-photon timeline n_b + n_s * sum_k G_k(j) * s_k(l - xi_k)."""
    K = len(frames)
    J = max(len(f) for f in frames) if K else 0
    L_s = layout.L_s
    T = total_len if total_len is not None else (int(np.max(delays)) if K else 0) + (J + 1) * L_s
    rates = np.full(T, float(n_b))
    for k in range(K):
        for j, sym in enumerate(frames[k]):
            if sym is None:
                continue
            s0 = int(delays[k]) + j * L_s
            rates[s0 : s0 + L_s] += n_s * gains[k, j] * sym
    return rates


def observe(rng: np.random.Generator, rates: np.ndarray) -> np.ndarray:
    """Independent Poisson draw per slot."""
    if np.any(np.asarray(rates) < 0):
        raise ValueError("rates must be non-negative")
    return sample_poisson(rng, rates)


def apply_csi_error(rng: np.random.Generator, G, A: float, B: float):
    """Receiver gain estimate G_hat = G + eps with eps ~ Normal(0, ((B*G)^A)^2).

    B = 0 reproduces perfect CSI exactly; the estimate is floored at 1e-9*G
    so downstream normalizations stay positive."""
    G = np.asarray(G, dtype=float)
    if B < 0:
        raise ValueError("B must be non-negative")
    if B == 0.0:
        return G.copy()
    psi = (B * G) ** A
    eps = rng.normal(0.0, 1.0, G.shape) * psi
    return np.maximum(G + eps, 1e-9 * G)
