"""Benchmark detectors sharing the channel and frame stack.

All four assume user activity is known; the synchronized ones additionally
receive the true delays. Each consumes the identical scenario (same photon
counts) as the proposed receiver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simulate import Scenario, SchemeResult, _mud_on, _score, oracle_frames

BASELINE_TAGS = ("perfect_sync", "without_sync", "mmse_nosync", "gaussian_approx_sync")


@dataclass(frozen=True)
class BaselineKind:
    tag: str

    def __post_init__(self) -> None:
        if self.tag not in BASELINE_TAGS:
            raise ValueError(f"unknown baseline {self.tag!r}")


def detect_perfect_sync(sc: Scenario, collect_iterations: bool = False) -> SchemeResult:
    """Iterative MUD with oracle delays and activity."""
    res = SchemeResult(active_frames=int(sc.active.sum()))
    mud_res = _mud_on(sc, oracle_frames(sc, sc.delays), collect_iterations)
    _score(sc, mud_res, list(mud_res.bits.keys()), res)
    return res


def detect_without_sync(sc: Scenario) -> SchemeResult:
    """Iterative MUD with no delay estimation: every frame assumed aligned to
    its nominal window."""
    res = SchemeResult(active_frames=int(sc.active.sum()))
    mud_res = _mud_on(sc, oracle_frames(sc, np.zeros(sc.cfg.K, dtype=np.int64)))
    _score(sc, mud_res, list(mud_res.bits.keys()), res)
    return res


def snr_proxy(n_s: float, n_b: float) -> float:
    """Approximate SNR of the Poisson channel: n_s / sqrt(n_s/2 + n_b)."""
    return float(n_s / np.sqrt(n_s / 2.0 + n_b))


def detect_mmse(sc: Scenario) -> SchemeResult:
    """Per-slot scalar Wiener chip estimate, other users treated as noise via
    the SNR proxy, no delay compensation, majority despreading."""
    cfg = sc.cfg
    lay = cfg.layout
    res = SchemeResult(active_frames=int(sc.active.sum()))
    amp = sc.n_s * sc.gain_hat
    for k in range(cfg.K):
        for j in range(cfg.frames):
            if not sc.active[k, j]:
                continue
            start = j * lay.L_s  # no delay compensation
            chips = sc.counts[start + lay.L_p : start + lay.L_p + lay.L_c]
            A = amp[k, j]
            others = sum(0.5 * amp[k2, j] for k2 in range(cfg.K) if k2 != k and sc.active[k2, j])
            mean_r = cfg.params.n_b + others + 0.5 * A
            gamma = snr_proxy(A, cfg.params.n_b + others)
            noise_var = (A / gamma) ** 2
            w = 0.25 * A / (0.25 * A**2 + noise_var)
            soft = 0.5 + w * (chips - mean_r)
            coded = sc.interleavers[k].deinterleave(soft)
            votes = (coded.reshape(lay.n_coded_bits, lay.N_c) > 0.5).sum(axis=1)
            hard = (votes * 2 > lay.N_c).astype(np.int8)[: lay.L_b]
            truth = sc.data[(k, j)]
            res.errors += int(np.sum(hard != truth))
            res.bits += truth.size
            res.frames_decoded += 1
    return res


def detect_gaussian_approx(sc: Scenario) -> SchemeResult:
    """Known delays; aggregate interference plus background modeled as a
    Gaussian with moment-matched mean and variance equal to that mean
    (prior ones-density 0.5), single pass, despread-sum decision."""
    cfg = sc.cfg
    lay = cfg.layout
    res = SchemeResult(active_frames=int(sc.active.sum()))
    amp = sc.n_s * sc.gain_hat
    for k in range(cfg.K):
        for j in range(cfg.frames):
            if not sc.active[k, j]:
                continue
            start = int(round(float(sc.delays[k]))) + j * lay.L_s
            chips = sc.counts[start + lay.L_p : start + lay.L_p + lay.L_c]
            A = amp[k, j]
            mui = sum(0.5 * amp[k2, j] for k2 in range(cfg.K) if k2 != k and sc.active[k2, j])
            mu0 = cfg.params.n_b + mui
            mu1 = mu0 + A
            llr = (
                -0.5 * np.log(mu1 / mu0)
                - (chips - mu1) ** 2 / (2.0 * mu1)
                + (chips - mu0) ** 2 / (2.0 * mu0)
            )
            coded = sc.interleavers[k].deinterleave(llr)
            post = coded.reshape(lay.n_coded_bits, lay.N_c).sum(axis=1)
            hard = (post > 0).astype(np.int8)[: lay.L_b]
            truth = sc.data[(k, j)]
            res.errors += int(np.sum(hard != truth))
            res.bits += truth.size
            res.frames_decoded += 1
    return res
