"""Estimation bounds, EXIT-chart machinery, and run metrics.

The delay-estimation bound assumes the transmitted symbols are known and
shapes them with a root-raised-cosine pulse so the waveform is
differentiable; interference that the receiver can predict may be folded
into the background rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# ---------------------------------------------------------------------------
# root-raised-cosine pulse and Fisher information
# ---------------------------------------------------------------------------

def _rrc(t, beta: float):
    """Root-raised-cosine pulse, unit symbol period, peak 1 + beta(4/pi - 1)."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    eps = 1e-9
    at = np.abs(t)
    center = at < eps
    singular = np.abs(at - 1.0 / (4.0 * beta)) < eps
    general = ~(center | singular)
    out[center] = 1.0 + beta * (4.0 / np.pi - 1.0)
    out[singular] = (
        beta
        / np.sqrt(2.0)
        * (
            (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
            + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
        )
    )
    tg = t[general]
    num = np.sin(np.pi * tg * (1.0 - beta)) + 4.0 * beta * tg * np.cos(np.pi * tg * (1.0 + beta))
    den = np.pi * tg * (1.0 - (4.0 * beta * tg) ** 2)
    out[general] = num / den
    return out


def _rrc_deriv(t, beta: float, h: float = 1e-5):
    return (_rrc(np.asarray(t) + h, beta) - _rrc(np.asarray(t) - h, beta)) / (2.0 * h)


@dataclass
class PulseModel:
    """Known-symbol waveform for the delay bound.

    amplitude is the expected per-slot signal count n_s (times gain);
    background is the effective non-signal rate per slot, which may include
    predictable multi-user interference."""

    symbols: np.ndarray
    amplitude: float
    background: float
    beta: float = 0.25
    span: int = 8
    oversampling: int = 16

    def __post_init__(self) -> None:
        if self.oversampling < 8:
            raise ValueError("oversampling must be >= 8")
        if self.background <= 0:
            raise ValueError("background rate must be positive")

    def waveform(self, xi: float) -> tuple[np.ndarray, np.ndarray]:
        """(s, s') on the oversampled time grid for a delay of xi slots; the
        composed waveform is clipped at 0 and the derivative zeroed there.

        The root-raised-cosine spectrum extends past the slot Nyquist rate,
        so evaluating the information sum on sub-slot samples (scaled by the
        bin width) keeps it invariant under fractional delays."""
        syms = np.asarray(self.symbols, dtype=float)
        L = len(syms)
        os = self.oversampling
        grid = (np.arange(L * os, dtype=float) + 0.5) / os - xi
        s = np.zeros(L * os)
        sp = np.zeros(L * os)
        for i in np.flatnonzero(syms):
            t = grid - i
            near = np.abs(t) <= self.span
            s[near] += _rrc(t[near], self.beta)
            sp[near] += _rrc_deriv(t[near], self.beta)
        clipped = s <= 0.0
        s[clipped] = 0.0
        sp[clipped] = 0.0
        return s, sp

    def bin_rates(self, xi: float) -> np.ndarray:
        """Expected counts per sub-slot observation bin."""
        s, _ = self.waveform(xi)
        return (self.background + self.amplitude * s) / self.oversampling


def fisher_information(pulse: PulseModel, xi: float) -> float:
    """I(xi) = sum over the frame of (n_s s'(t-xi))^2 / (n_b + n_s s(t-xi)),
    evaluated as a sub-slot quadrature (one term per observation bin)."""
    s, sp = pulse.waveform(xi)
    n_s = pulse.amplitude
    return float(np.sum((n_s * sp) ** 2 / (pulse.background + n_s * s)) / pulse.oversampling)


def crlb(pulse: PulseModel, xi: float) -> float:
    """Variance lower bound 1/I(xi); +inf when the waveform carries no
    timing information."""
    info = fisher_information(pulse, xi)
    return float("inf") if info == 0.0 else 1.0 / info


def fisher_information_fd(
    pulse: PulseModel,
    xi: float,
    rng: np.random.Generator,
    n_traces: int = 100_000,
    h: float = 0.01,
) -> float:
    """Independent check of the Fisher information: negative curvature of the
    expected log-likelihood, estimated by central finite differences over
    Monte-Carlo traces drawn at the true delay.

    The same traces evaluate all three delay hypotheses (common random
    numbers), otherwise the curvature difference drowns in sampling noise."""
    rate0 = pulse.bin_rates(xi)
    log_rates = [np.log(pulse.bin_rates(xi + d)) for d in (-h, 0.0, h)]
    rate_sums = [pulse.bin_rates(xi + d).sum() for d in (-h, 0.0, h)]
    totals = np.zeros(3)
    block = 20_000
    done = 0
    while done < n_traces:
        b = min(block, n_traces - done)
        r = rng.poisson(rate0, size=(b, len(rate0)))
        for i in range(3):
            totals[i] += float(np.sum(r * log_rates[i]))
        done += b
    ll = totals / n_traces - np.asarray(rate_sums)
    return float(-(ll[2] - 2.0 * ll[1] + ll[0]) / h**2)


# ---------------------------------------------------------------------------
# mutual information and the J function
# ---------------------------------------------------------------------------

def mutual_information(llrs, symbols, n_bins: int = 200) -> float:
    """MI between binary symbols and their LLRs via histogram density
    estimates with add-one smoothing, clamped to [0, 1]."""
    llrs = np.asarray(llrs, dtype=float)
    symbols = np.asarray(symbols)
    if llrs.shape != symbols.shape:
        raise ValueError("llrs and symbols must align")
    m0, m1 = symbols == 0, symbols == 1
    if not (m0.any() and m1.any()):
        raise ValueError("need samples of both symbol classes")
    lo, hi = llrs.min(), llrs.max()
    if lo == hi:
        return 0.0
    edges = np.linspace(lo, hi, n_bins + 1)
    h0, _ = np.histogram(llrs[m0], bins=edges)
    h1, _ = np.histogram(llrs[m1], bins=edges)
    p0 = (h0 + 1.0) / (h0.sum() + n_bins)
    p1 = (h1 + 1.0) / (h1.sum() + n_bins)
    mix = 0.5 * (p0 + p1)
    mi = 0.5 * np.sum(p0 * np.log2(p0 / mix)) + 0.5 * np.sum(p1 * np.log2(p1 / mix))
    return float(np.clip(mi, 0.0, 1.0))


def j_function(sigma: float, n_points: int = 4001) -> float:
    """MI of a Gaussian-consistent LLR with std sigma and mean sigma^2/2,
    by numerical integration; 0 at sigma=0, 1 as sigma grows."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma < 1e-9:
        return 0.0
    mu = sigma**2 / 2.0
    x = np.linspace(mu - 10.0 * sigma, mu + 10.0 * sigma, n_points)
    pdf = np.exp(-((x - mu) ** 2) / (2.0 * sigma**2)) / (np.sqrt(2.0 * np.pi) * sigma)
    integrand = pdf * np.log2(1.0 + np.exp(-np.clip(x, -700, 700)))
    return float(np.clip(1.0 - np.trapezoid(integrand, x), 0.0, 1.0))


def j_inverse(i_a: float, tol: float = 1e-6) -> float:
    """Inverse of j_function by bisection."""
    if not 0.0 <= i_a < 1.0:
        raise ValueError("I_A must be in [0, 1)")
    if i_a == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while j_function(hi) < i_a:
        hi *= 2.0
        if hi > 1e3:  # pragma: no cover
            raise RuntimeError("J inverse out of range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if j_function(mid) < i_a:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gaussian_consistent_llrs(rng: np.random.Generator, symbols, sigma: float) -> np.ndarray:
    """Synthetic a-priori LLRs: mu*(2s-1) + Normal(0, sigma^2), mu = sigma^2/2."""
    symbols = np.asarray(symbols)
    mu = sigma**2 / 2.0
    return mu * (2.0 * symbols - 1.0) + rng.normal(0.0, sigma, symbols.shape)


@dataclass
class ExitCurve:
    i_a: np.ndarray
    i_e: np.ndarray

    def interp(self, x: float) -> float:
        return float(np.interp(x, self.i_a, self.i_e))


@dataclass
class ExitChart:
    detector: ExitCurve
    decoder: ExitCurve
    trajectory: list = field(default_factory=list)  # (I_A_det, I_E_det) alternation

    def run_trajectory(self, tol: float = 1e-3, max_steps: int = 20) -> list:
        """Alternate detector and decoder transfers until the MI gain per
        half-step falls below tol."""
        self.trajectory = []
        i_a = 0.0
        prev = -1.0
        for _ in range(max_steps):
            i_e_det = self.detector.interp(i_a)
            self.trajectory.append((i_a, i_e_det))
            i_e_dec = self.decoder.interp(i_e_det)
            self.trajectory.append((i_e_dec, i_e_det))
            if abs(i_e_dec - prev) < tol:
                break
            prev, i_a = i_e_dec, i_e_dec
        return self.trajectory


DEFAULT_IA_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)


def exit_curves(detector_pass, decoder_pass, rng: np.random.Generator, ia_grid=DEFAULT_IA_GRID) -> ExitChart:
    """Measure (I_A, I_E) transfer curves of the two soft-in/soft-out
    components.

    detector_pass(a_priori_sigma) and decoder_pass(a_priori_sigma) run one
    pass with Gaussian-consistent priors of the given std and return
    (extrinsic llrs, true symbols)."""
    det_e, dec_e = [], []
    for i_a in ia_grid:
        sigma = j_inverse(min(i_a, 0.999))
        e, s = detector_pass(sigma)
        det_e.append(mutual_information(e, s))
        e, s = decoder_pass(sigma)
        dec_e.append(mutual_information(e, s))
    grid = np.asarray(ia_grid, dtype=float)
    chart = ExitChart(
        detector=ExitCurve(grid.copy(), np.asarray(det_e)),
        decoder=ExitCurve(grid.copy(), np.asarray(dec_e)),
    )
    chart.run_trajectory()
    return chart


# ---------------------------------------------------------------------------
# run metrics
# ---------------------------------------------------------------------------

def ber(truth: np.ndarray, decided: np.ndarray) -> float:
    truth = np.asarray(truth)
    decided = np.asarray(decided)
    if truth.shape != decided.shape:
        raise ValueError("length mismatch")
    if truth.size == 0:
        return 0.0
    return float(np.mean(truth != decided))


def delay_mse(true_delays, estimates) -> float:
    t = np.asarray(true_delays, dtype=float)
    e = np.asarray(estimates, dtype=float)
    if t.size == 0:
        return float("nan")
    return float(np.mean((e - t) ** 2))


def sync_time_frames(verified_by_window: np.ndarray) -> float:
    """First window index (1-based) at which every user has been verified at
    least once; +inf when never."""
    ever = np.zeros(verified_by_window.shape[0], dtype=bool)
    for j in range(verified_by_window.shape[1]):
        ever |= verified_by_window[:, j].astype(bool)
        if ever.all():
            return float(j + 1)
    return float("inf")


def detected_bits_per_frame(errors: int, bits: int, frames: int) -> float:
    if frames == 0:
        return 0.0
    return (bits - errors) / frames
