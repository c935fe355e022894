"""Physical constants and closed-form photon/channel math.

All photon arithmetic is per slot: a laser driven with power P over one slot
of duration tau delivers eta*P*tau/(h*f) expected photo-electrons, background
radiation adds n_b per slot, and counting is Poisson in the slot rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

PLANCK = 6.626e-34  # J*s


@dataclass
class PhysicalParams:
    """Link-level constants shared by every module.

    eta: quantum efficiency of the photon-conversion process, in (0, 1].
    tau: slot duration in seconds.
    f: optical center frequency in Hz.
    h: Planck constant.
    C: water attenuation coefficient in 1/m.
    n_b: expected background photo-electrons per slot.
    sigma_x: turbulence intensity of the log-normal fading.
    """

    eta: float = 0.5
    tau: float = 1e-6
    f: float = 6e14
    h: float = PLANCK
    C: float = 0.15
    n_b: float = 2.0
    sigma_x: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.eta <= 1.0):
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.tau <= 0 or self.f <= 0 or self.h <= 0:
            raise ValueError("tau, f and h must be positive")
        if self.C < 0 or self.n_b < 0 or self.sigma_x < 0:
            raise ValueError("C, n_b and sigma_x must be non-negative")


@dataclass
class UserProfile:
    """Per-user identity: geometry, fading, gains, activity, interleaver seed.

    G is the composite channel gain I * exp(-C*Z) of the physical link;
    G_hat is the receiver's (possibly erroneous) estimate of it.
    """

    id: int
    group: int
    Z: float
    I: float = 1.0
    G: float = field(default=0.0)
    G_hat: float = field(default=0.0)
    alpha: int = 1
    interleaver_seed: int = 0
    delay_mean: float = 0.0
    delay_std: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")
        if self.G == 0.0:
            self.G = self.I * float(np.exp(-0.15 * self.Z))
        if self.G_hat == 0.0:
            self.G_hat = self.G
        if self.G <= 0:
            raise ValueError("channel gain must be positive")


def photons_per_slot(params: PhysicalParams, P_s: float) -> float:
    """Expected signal photo-electrons per slot for transmit power P_s (W)."""
    if P_s < 0:
        raise ValueError("transmit power must be non-negative")
    return params.eta * P_s * params.tau / (params.h * params.f)


def photons_from_energy_dbj(params: PhysicalParams, e_dbj: float) -> float:
    """Expected signal photo-electrons for a per-slot energy given in dBJ.

    E = P_s*tau, so this is eta*10^(E_dbj/10)/(h*f)."""
    return params.eta * 10.0 ** (e_dbj / 10.0) / (params.h * params.f)


def background_from_energy_dbj(params: PhysicalParams, e_nb_dbj: float) -> float:
    """Expected background photo-electrons for a per-slot energy in dBJ (n_b = E_nb/(h*f))."""
    return 10.0 ** (e_nb_dbj / 10.0) / (params.h * params.f)


def path_loss(C: float, Z: float) -> float:
    """Beer-Lambert path loss exp(-C*Z)."""
    if C < 0 or Z < 0:
        raise ValueError("C and Z must be non-negative")
    return float(np.exp(-C * Z))


def sample_fading(rng: np.random.Generator, sigma_x: float, size=None):
    """Log-normal fading with unit mean: ln I ~ Normal(-sigma_x^2/2, sigma_x^2).

    sigma_x = 0 returns exactly 1."""
    if sigma_x < 0:
        raise ValueError("sigma_x must be non-negative")
    if sigma_x == 0.0:
        return 1.0 if size is None else np.ones(size)
    draw = rng.normal(-sigma_x**2 / 2.0, sigma_x, size)
    return np.exp(draw)


def fading_pdf(i, sigma_x: float):
    """Density of the unit-mean log-normal fading coefficient at intensity i > 0."""
    i = np.asarray(i, dtype=float)
    return (
        1.0
        / (np.sqrt(2.0 * np.pi) * i * sigma_x)
        * np.exp(-((np.log(i) + sigma_x**2 / 2.0) ** 2) / (2.0 * sigma_x**2))
    )


def poisson_pmf(n, r):
    """P(count = r) for a Poisson rate n, evaluated in log space.

    Safe for large n and r (lgamma, no factorial overflow); n = 0 gives a
    point mass at r = 0."""
    n = np.asarray(n, dtype=float)
    r = np.asarray(r)
    if np.any(n < 0):
        raise ValueError("rate must be non-negative")
    if np.any(r < 0) or not np.issubdtype(np.asarray(r).dtype, np.integer):
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0) or np.any(r_arr != np.round(r_arr)):
            raise ValueError("count must be a non-negative integer")
        r = r_arr.astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(
            n > 0,
            r * np.log(np.where(n > 0, n, 1.0)) - n - gammaln(np.asarray(r, dtype=float) + 1.0),
            np.where(np.asarray(r) == 0, 0.0, -np.inf),
        )
    out = np.exp(logp)
    if out.ndim == 0:
        return float(out)
    return out


def sample_poisson(rng: np.random.Generator, n):
    """Poisson counts with rate n (scalar or array).

    Delegates to numpy's Generator.poisson (inversion below rate 10, PTRS
    transformed rejection above), which is stream-stable for a fixed
    BitGenerator, so seeded runs reproduce bit-exactly."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("rate must be non-negative")
    return rng.poisson(n)


def slot_rate(users, n_s: float, n_b: float) -> float:
    """Expected photons in one slot: n_b + n_s * sum_k alpha_k G_k s_k.

    `users` is an iterable of (alpha, G, symbol) with symbols in {0, 1}."""
    total = n_b
    for alpha, G, s in users:
        if s not in (0, 1):
            raise ValueError("symbols must be 0 or 1")
        total += n_s * alpha * G * s
    return total
