"""Gaussian delay belief per user, updated across detection windows.

Prior for window j is the posterior of window j-1; the likelihood pools the
history of posterior means with the newly verified delay; the posterior is
the precision-weighted fusion of prior and likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VAR_FLOOR = 0.25      # slots^2, keeps the likelihood proper with < 2 distinct samples
HISTORY_CAP = 32      # ring buffer of past posterior means


@dataclass
class DelayBelief:
    u: float              # prior mean (slots)
    delta2: float         # prior variance (slots^2)
    upsilon: float = 0.0  # likelihood mean
    phi2: float = 0.0     # likelihood variance
    nu: float = 0.0       # posterior mean
    zeta2: float = 0.0    # posterior variance
    history: list = field(default_factory=list)

    @property
    def established(self) -> bool:
        return len(self.history) > 0


def init_belief(search_range: tuple[float, float]) -> DelayBelief:
    """Belief before any observation: mean at the center of the delay search
    range, unit variance."""
    lo, hi = search_range
    if hi < lo:
        raise ValueError("empty search range")
    return DelayBelief(u=(lo + hi) / 2.0, delta2=1.0)


def prior_update(belief: DelayBelief) -> tuple[float, float]:
    """Prior for the next window: the previous posterior (or the initial
    values when no posterior exists yet)."""
    if belief.established:
        return belief.nu, belief.zeta2
    return belief.u, belief.delta2


def likelihood_update(history, xi_tilde: float) -> tuple[float, float]:
    """Mean/variance of the pooled set {past posterior means} + {new estimate}.

    Population variance, floored at VAR_FLOOR so a constant history cannot
    freeze the posterior."""
    vals = np.asarray(list(history) + [float(xi_tilde)], dtype=float)
    return float(vals.mean()), float(max(vals.var(), VAR_FLOOR))


def posterior_update(u: float, delta2: float, upsilon: float, phi2: float) -> tuple[float, float]:
    """Gaussian fusion: nu = (u*phi2 + upsilon*delta2)/(delta2 + phi2),
    zeta2 = delta2*phi2/(delta2 + phi2)."""
    if delta2 <= 0 or phi2 <= 0:
        raise ValueError("variances must be positive")
    denom = delta2 + phi2
    return (u * phi2 + upsilon * delta2) / denom, delta2 * phi2 / denom


def absorb_verified_delay(belief: DelayBelief, xi_tilde: float) -> DelayBelief:
    """Full per-window cycle after a verified delay: prior from last posterior,
    likelihood from history, fused posterior appended to the history."""
    u, delta2 = prior_update(belief)
    upsilon, phi2 = likelihood_update(belief.history, xi_tilde)
    nu, zeta2 = posterior_update(u, delta2, upsilon, phi2)
    hist = (belief.history + [nu])[-HISTORY_CAP:]
    return DelayBelief(u=u, delta2=delta2, upsilon=upsilon, phi2=phi2, nu=nu, zeta2=zeta2, history=hist)
