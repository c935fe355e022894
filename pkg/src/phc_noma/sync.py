"""Synchronization: group-level correlation search, user-level MAP delay
selection, VP verification with a noise-adaptive gate, and activity
detection.

Correlations use bipolar (+-1) pilot replicas normalized by the pilot's
ones count and by the expected per-slot signal amplitude n_s*G_hat, so a
noise-free aligned single user scores exactly 1 and the thresholds
eps_p/eps_q are scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import bayes
from .framing import FrameLayout, Interleaver

# Verification accepts only correlations exceeding both the fixed threshold
# eps_q and NOISE_GATE_C estimated noise standard deviations; the latter is
# measured from the deinterleaved chips themselves, which makes the gate
# track multi-user interference without any calibration. Probing a delay
# where the group correlation already found energy carries much stronger
# prior odds, so the rescue sweep over sub-threshold peaks runs relaxed.
NOISE_GATE_C = 4.0
RESCUE_GATE_C = 3.0


@dataclass
class DelayCandidates:
    """Ascending candidate offsets of one group with their correlation scores."""

    offsets: list
    scores: list

    def __iter__(self):
        return iter(self.offsets)


@dataclass
class SyncResult:
    """Per-window synchronization outcome, one entry per user.

    `anonymous` lists (group, offset, score) for correlation peaks that no
    user claimed: energy the detector should model as interference even
    though its owner was not identified."""

    alpha_hat: np.ndarray          # {0,1}
    xi_hat: np.ndarray             # verified integer delay, -1 when absent
    xi_fine: np.ndarray            # sub-slot refined delay, NaN when absent
    rho_hat: np.ndarray            # {0,1}
    rounds_used: np.ndarray
    collisions: int = 0            # candidates suppressed by peak dedup
    anonymous: list = field(default_factory=list)

    def __post_init__(self) -> None:
        ok = self.alpha_hat == 1
        if not np.array_equal(ok, self.rho_hat == 1) or np.any((self.xi_hat >= 0) != ok):
            raise ValueError("SyncResult invariant violated: xi present iff alpha=1 iff rho=1")


def denoise(window: np.ndarray, n_b: float) -> np.ndarray:
    """Background-subtracted counts (may go negative)."""
    return np.asarray(window, dtype=float) - n_b


def sp_correlate(r_tilde: np.ndarray, sp_bits: np.ndarray, amplitude: float) -> np.ndarray:
    """Normalized bipolar SP correlation for offsets n = 0..len(r)-L_p-1.

    R(n) = sum_l r~(n+l) p~(l) / (L_p * w * amplitude) with p~ the +-1 SP and
    w its ones fraction; amplitude is the expected per-slot peak n_s*G_hat."""
    sp_bits = np.asarray(sp_bits)
    L_p = len(sp_bits)
    if len(r_tilde) < L_p:
        raise ValueError("window shorter than the SP")
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    replica = 2.0 * sp_bits - 1.0
    raw = fftconvolve(np.asarray(r_tilde, dtype=float), replica[::-1], mode="valid")
    w = sp_bits.mean()
    return raw / (L_p * w * amplitude)


def candidate_delays(R: np.ndarray, eps_p: float, K_m: int, dedup_halfwidth: int) -> DelayCandidates:
    """Offsets with R > eps_p, reduced to local maxima within +-dedup_halfwidth,
    keeping at most K_m by score."""
    if not (0.0 < eps_p < 1.0):
        raise ValueError("eps_p must be in (0, 1)")
    idx = np.flatnonzero(R > eps_p)
    kept: list[int] = []
    for n in idx[np.argsort(-R[idx], kind="stable")]:
        if all(abs(int(n) - s) > dedup_halfwidth for s in kept):
            kept.append(int(n))
        if len(kept) == K_m:
            break
    kept.sort()
    return DelayCandidates(offsets=kept, scores=[float(R[n]) for n in kept])


def pick_delay(candidates, prior: tuple[float, float], excluded=frozenset()):
    """MAP selection: the candidate maximizing the Gaussian prior density,
    ties broken toward the smaller delay; None if nothing remains."""
    u, delta2 = prior
    if delta2 <= 0:
        raise ValueError("prior variance must be positive")
    best = None
    best_key = None
    for c in candidates:
        if c in excluded:
            continue
        key = (-((c - u) ** 2) / (2.0 * delta2), -c)
        if best_key is None or key > best_key:
            best, best_key = c, key
    return best


def extract_window(buffer: np.ndarray, base: int, xi: int, L_s: int) -> np.ndarray:
    """L_s-slot window starting xi slots after the nominal frame boundary
    `base`; negative xi reaches into the previous frame span."""
    start = base + int(xi)
    if start < 0 or start + L_s > len(buffer):
        raise IndexError("window outside buffer")
    return buffer[start : start + L_s]


def refine_peak(R: np.ndarray, n: int) -> float:
    """Sub-slot peak refinement by 3-point parabolic interpolation, clipped
    to half a slot."""
    if n <= 0 or n >= len(R) - 1:
        return 0.0
    denom = R[n - 1] - 2.0 * R[n] + R[n + 1]
    if denom == 0:
        return 0.0
    return float(np.clip(0.5 * (R[n - 1] - R[n + 1]) / denom, -0.5, 0.5))


def verify_vp(
    window: np.ndarray,
    interleaver: Interleaver,
    layout: FrameLayout,
    vp_chips: np.ndarray,
    amplitude: float,
    eps_q: float,
    n_b: float,
    gate_c: float = NOISE_GATE_C,
) -> tuple[float, int]:
    """Deinterleave the chip section, correlate the trailing L_q chips against
    the bipolar VP, and accept iff the score clears both eps_q and a
    gate_c-sigma noise floor estimated from the same chips."""
    if len(window) != layout.L_s:
        raise ValueError("window must span one frame")
    chips = np.asarray(window[layout.L_p : layout.L_p + layout.L_c], dtype=float)
    coded = interleaver.deinterleave(chips)
    qv = coded[-layout.L_q :]
    replica = 2.0 * np.asarray(vp_chips) - 1.0
    w = np.asarray(vp_chips).mean()
    norm = layout.L_q * w * amplitude
    R = float(((qv - n_b) * replica).sum() / norm)
    noise_sigma = float(np.sqrt(max(((qv - qv.mean()) ** 2).sum(), 1.0)) / norm)
    rho = 1 if R > max(eps_q, gate_c * noise_sigma) else 0
    return R, rho


@dataclass
class SyncParams:
    eps_p: float = 0.75
    eps_q: float = 0.3
    T_in: int = 4
    gate_c: float = NOISE_GATE_C
    # peaks above this (but below eps_p, or left unclaimed) still flag
    # transmitted energy worth modeling as interference
    eps_anon: float = 0.6
    # sub-slot delays split every correlation peak across two adjacent
    # offsets; detection and verification then work on the two-tap pair
    fractional: bool = False


@dataclass
class SyncUser:
    interleaver: Interleaver
    group: int
    amplitude: float          # n_s * G_hat for this user/window
    belief: bayes.DelayBelief
    last_delay: int | None = None   # most recent verified delay, for coasting


def synchronize(
    buffer: np.ndarray,
    base: int,
    layout: FrameLayout,
    sps: list[np.ndarray],
    vp_chips: np.ndarray,
    users: list[SyncUser],
    n_s: float,
    n_b: float,
    params: SyncParams,
    search_len: int | None = None,
) -> SyncResult:
    """One detection window of the synchronization algorithm.

    Step 1 builds each group's candidate set from the SP correlation. Then
    up to T_in rounds run per user: pick the MAP candidate (preferring
    offsets not yet claimed by a verified user), verify it against the VP,
    and on failure exclude it for this user. A user who has locked before
    but whose peak vanished this window is finally probed directly at its
    last verified delay, so the receiver coasts through fades. Verified
    users update their Bayesian beliefs and last-delay memory in place.
    """
    K = len(users)
    L_s = layout.L_s
    n_search = L_s if search_len is None else search_len
    r_tilde = denoise(buffer[base : base + n_search + layout.L_p], n_b)

    groups = sorted({u.group for u in users})
    cand: dict[int, DelayCandidates] = {}
    pool: dict[int, DelayCandidates] = {}
    Rm: dict[int, np.ndarray] = {}
    collisions = 0
    for m in groups:
        members = [u for u in users if u.group == m]
        amp = max(u.amplitude for u in members)
        R = sp_correlate(r_tilde, sps[m], amp)
        if params.fractional:
            # a sub-slot delay splits the peak over two offsets; detect on
            # the pair sum so the threshold sees the full peak energy
            R_det = R.copy()
            R_det[:-1] += R[1:]
        else:
            R_det = R
        c = candidate_delays(R_det, params.eps_p, K_m=len(members), dedup_halfwidth=layout.L_p // 2)
        pool[m] = candidate_delays(
            R_det, params.eps_anon, K_m=2 * len(members), dedup_halfwidth=layout.L_p // 2
        )
        # crossings beyond the one-slot main lobe of a kept peak were
        # suppressed by dedup: report them as candidate collisions
        above = np.flatnonzero(R_det > params.eps_p)
        kept = np.asarray(c.offsets, dtype=np.int64)
        if len(kept):
            suppressed = int((np.abs(above[:, None] - kept[None, :]).min(axis=1) > 1).sum())
        else:
            suppressed = 0
        collisions += suppressed
        cand[m], Rm[m] = c, R

    claimed: dict[int, int] = {}          # offset -> user
    rejects: list[set] = [set() for _ in range(K)]
    verified: dict[int, int] = {}         # user -> offset
    rounds = np.zeros(K, dtype=np.int64)

    def _split(k: int, offset: int) -> float:
        R = Rm[users[k].group]
        if not params.fractional or offset + 1 >= len(R):
            return 0.0
        a, b = max(float(R[offset]), 0.0), max(float(R[offset + 1]), 0.0)
        return b / (a + b) if (a + b) > 1e-9 else 0.0

    def _probe(k: int, offset: int, gate_c: float | None = None) -> tuple[float, bool]:
        u = users[k]
        gate = params.gate_c if gate_c is None else gate_c
        f_hat = _split(k, offset)
        window = extract_window(buffer, base, offset, L_s)
        if f_hat <= 1e-9:
            R, rho = verify_vp(
                window, u.interleaver, layout, vp_chips, u.amplitude, params.eps_q, n_b, gate
            )
            return R, rho == 1
        # matched two-tap combining of the split frame
        window1 = extract_window(buffer, base, offset + 1, L_s)
        chips = (1.0 - f_hat) * (window[layout.L_p : layout.L_p + layout.L_c] - n_b) + f_hat * (
            window1[layout.L_p : layout.L_p + layout.L_c] - n_b
        )
        coded = u.interleaver.deinterleave(np.asarray(chips, dtype=float))
        qv = coded[-layout.L_q :]
        replica = 2.0 * np.asarray(vp_chips) - 1.0
        w = np.asarray(vp_chips).mean()
        norm = layout.L_q * w * u.amplitude * ((1.0 - f_hat) ** 2 + f_hat**2)
        Rv = float((qv * replica).sum() / norm)
        sigma = float(np.sqrt(max(((qv - qv.mean()) ** 2).sum(), 1.0)) / norm)
        return Rv, Rv > max(params.eps_q, gate * sigma)

    def _try(k: int, offset: int, gate_c: float | None = None) -> bool:
        return _probe(k, offset, gate_c)[1]

    for _ in range(params.T_in):
        for k in range(K):
            if k in verified:
                continue
            u = users[k]
            avail = [c for c in cand[u.group].offsets if c not in rejects[k]]
            if not avail:
                continue
            prior = bayes.prior_update(u.belief)
            unclaimed = [c for c in avail if c not in claimed]
            choice = pick_delay(unclaimed or avail, prior)
            rounds[k] += 1
            rejects[k].add(choice)
            if _try(k, choice):
                verified[k] = choice
                claimed[choice] = k

    # tracker coasting: probe the last verified delay when the candidate
    # search came up empty for this user. A user known to be faded relative
    # to its group is expected to lose its peak, so its probe runs at the
    # relaxed gate; at nominal gain a missing peak is usually real absence
    # and the strict gate keeps phantoms out.
    med_amp = {m: float(np.median([u.amplitude for u in users if u.group == m])) for m in groups}
    for k in range(K):
        u = users[k]
        if k in verified or u.last_delay is None:
            continue
        offset = int(u.last_delay)
        if offset < 0 or offset >= n_search:
            continue
        if any(abs(offset - c) <= 1 for c in verified.values()):
            continue
        faded = u.amplitude < 0.75 * med_amp[u.group]
        if _try(k, offset, gate_c=RESCUE_GATE_C if faded else None):
            verified[k] = offset

    # rescue round: an unclaimed peak either fluctuated under the detection
    # threshold or its owner's verification fell between the strict and
    # relaxed gates; re-probe every unverified group member at the relaxed
    # gate and award the peak to the strongest passer
    for m in groups:
        for offset in pool[m].offsets:
            if offset in claimed or any(abs(offset - v) <= 1 for v in verified.values()):
                continue
            passers = [
                (_probe(k, offset, gate_c=RESCUE_GATE_C), k)
                for k in range(K)
                if k not in verified and users[k].group == m
            ]
            passers = [(R, k) for (R, ok), k in passers if ok]
            if passers:
                _, k = max(passers)
                verified[k] = offset
                claimed[offset] = k

    # a strong peak that still nobody claimed marks transmitted energy the
    # detector should at least model
    anonymous = []
    for m in groups:
        for offset, score in zip(pool[m].offsets, pool[m].scores):
            if score >= params.eps_p and all(abs(offset - v) > 1 for v in verified.values()):
                anonymous.append((m, offset, score))

    alpha_hat = np.zeros(K, dtype=np.int64)
    xi_hat = np.full(K, -1, dtype=np.int64)
    xi_fine = np.full(K, np.nan)
    for k, offset in verified.items():
        alpha_hat[k] = 1
        R = Rm[users[k].group]
        if params.fractional:
            xi_fine[k] = offset + _split(k, offset)
        else:
            xi_fine[k] = offset + (
                refine_peak(R, offset) if offset in cand[users[k].group].offsets else 0.0
            )
        xi_hat[k] = int(round(float(xi_fine[k])))
        users[k].belief = bayes.absorb_verified_delay(users[k].belief, float(xi_fine[k]))
        users[k].last_delay = int(offset)

    return SyncResult(
        alpha_hat=alpha_hat,
        xi_hat=xi_hat,
        xi_fine=xi_fine,
        rho_hat=alpha_hat.copy(),
        rounds_used=rounds,
        collisions=collisions,
        anonymous=anonymous,
    )
