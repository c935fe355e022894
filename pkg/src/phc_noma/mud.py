"""Iterative multi-user detection on the discrete-time Poisson channel.

Detector and per-user repetition decoders exchange extrinsic LLRs. The
detector models every slot as Poisson with rate (interference estimate) +
(own amplitude) * (own symbol); the interference estimate is the soft mean
of all other users' overlapping symbols resolved through their relative
delays. Updates are Jacobi style: every user's LLRs are refreshed from a
snapshot of all users' previous-iteration soft symbols, so results do not
depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .framing import FrameLayout, Interleaver

LLR_CLIP = 50.0

# The extrinsic LLR below assumes the interference rate is known. Early
# iterations only know soft means, and the unmodeled symbol variance of the
# interferers makes the raw LLR overconfident enough to destabilize the
# loop, so each LLR is scaled by (Poisson variance)/(Poisson + residual
# interference variance); the factor tends to 1 as soft symbols harden.
# Decoder feedback is additionally damped geometrically, which removes the
# Jacobi limit cycle near convergence.
FEEDBACK_DAMPING = 0.5


def resolve_interferer(l: int, delta: int, L_s: int):
    """Which frame/slot of an interferer lands on slot l (1-based) of the
    current frame, given the relative delay delta = xi' - xi.

    Returns (frame_offset in {-1, 0, +1}, source_slot 1..L_s) or None when
    |delta| >= L_s puts the interferer outside the adjacent frames."""
    if not 1 <= l <= L_s:
        raise ValueError("slot index out of range")
    x = l - delta
    if delta >= 0 and -L_s < x <= 0:
        return (-1, x + L_s)
    if (delta >= 0 and x > 0) or (delta < 0 and x <= L_s):
        return (0, x)
    if delta < 0 and L_s < x < 2 * L_s:
        return (+1, x - L_s)
    return None


def soft_symbol_mean(a):
    """E[s] = logistic(a), numerically stable for large |a|."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    if out.ndim == 0:
        return float(out)
    return out


def total_interference(k, l, entries, soft_means, gains, activities, n_s, n_b):
    """Interference-plus-background rate for slot l of user k:
    n_b + n_s * sum_{k' != k} alpha_k' G_k' E[s_k'].

    `entries` lists (k', resolved symbol source) pairs for slot l; sources are
    either ("soft", frame_offset, slot) looked up in soft_means[k'] or
    ("known", value) for pilot/guard slots."""
    total = n_b
    for k2, source in entries:
        if k2 == k:
            continue
        if source[0] == "known":
            mean = source[1]
        else:
            _, off, slot = source
            mean = soft_means[k2].get(off, {}).get(slot, 0.0)
        total += n_s * activities[k2] * gains[k2] * mean
    return total


def extrinsic_llr(r, sigma_tilde, signal, alpha_hat):
    """Detector extrinsic LLR for one slot: alpha * (r*ln(1 + S/sigma) - S)."""
    sigma_tilde = np.asarray(sigma_tilde, dtype=float)
    if np.any(sigma_tilde <= 0):
        raise ValueError("interference rate must be positive")
    if np.any(np.asarray(signal) < 0):
        raise ValueError("signal amplitude must be non-negative")
    return alpha_hat * (np.asarray(r) * np.log1p(signal / sigma_tilde) - signal)


def dec_repetition(chip_llrs: np.ndarray, N_c: int, known_bits: np.ndarray | None = None):
    """Soft repetition decoder.

    chip_llrs has shape (n_bits, N_c) in chip order. Extrinsic for chip i of
    a bit is the sum of the other chips' a-priori LLRs; the bit posterior is
    the full sum. Rows flagged in known_bits (values 0/1, NaN = unknown)
    decode to a +-LLR_CLIP saturation toward the known bit. Returns
    (extrinsic chips, bit posteriors)."""
    a = np.asarray(chip_llrs, dtype=float)
    if a.ndim != 2 or a.shape[1] != N_c:
        raise ValueError("chip_llrs must be (n_bits, N_c)")
    bit_sum = a.sum(axis=1)
    ext = bit_sum[:, None] - a
    if known_bits is not None:
        kb = np.asarray(known_bits, dtype=float)
        mask = ~np.isnan(kb)
        ext[mask] = np.where(kb[mask, None] == 1, LLR_CLIP, -LLR_CLIP)
    return np.clip(ext, -LLR_CLIP, LLR_CLIP), bit_sum


# ---------------------------------------------------------------------------
# full receiver
# ---------------------------------------------------------------------------


@dataclass
class DetectedFrame:
    """One frame the receiver has decided to decode, or (when anonymous)
    unidentified detected energy modeled as interference only: its pilot
    structure is known from the group correlation peak but no decoder runs
    and its chip means stay at the uninformative prior."""

    user: int
    window: int
    start: int           # first slot on the receiver timeline
    amplitude: float     # n_s * G_hat for this frame
    active: int = 1      # alpha_hat
    anonymous: bool = False
    group: int = -1      # SP pattern for anonymous frames


@dataclass
class MudParams:
    T_out: int = 12
    damping: float = FEEDBACK_DAMPING
    llr_clip: float = LLR_CLIP
    # initialize the loop from the closed-form Gaussian-approximation soft
    # detector instead of zero LLRs; same fixed point, roughly one outer
    # iteration saved, and the first Poisson pass starts from informative
    # interference models
    warm_start: bool = False
    # after convergence, refit every frame's amplitude to the
    # interference-subtracted counts and decode once more; a frame offers
    # ~10^4 slots of evidence, so the fit recovers from channel-estimate
    # errors far larger than its own percent-level noise
    estimate_amplitude: bool = False


@dataclass
class MudResult:
    bits: dict = field(default_factory=dict)          # (user, window) -> hard bits
    posteriors: dict = field(default_factory=dict)    # (user, window) -> bit posteriors
    soft_chips: dict = field(default_factory=dict)    # (user, window) -> final E[s] per chip slot
    iteration_bits: list = field(default_factory=list)  # per iteration: {(k,j): bits}
    mean_abs_llr: list = field(default_factory=list)
    final_total: np.ndarray = field(default=None)     # type: ignore[assignment]


def iterative_mud(
    counts: np.ndarray,
    frames: list[DetectedFrame],
    layout: FrameLayout,
    sps: list[np.ndarray],
    groups: np.ndarray,
    interleavers: list[Interleaver],
    vp_bits: np.ndarray,
    n_b: float,
    params: MudParams,
    collect_iterations: bool = False,
) -> MudResult:
    """Jointly detect all frames on one timeline.

    Every frame contributes a soft symbol profile (known SP/guard, soft
    chips) at its own offset; one Jacobi iteration rebuilds the composite
    rate field, derives each frame's extrinsic slot LLRs against the rest of
    the field, decodes, and feeds damped extrinsics back."""
    L_s, L_p, L_c, L_g, N_c = layout.L_s, layout.L_p, layout.L_c, layout.L_g, layout.N_c
    T = len(counts)
    clip = params.llr_clip
    vp_chips = np.repeat(np.asarray(vp_bits, dtype=float), N_c)
    vp_sat = np.where(vp_chips == 1, clip, -clip)
    known_bits = np.full(layout.n_coded_bits, np.nan)
    known_bits[layout.L_b :] = np.asarray(vp_bits, dtype=float)

    live = [f for f in frames if f.active and not f.anonymous]
    shadow = [f for f in frames if f.active and f.anonymous]
    # a-priori chip LLRs on the spread (deinterleaved) axis; VP chips known
    a_spread = {id(f): np.concatenate([np.zeros(L_c - layout.L_q), vp_sat]) for f in live}
    # the amplitude refit is trust-regioned around the initial estimate so a
    # transient bad decode cannot talk the gain down to nothing
    init_amp = {id(f): f.amplitude for f in live}

    def field_from(states):
        total = np.full(T, float(n_b))
        var_excess = np.zeros(T)
        profile = {}
        for f in live:
            soft = soft_symbol_mean(np.clip(interleavers[f.user].interleave(states[id(f)]), -clip, clip))
            sym = np.concatenate([sps[groups[f.user]].astype(float), soft, np.zeros(L_g)])
            total[f.start : f.start + L_s] += f.amplitude * sym
            var_excess[f.start : f.start + L_s] += f.amplitude**2 * sym * (1.0 - sym)
            profile[id(f)] = sym
        for f in shadow:
            # flat half-on profile: confident structure would do more harm
            # than good when the peak is spurious
            sym = np.concatenate([np.full(L_p + L_c, 0.5), np.zeros(L_g)])
            total[f.start : f.start + L_s] += f.amplitude * sym
            var_excess[f.start : f.start + L_s] += f.amplitude**2 * sym * (1.0 - sym)
        return total, var_excess, profile

    if params.warm_start and live:
        total, var_excess, profile = field_from(a_spread)
        for f in live:
            sl = slice(f.start, f.start + L_s)
            sym = profile[id(f)]
            A = f.amplitude
            mu0 = np.maximum(total[sl] - A * sym, 1e-9)
            v0 = np.maximum(mu0 + var_excess[sl] - A**2 * sym * (1.0 - sym), 1e-9)
            v1 = v0 + A
            r = counts[sl]
            llr = -0.5 * np.log(v1 / v0) - (r - mu0 - A) ** 2 / (2.0 * v1) + (r - mu0) ** 2 / (2.0 * v0)
            a_chips = interleavers[f.user].deinterleave(np.clip(llr, -clip, clip)[L_p : L_p + L_c])
            ext, _ = dec_repetition(a_chips.reshape(layout.n_coded_bits, N_c), N_c, known_bits)
            a_spread[id(f)] = ext.reshape(-1)

    result = MudResult()

    def one_iteration(t: int) -> None:
        total, var_excess, profile = field_from(a_spread)
        iter_bits = {} if collect_iterations else None
        abs_llr = 0.0
        for f in live:
            sl = slice(f.start, f.start + L_s)
            sym = profile[id(f)]
            sigma = np.maximum(total[sl] - f.amplitude * sym, 1e-9)
            vex = var_excess[sl] - f.amplitude**2 * sym * (1.0 - sym)
            e_slot = extrinsic_llr(counts[sl], sigma, f.amplitude, 1)
            pv = sigma + 0.5 * f.amplitude
            e_slot = np.clip(e_slot * pv / (pv + vex), -clip, clip)
            a_chips = interleavers[f.user].deinterleave(e_slot[L_p : L_p + L_c])
            ext, post = dec_repetition(a_chips.reshape(layout.n_coded_bits, N_c), N_c, known_bits)
            fresh = ext.reshape(-1)
            # the first Poisson pass strictly refines the initial state, so
            # it replaces it; afterwards damping engages only while a frame's
            # decisions are still flipping (the oscillation damping exists to
            # suppress), and a decision-stable frame locks in at full step
            hard = (post[: layout.L_b] > 0).astype(np.int8)
            stable = np.array_equal(hard, result.bits.get((f.user, f.window)))
            g = 1.0 if (t == 0 or stable) else params.damping
            a_spread[id(f)] = g * fresh + (1.0 - g) * a_spread[id(f)]
            abs_llr += float(np.abs(a_chips).mean())
            key = (f.user, f.window)
            result.bits[key] = hard
            result.posteriors[key] = post[: layout.L_b]
            if collect_iterations:
                iter_bits[key] = hard
        if collect_iterations:
            result.iteration_bits.append(iter_bits)
        result.mean_abs_llr.append(abs_llr / max(len(live), 1))

    for t in range(params.T_out):
        one_iteration(t)

    if params.estimate_amplitude and live:
        # gain refinement: jointly fit the amplitudes on each frame's pilot
        # slots (iterated so no frame absorbs a neighbour's model deficit),
        # then continue iterating from the converged soft state. Pilots are
        # known whatever the decode quality, so a badly decoded frame cannot
        # talk its own gain down, and touching up in place avoids rolling
        # fresh convergence dice.
        soft_now = {
            id(f): soft_symbol_mean(np.clip(interleavers[f.user].interleave(a_spread[id(f)]), -clip, clip))
            for f in live
        }
        syms = {
            id(f): np.concatenate(
                [sps[groups[f.user]].astype(float), soft_now[id(f)], np.zeros(L_g)]
            )
            for f in live
        }
        pilot = {}
        for f in live:
            chips = np.zeros(L_c)
            chips[-layout.L_q :] = vp_chips
            pilot[id(f)] = np.concatenate(
                [sps[groups[f.user]].astype(float), interleavers[f.user].interleave(chips), np.zeros(L_g)]
            )
        for _ in range(3):
            total = np.full(T, float(n_b))
            for f in live:
                total[f.start : f.start + L_s] += f.amplitude * syms[id(f)]
            for f in shadow:
                total[f.start : f.start + L_s] += f.amplitude * np.concatenate(
                    [np.full(L_p + L_c, 0.5), np.zeros(L_g)]
                )
            for f in live:
                sl = slice(f.start, f.start + L_s)
                p = pilot[id(f)]
                sigma = np.maximum(total[sl] - f.amplitude * syms[id(f)], 1e-9)
                denom = float(p @ p)
                if denom > 0:
                    fitted = float((counts[sl] - sigma) @ p) / denom
                    f.amplitude = float(np.clip(fitted, 0.6 * init_amp[id(f)], 1.5 * init_amp[id(f)]))
        for t in range(params.T_out, params.T_out + 4):
            one_iteration(t)

    for f in live:
        soft = soft_symbol_mean(np.clip(interleavers[f.user].interleave(a_spread[id(f)]), -clip, clip))
        result.soft_chips[(f.user, f.window)] = soft
    result.final_total = field_from(a_spread)[0]
    return result


