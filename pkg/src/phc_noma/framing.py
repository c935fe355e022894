"""Transmit-side frame construction.

A frame is [SP | interleaved chips | guard]. The chip section is the
rate-1/N_c repetition spreading of (data bits || verification-pilot bits),
passed through a user-specific interleaver. The SP is a group-shared
maximal-length sequence used for correlation delay search; the VP is a bit
pattern shared by all users, recovered only after correct deinterleaving,
and therefore verifies a delay hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .rngutil import stream


@dataclass(frozen=True)
class FrameLayout:
    """Slot geometry of one frame.

    L_b: data bits per frame; N_c: chips per bit; L_q: VP length after
    spreading (slots); L_p: SP length (slots); L_g: guard slots."""

    L_b: int = 1024
    N_c: int = 10
    L_q: int = 320
    L_p: int = 511
    L_g: int = 10

    def __post_init__(self) -> None:
        for name in ("L_b", "N_c", "L_q", "L_p", "L_g"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be a positive integer")
        if self.L_q % self.N_c != 0:
            raise ValueError("L_q must be divisible by N_c")

    @property
    def L_c(self) -> int:
        """Chip-section length in slots (coded data + spread VP)."""
        return self.L_b * self.N_c + self.L_q

    @property
    def L_s(self) -> int:
        """Total frame length in slots."""
        return self.L_c + self.L_p + self.L_g

    @property
    def n_vp_bits(self) -> int:
        return self.L_q // self.N_c

    @property
    def n_coded_bits(self) -> int:
        """Bits entering the spreader: data plus VP."""
        return self.L_b + self.n_vp_bits


@dataclass
class Frame:
    data_bits: np.ndarray
    chips: np.ndarray      # interleaved {0,1}, length L_c
    sp: np.ndarray         # {0,1}, length L_p
    symbols: np.ndarray    # {0,1}, length L_s


# ---------------------------------------------------------------------------
# maximal-length (m-) sequences
# ---------------------------------------------------------------------------

def _gf2_mulmod(a: int, b: int, poly: int, n: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if (a >> n) & 1:
            a ^= poly
    return r


def _gf2_powmod(a: int, e: int, poly: int, n: int) -> int:
    r = 1
    while e:
        if e & 1:
            r = _gf2_mulmod(r, a, poly, n)
        a = _gf2_mulmod(a, a, poly, n)
        e >>= 1
    return r


def _prime_factors(m: int) -> list[int]:
    out, d = [], 2
    while d * d <= m:
        if m % d == 0:
            out.append(d)
            while m % d == 0:
                m //= d
        d += 1
    if m > 1:
        out.append(m)
    return out


def _is_primitive(poly: int, n: int) -> bool:
    """True iff x generates GF(2^n)* modulo the degree-n polynomial `poly`."""
    order = (1 << n) - 1
    if _gf2_powmod(2, order, poly, n) != 1:
        return False
    return all(_gf2_powmod(2, order // q, poly, n) != 1 for q in _prime_factors(order))


def _lfsr_sequence(poly: int, n: int) -> np.ndarray:
    """One period of the Galois-form LFSR driven by a primitive polynomial."""
    length = (1 << n) - 1
    out = np.empty(length, dtype=np.int8)
    state = 1
    taps = ((poly >> 1) | (1 << (n - 1))) & ((1 << n) - 1)
    for i in range(length):
        bit = state & 1
        out[i] = bit
        state >>= 1
        if bit:
            state ^= taps
    return out


def _bipolar(bits: np.ndarray) -> np.ndarray:
    return 2.0 * bits.astype(np.float64) - 1.0


def _max_crosscorr(a: np.ndarray, b: np.ndarray) -> float:
    """Max |normalized bipolar circular cross-correlation| over all lags."""
    A, B = _bipolar(a), _bipolar(b)
    c = np.fft.ifft(np.fft.fft(A) * np.conj(np.fft.fft(B))).real / len(A)
    return float(np.abs(c).max())


@lru_cache(maxsize=None)
def _sp_family(L_p: int, count: int) -> tuple:
    """Deterministic family of `count` m-sequences of length L_p with pairwise
    bipolar cross-correlation magnitude <= 0.2 at every lag.

    Enumerates primitive polynomials in ascending order and keeps sequences
    greedily, so the family is stable across runs."""
    n = L_p.bit_length()
    if (1 << n) - 1 != L_p:
        raise ValueError(f"L_p must be 2^n - 1, got {L_p}")
    chosen: list[np.ndarray] = []
    for poly in range((1 << n) + 1, 1 << (n + 1), 2):
        if not _is_primitive(poly, n):
            continue
        seq = _lfsr_sequence(poly, n)
        if all(_max_crosscorr(seq, c) <= 0.2 for c in chosen):
            chosen.append(seq)
        if len(chosen) == count:
            return tuple(chosen)
    raise ValueError(f"only {len(chosen)} sequences with cross-correlation <= 0.2 exist at L_p={L_p}")


def gen_sp(group: int, L_p: int, n_groups: int | None = None) -> np.ndarray:
    """Synchronization pilot of group `group` (0-based): an m-sequence in {0,1}.

    Distinct groups receive sequences from different primitive polynomials
    with pairwise normalized cross-correlation magnitude <= 0.2."""
    count = (group + 1) if n_groups is None else n_groups
    fam = _sp_family(int(L_p), int(count))
    return fam[group].copy()


# ---------------------------------------------------------------------------
# verification pilot, spreading, interleaving
# ---------------------------------------------------------------------------

def gen_vp(seed: int, length: int) -> np.ndarray:
    """Shared verification-pilot bits: deterministic in `seed`, balanced.

    Regenerates until the ones count is as close to length/2 as possible,
    which keeps the ones fraction well inside [0.25, 0.75] and zeros the
    correlation bias against flat interference."""
    rng = stream(seed, "vp")
    target = length // 2
    for _ in range(10_000):
        bits = rng.integers(0, 2, length, dtype=np.int8)
        if abs(int(bits.sum()) - length / 2.0) <= 0.5 and int(bits.sum()) in (target, length - target):
            return bits
    raise RuntimeError("failed to draw a balanced VP")  # pragma: no cover


def spread(bits: np.ndarray, N_c: int) -> np.ndarray:
    """Rate-1/N_c repetition: each bit repeated N_c times in order."""
    if N_c < 1:
        raise ValueError("N_c must be >= 1")
    return np.repeat(np.asarray(bits), N_c)


@dataclass(frozen=True)
class Interleaver:
    """Bijective chip permutation with its inverse.

    Transmit mapping: tx[i] = x[perm[i]]; receive mapping restores chip
    order via llr_x[perm] = llr_tx."""

    perm: np.ndarray
    inv: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.inv is None:
            object.__setattr__(self, "inv", np.argsort(self.perm))

    def interleave(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.perm]

    def deinterleave(self, y: np.ndarray) -> np.ndarray:
        out = np.empty_like(np.asarray(y))
        out[self.perm] = y
        return out


def build_interleaver(seed: int, length: int) -> Interleaver:
    """Seeded Fisher-Yates permutation of 0..length-1 (deterministic in seed)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(101,))
    rng = np.random.Generator(np.random.Philox(ss))
    return Interleaver(perm=rng.permutation(length))


def assemble_frame(
    data_bits: np.ndarray,
    layout: FrameLayout,
    vp_bits: np.ndarray,
    sp: np.ndarray,
    interleaver: Interleaver,
) -> Frame:
    """Build the transmitted symbol sequence [SP | Pi(spread(data||vp)) | guard]."""
    data_bits = np.asarray(data_bits, dtype=np.int8)
    if data_bits.shape != (layout.L_b,):
        raise ValueError(f"need {layout.L_b} data bits, got {data_bits.shape}")
    if len(vp_bits) != layout.n_vp_bits:
        raise ValueError(f"need {layout.n_vp_bits} VP bits, got {len(vp_bits)}")
    if len(sp) != layout.L_p:
        raise ValueError(f"SP must have {layout.L_p} slots")
    coded = spread(np.concatenate([data_bits, np.asarray(vp_bits, dtype=np.int8)]), layout.N_c)
    chips = interleaver.interleave(coded)
    symbols = np.concatenate([np.asarray(sp, dtype=np.int8), chips, np.zeros(layout.L_g, dtype=np.int8)])
    return Frame(data_bits=data_bits, chips=chips, sp=np.asarray(sp, dtype=np.int8), symbols=symbols)


def recover_bits(chip_section: np.ndarray, layout: FrameLayout, interleaver: Interleaver) -> np.ndarray:
    """Invert a noiseless chip section back to data bits (majority despread)."""
    coded = interleaver.deinterleave(np.asarray(chip_section, dtype=float))
    groups = coded.reshape(layout.n_coded_bits, layout.N_c)
    bits = (groups.sum(axis=1) * 2 > layout.N_c).astype(np.int8)
    return bits[: layout.L_b]
