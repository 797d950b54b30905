"""Random binary filters and the implicit sensing matrix they form.

Row ``i`` of the M x N sensing matrix F is filter ``i`` reshaped row-major.
Two random sources are provided:

* ``HADAMARD``: rows of a column-permuted, zero-shifted Sylvester Hadamard
  matrix, ``F[i, j] = (H[rows[i], perm[j]] + 1) / 2``. Products with F and its
  transpose go through a fast Walsh-Hadamard transform in O(N log N).
* ``BERNOULLI``: i.i.d. bits that are 1 with probability ``p``.

``ONES`` (every filter fully transmitting) exists for calibration runs where
the filtering must be a no-op.

Randomness
----------
All draws come from numpy's PCG64 bit generator seeded through
``SeedSequence([seed, tag, index])`` and consume only ``random_raw`` output,
so results do not depend on the behaviour of higher-level ``Generator``
methods. Permutations are the stable argsort of 64-bit raw keys; Bernoulli
bits compare the top 53 bits of each raw word, as a uniform double, to ``p``.
Changing any of this requires bumping ``PRNG_SCHEME``.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from simulmeas.field import is_power_of_two

PRNG_SCHEME = "pcg64-seedseq-raw-v1"

_TAG_PERMUTATION = 1
_TAG_ROWS = 2
_TAG_BERNOULLI = 3


class Source(enum.Enum):
    HADAMARD = "hadamard"
    BERNOULLI = "bernoulli"
    ONES = "ones"


def raw_stream(seed: int, *key: int) -> np.random.PCG64:
    """Independent PCG64 stream addressed by ``(seed, *key)``."""
    return np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, key)]))


def random_permutation(n: int, seed: int, *key: int) -> np.ndarray:
    keys = raw_stream(seed, *key).random_raw(n)
    return np.argsort(keys, kind="stable")


def uniform_doubles(count: int, seed: int, *key: int) -> np.ndarray:
    raw = raw_stream(seed, *key).random_raw(count)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def fwht(a: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis.

    Output is in natural (Sylvester) order: ``out[r] = sum_k (-1)**popcount(r & k) * a[k]``.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"transform length must be a power of 2, got {n}")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        a = a.reshape(*lead, n // (2 * h), 2, h)
        lo, hi = a[..., 0, :], a[..., 1, :]
        a = np.stack((lo + hi, lo - hi), axis=-2)
        h *= 2
    return a.reshape(*lead, n)


def _is_power_of_four(n: int) -> bool:
    return is_power_of_two(n) and (n.bit_length() - 1) % 2 == 0


@dataclass(frozen=True)
class BinaryFilter:
    bits: np.ndarray
    index: int

    @property
    def side(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True, eq=False)
class SensingPlan:
    """Immutable description of the sensing matrix; build with :func:`build_plan`."""

    n: int
    m: int
    p: float
    source: Source
    seed: int
    include_dc: bool = False
    rows: np.ndarray | None = field(default=None, repr=False)
    permutation: np.ndarray | None = field(default=None, repr=False)

    @property
    def side(self) -> int:
        return int(round(self.n**0.5))

    def descriptor(self) -> dict[str, object]:
        return {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "source": self.source.value,
            "seed": self.seed,
            "dc_row_excluded": not self.include_dc,
            "prng": PRNG_SCHEME,
        }

    @classmethod
    def from_descriptor(cls, desc: dict[str, str]) -> "SensingPlan":
        from simulmeas.kvfile import parse_bool

        prng = desc.get("prng", PRNG_SCHEME)
        if prng != PRNG_SCHEME:
            raise ValueError(f"plan was generated with PRNG scheme {prng!r}, this build uses {PRNG_SCHEME!r}")
        return build_plan(
            int(desc["n"]),
            int(desc["m"]),
            float(desc.get("p", 0.5)),
            Source(desc["source"]),
            int(desc["seed"]),
            include_dc=not parse_bool(desc.get("dc_row_excluded", "true")),
        )

    def filter_bits(self, indices) -> np.ndarray:
        """Rows of F for ``indices`` as a ``(len(indices), n)`` uint8 array."""
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        if indices.size and (indices.min() < 0 or indices.max() >= self.m):
            raise IndexError(f"filter index out of range [0, {self.m})")
        if self.source is Source.HADAMARD:
            parity = np.bitwise_count(self.rows[indices, None] & self.permutation[None, :]) & 1
            return (1 - parity).astype(np.uint8)
        if self.source is Source.BERNOULLI:
            return self._bernoulli_dense[indices]
        return np.ones((indices.size, self.n), dtype=np.uint8)

    def dense(self) -> np.ndarray:
        """The full M x N matrix as float64. Intended for tests and small plans."""
        return self.filter_bits(np.arange(self.m)).astype(np.float64)

    @functools.cached_property
    def _bernoulli_dense(self) -> np.ndarray:
        bits = np.empty((self.m, self.n), dtype=np.uint8)
        for i in range(self.m):
            bits[i] = uniform_doubles(self.n, self.seed, _TAG_BERNOULLI, i) < self.p
        bits.flags.writeable = False
        return bits

    @functools.cached_property
    def _bernoulli_matrix(self) -> np.ndarray:
        return self._bernoulli_dense.astype(np.float64)


def build_plan(
    n: int,
    m: int,
    p: float = 0.5,
    source: Source | str = Source.HADAMARD,
    seed: int = 0,
    *,
    include_dc: bool = False,
) -> SensingPlan:
    """Draw a reproducible sensing plan.

    For the Hadamard source the all-ones row 0 is excluded unless
    ``include_dc`` is set, in which case it becomes filter 0 and the
    remaining ``m - 1`` rows are drawn from ``1..n-1``.
    """
    source = Source(source)
    n, m, p, seed = int(n), int(m), float(p), int(seed)
    if not (_is_power_of_four(n) and n >= 4):
        raise ValueError(f"n must be a power of 4 (square grid with power-of-2 side), got {n}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"transmit probability must lie in (0, 1), got {p}")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if m < 1:
        raise ValueError(f"need at least one filter, got m={m}")

    if source is Source.HADAMARD:
        if p != 0.5:
            raise ValueError("Hadamard filters transmit exactly half the pixels; p must be 0.5")
        available = n if include_dc else n - 1
        if m > available:
            raise ValueError(f"m={m} exceeds the {available} available Hadamard rows")
        candidates = 1 + random_permutation(n - 1, seed, _TAG_ROWS)
        rows = np.concatenate(([0], candidates[: m - 1])) if include_dc else candidates[:m]
        permutation = random_permutation(n, seed, _TAG_PERMUTATION)
        rows = rows.astype(np.int64)
        rows.flags.writeable = False
        permutation.flags.writeable = False
        return SensingPlan(n, m, p, source, seed, include_dc, rows, permutation)

    if m > n:
        raise ValueError(f"m={m} exceeds n={n}")
    return SensingPlan(n, m, p, source, seed, include_dc)


def filter_row(plan: SensingPlan, i: int) -> BinaryFilter:
    if not 0 <= i < plan.m:
        raise IndexError(f"filter index {i} out of range [0, {plan.m})")
    bits = plan.filter_bits([i])[0].reshape(plan.side, plan.side)
    bits.flags.writeable = False
    return BinaryFilter(bits, int(i))


def _check_length(vec, expected, name):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1:] != (expected,):
        raise ValueError(f"{name} must have trailing length {expected}, got shape {vec.shape}")
    return vec


def apply_sensing(plan: SensingPlan, x: np.ndarray) -> np.ndarray:
    """``F @ x`` for ``x`` of trailing length N (extra leading axes are batched)."""
    x = _check_length(x, plan.n, "x")
    if plan.source is Source.HADAMARD:
        z = np.zeros_like(x)
        z[..., plan.permutation] = x
        hz = fwht(z)
        return 0.5 * (hz[..., plan.rows] + x.sum(axis=-1, keepdims=True))
    if plan.source is Source.BERNOULLI:
        return x @ plan._bernoulli_matrix.T
    return np.repeat(x.sum(axis=-1, keepdims=True), plan.m, axis=-1)


def apply_sensing_adjoint(plan: SensingPlan, y: np.ndarray) -> np.ndarray:
    """``F.T @ y`` for ``y`` of trailing length M."""
    y = _check_length(y, plan.m, "y")
    if plan.source is Source.HADAMARD:
        v = np.zeros(y.shape[:-1] + (plan.n,))
        v[..., plan.rows] = y
        hv = fwht(v)
        return 0.5 * (hv[..., plan.permutation] + y.sum(axis=-1, keepdims=True))
    if plan.source is Source.BERNOULLI:
        return y @ plan._bernoulli_matrix
    return np.repeat(y.sum(axis=-1, keepdims=True), plan.n, axis=-1)


@dataclass(frozen=True)
class FilterSpectrumModel:
    """Zero-frequency peak versus the RMS of every other Fourier coefficient."""

    peak_amplitude: float
    noise_rms_amplitude: float

    @property
    def noise_to_peak_ratio(self) -> float:
        return self.noise_rms_amplitude / self.peak_amplitude


def filter_spectrum_stats(f: BinaryFilter | np.ndarray) -> FilterSpectrumModel:
    """Measure a filter's unitary DFT: DC magnitude and RMS of the rest.

    Accepts a :class:`BinaryFilter` or a bit array of any dimension (1D
    patterns are handled the same way as 2D ones).
    """
    bits = np.asarray(f.bits if isinstance(f, BinaryFilter) else f, dtype=np.float64)
    if not np.any(bits):
        raise ValueError("all-zero filter has no zero-frequency peak")
    mags = np.abs(np.fft.fftn(bits, norm="ortho")).ravel()
    peak = mags[0]
    rest = mags[1:]
    noise = float(np.sqrt(np.mean(rest**2))) if rest.size else 0.0
    return FilterSpectrumModel(float(peak), noise)


def lattice_spectrum_model(n: int, p: float = 0.5) -> FilterSpectrumModel:
    """Random-phasor model of an N-point lattice filter.

    The DC term sums ``N*p`` unit phasors, giving ``N*p / (2*pi)``; every other
    coefficient is a random walk of ``N*p`` unit steps with mean square
    ``N*p / (2*pi)**2``. The resulting ratio ``1/sqrt(N*p)`` over-estimates the
    true ratio because pixels are drawn without replacement.
    """
    return FilterSpectrumModel(n * p / (2 * np.pi), np.sqrt(n * p) / (2 * np.pi))
