"""Acquisition simulation: filter, propagate to the Fourier plane, capture, integrate.

One acquisition step for filter ``i``::

    psi_i(x) = psi(x) * f_i(x)              partial projection
    I_i(k)   = |DFT(psi_i)(k)|**2            momentum intensity on the CCD
    counts   = clamp(round(gain * I_i + dark), 0, 2**bit_depth - 1)
    Y_i      = max(sum(counts - dark_mean), 0)

With the CCD disabled the detector is ideal: frames hold ``gain * I_i`` as
reals and ``Y_i = gain * sum(|psi_i|**2)`` exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from simulmeas.field import Domain, Field2D, IntensityImage, Normalization, dft2_unitary, intensity
from simulmeas.sensing import BinaryFilter, SensingPlan

_TAG_DARK = 4


class SaturationError(RuntimeError):
    """More than half the pixels of a frame hit the top of the detector range."""


@dataclass(frozen=True)
class CcdModel:
    """Cooled CCD with Gaussian dark noise, quantized to ``bit_depth`` bits.

    ``enabled=False`` turns the detector ideal: no dark noise, no rounding,
    no clamping.
    """

    bit_depth: int = 12
    dark_mean: float = 50.0
    dark_std: float = 10.0
    gain: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        if not 1 <= self.bit_depth <= 16:
            raise ValueError(f"bit_depth must be in 1..16, got {self.bit_depth}")
        if not 0 <= self.dark_mean < 2**self.bit_depth:
            raise ValueError(f"dark_mean {self.dark_mean} outside [0, {2**self.bit_depth})")
        if self.dark_std < 0:
            raise ValueError("dark_std must be nonnegative")
        if not self.gain > 0:
            raise ValueError("gain must be positive")

    @property
    def max_count(self) -> int:
        return 2**self.bit_depth - 1

    def with_gain(self, gain: float) -> "CcdModel":
        return CcdModel(self.bit_depth, self.dark_mean, self.dark_std, float(gain), self.enabled)


def suggest_gain(field: Field2D, ccd: CcdModel, p: float = 0.5, fill: float = 0.6) -> float:
    """Gain that puts a typical filtered frame's peak at ``fill`` of the usable range.

    A filter transmitting a fraction ``p`` of the pixels scales the
    zero-frequency amplitude by about ``p``, so the filtered peak is roughly
    ``p**2`` times the unfiltered one. The usable range excludes five dark
    standard deviations above the dark mean.
    """
    peak = float(np.max(np.abs(dft2_unitary(field).values) ** 2))
    if peak <= 0:
        return 1.0
    usable = ccd.max_count - ccd.dark_mean - 5 * ccd.dark_std
    if usable <= 0:
        raise ValueError("dark level leaves no usable detector range")
    return fill * usable / (p * p * peak)


@dataclass(frozen=True)
class CcdFrame:
    counts: np.ndarray
    filter_index: int
    ideal: bool = False

    @property
    def side(self) -> int:
        return self.counts.shape[0]


@dataclass(eq=False)
class MeasurementRecord:
    """Everything one acquisition produced.

    ``frame_sum`` is the running sum of all ``frame_count`` frames, which is
    all momentum recovery needs; ``frames`` holds only the retained subset
    (every ``keep_every``-th filter, none when ``keep_every`` is 0).
    """

    plan: SensingPlan
    ccd: CcdModel
    seed: int
    y: np.ndarray
    frame_sum: np.ndarray
    frame_count: int
    frames: list[CcdFrame] = field(default_factory=list)
    keep_every: int = 1
    ground_truth: Field2D | None = None

    def __post_init__(self):
        if self.y.shape != (self.plan.m,):
            raise ValueError(f"y has shape {self.y.shape}, plan has m={self.plan.m}")
        if np.any(self.y < 0):
            raise ValueError("integrated powers must be nonnegative")


def _check_pair(field: Field2D, f: BinaryFilter) -> None:
    if field.domain is not Domain.POSITION:
        raise ValueError("partial projection acts on a position-domain field")
    if f.side != field.side:
        raise ValueError(f"filter side {f.side} does not match field side {field.side}")


def partial_project(field: Field2D, f: BinaryFilter) -> Field2D:
    _check_pair(field, f)
    return Field2D(field.values * f.bits, Domain.POSITION)


def momentum_intensity_exact(field: Field2D, f: BinaryFilter) -> IntensityImage:
    """Noiseless ``|DFT(psi * f)|**2`` (center-origin, raw)."""
    return intensity(dft2_unitary(partial_project(field, f)), Normalization.RAW)


def capture_frame(
    image: IntensityImage, ccd: CcdModel, rng: np.random.Generator | None = None, filter_index: int = 0
) -> CcdFrame:
    """Record one frame of a raw intensity image."""
    signal = ccd.gain * image.values
    if not ccd.enabled:
        return CcdFrame(signal, filter_index, ideal=True)
    if rng is None:
        raise ValueError("a random generator is required when the CCD is enabled")
    analog = signal + ccd.dark_mean + ccd.dark_std * rng.standard_normal(signal.shape)
    _check_saturation(analog, ccd)
    counts = np.clip(np.rint(analog), 0, ccd.max_count).astype(np.int64)
    return CcdFrame(counts, filter_index)


def _check_saturation(analog: np.ndarray, ccd: CcdModel) -> None:
    saturated = np.count_nonzero(analog >= ccd.max_count, axis=(-2, -1))
    limit = 0.5 * analog.shape[-1] * analog.shape[-2]
    if np.any(saturated > limit):
        raise SaturationError(
            f"{int(np.max(saturated))} of {analog.shape[-1] * analog.shape[-2]} pixels saturated; lower the gain"
        )


def integrate_frame(frame: CcdFrame, ccd: CcdModel) -> float:
    """Dark-subtracted total power of a frame, clamped at zero."""
    if frame.ideal:
        return float(np.sum(frame.counts))
    return max(float(np.sum(frame.counts) - ccd.dark_mean * frame.counts.size), 0.0)


def dark_generator(seed: int, index: int) -> np.random.Generator:
    """Dark-noise stream for filter ``index``; independent of processing order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), _TAG_DARK, int(index)])))


def _chunk_size(n: int) -> int:
    return max(1, min(64, 2**22 // n))


def run_acquisition(
    field: Field2D,
    plan: SensingPlan,
    ccd: CcdModel,
    seed: int,
    *,
    keep_every: int = 1,
    threads: int = 1,
) -> MeasurementRecord:
    """Simulate the full measurement sequence for every filter in ``plan``.

    Filters are processed in fixed-size index chunks; chunk frame sums are
    reduced in index order, so the record is bit-identical for any
    ``threads`` value.
    """
    if field.domain is not Domain.POSITION:
        raise ValueError("acquisition starts from a position-domain field")
    if field.side**2 != plan.n:
        raise ValueError(f"field has {field.side**2} pixels, plan expects {plan.n}")
    if keep_every < 0:
        raise ValueError("keep_every must be >= 0")

    step = _chunk_size(plan.n)
    starts = list(range(0, plan.m, step))

    def work(start):
        return _acquire_chunk(field, plan, ccd, seed, start, min(start + step, plan.m), keep_every)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, starts))
    else:
        chunks = [work(s) for s in starts]

    y = np.concatenate([c[0] for c in chunks])
    frame_sum = np.zeros((field.side, field.side))
    frames = []
    for _, chunk_sum, kept in chunks:
        frame_sum += chunk_sum
        frames.extend(kept)
    return MeasurementRecord(
        plan=plan,
        ccd=ccd,
        seed=int(seed),
        y=y,
        frame_sum=frame_sum,
        frame_count=plan.m,
        frames=frames,
        keep_every=keep_every,
        ground_truth=field,
    )


def _acquire_chunk(field, plan, ccd, seed, start, stop, keep_every):
    side = field.side
    bits = plan.filter_bits(np.arange(start, stop)).reshape(-1, side, side)
    spectra = np.fft.fftshift(np.fft.fft2(field.values * bits, norm="ortho"), axes=(-2, -1))
    signal = ccd.gain * np.abs(spectra) ** 2

    if ccd.enabled:
        dark = np.stack([dark_generator(seed, i).standard_normal((side, side)) for i in range(start, stop)])
        analog = signal + ccd.dark_mean + ccd.dark_std * dark
        _check_saturation(analog, ccd)
        counts = np.clip(np.rint(analog), 0, ccd.max_count).astype(np.int64)
        y = np.maximum(counts.sum(axis=(-2, -1)) - ccd.dark_mean * side * side, 0.0)
    else:
        counts = signal
        y = signal.sum(axis=(-2, -1))

    kept = []
    if keep_every:
        for j, i in enumerate(range(start, stop)):
            if i % keep_every == 0:
                kept.append(CcdFrame(counts[j], i, ideal=not ccd.enabled))
    return y.astype(np.float64), counts.sum(axis=0, dtype=np.float64), kept
