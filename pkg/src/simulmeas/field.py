"""Complex 2D fields, test scenes, and the unitary position/momentum transform.

Index convention
----------------
Position-domain arrays are stored with the spatial origin at index ``[0, 0]``.
Momentum-domain arrays are stored center-origin: index ``[r, c]`` holds the
frequency ``(r - side // 2, c - side // 2)`` in cycles per grid, so the zero
frequency sits at ``[side // 2, side // 2]``. The forward transform is

    psi_k[u, v] = (1 / side) * sum_{r, c} psi_x[r, c] * exp(-2j*pi*((u - side//2)*r + (v - side//2)*c) / side)

which is unitary, so total power is conserved exactly.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from simulmeas.pgm import read_pgm


class Domain(enum.Enum):
    POSITION = "position"
    MOMENTUM = "momentum"


class Normalization(enum.Enum):
    RAW = "raw"
    UNIT_SUM = "unit-sum"
    UNIT_MAX = "unit-max"


class SceneKind(enum.Enum):
    DOUBLE_SLIT = "double-slit"
    TRIPLE_SLIT = "triple-slit"
    RECTANGLES = "rectangles"
    FROM_IMAGE = "from-image"


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _check_side(side: int) -> None:
    if not (isinstance(side, (int, np.integer)) and side >= 2 and is_power_of_two(int(side))):
        raise ValueError(f"grid side must be a power of 2 and >= 2, got {side!r}")


@dataclass(frozen=True, eq=False)
class Field2D:
    """Complex amplitude on a ``side x side`` grid in one domain."""

    values: np.ndarray
    domain: Domain = Domain.POSITION

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"field must be a square 2D array, got shape {values.shape}")
        _check_side(values.shape[0])
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "domain", Domain(self.domain))

    @property
    def side(self) -> int:
        return self.values.shape[0]

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True, eq=False)
class IntensityImage:
    """Nonnegative real image with a record of how it was normalized."""

    values: np.ndarray
    normalization: Normalization = Normalization.RAW

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"image must be a square 2D array, got shape {values.shape}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("intensity values must be finite and nonnegative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "normalization", Normalization(self.normalization))

    @property
    def side(self) -> int:
        return self.values.shape[0]

    def normalized(self, norm: Normalization) -> "IntensityImage":
        return IntensityImage(normalize(self.values, norm), norm)


def normalize(values: np.ndarray, norm: Normalization) -> np.ndarray:
    """Scale a nonnegative array to unit sum or unit maximum.

    Raises ``ValueError`` when a unit normalization is requested for an
    all-zero array.
    """
    norm = Normalization(norm)
    values = np.asarray(values, dtype=np.float64)
    if norm is Normalization.RAW:
        return values.copy()
    scale = values.sum() if norm is Normalization.UNIT_SUM else values.max()
    if not scale > 0:
        raise ValueError(f"cannot apply {norm.value} normalization to an all-zero image")
    return values / scale


def make_scene(
    kind: SceneKind | str,
    side: int,
    *,
    slit_width: int | None = None,
    slit_height: int | None = None,
    separation: int | None = None,
    image: str | os.PathLike | np.ndarray | None = None,
) -> Field2D:
    """Build a position-domain amplitude mask illuminated by a unit plane wave.

    Slits are vertical, centered on the grid, with ``separation`` measured
    center to center in pixels. Defaults scale with ``side``: width
    ``side // 32``, height ``side // 2``, separation ``side // 8``.
    ``RECTANGLES`` is a piecewise-constant phantom of three blocks with
    intensities 1.0, 0.6 and 0.3. ``FROM_IMAGE`` reads a P5 graymap (or takes
    an array) and uses ``pixel / maxval`` as the intensity.

    The returned amplitude is ``sqrt(intensity)`` with zero phase.
    """
    kind = SceneKind(kind)
    _check_side(side)

    if kind in (SceneKind.DOUBLE_SLIT, SceneKind.TRIPLE_SLIT):
        n_slits = 2 if kind is SceneKind.DOUBLE_SLIT else 3
        mask = _slits(side, n_slits, slit_width, slit_height, separation)
    elif kind is SceneKind.RECTANGLES:
        mask = _rectangles(side)
    else:
        if image is None:
            raise ValueError("from-image scene requires an image")
        if isinstance(image, np.ndarray):
            pixels, maxval = np.asarray(image, dtype=float), float(np.max(image) or 1.0)
        else:
            pixels, maxval = read_pgm(image)
        if pixels.shape != (side, side):
            raise ValueError(f"image is {pixels.shape[1]}x{pixels.shape[0]}, expected {side}x{side}")
        if np.any(pixels < 0):
            raise ValueError("image pixels must be nonnegative")
        mask = np.asarray(pixels, dtype=float) / maxval
    return Field2D(np.sqrt(mask).astype(np.complex128), Domain.POSITION)


def _slits(side, n_slits, width, height, separation):
    width = max(1, side // 32) if width is None else int(width)
    height = side // 2 if height is None else int(height)
    separation = max(1, side // 8) if separation is None else int(separation)
    if width <= 0 or height <= 0:
        raise ValueError(f"degenerate slit geometry: width={width}, height={height}")
    if separation < width:
        raise ValueError(f"slits overlap: separation {separation} < width {width}")
    extent = (n_slits - 1) * separation + width
    if extent > side or height > side:
        raise ValueError(f"slit geometry ({extent}x{height} px) exceeds the {side}x{side} grid")
    mask = np.zeros((side, side))
    top = (side - height) // 2
    left = (side - extent) // 2
    for s in range(n_slits):
        x0 = left + s * separation
        mask[top : top + height, x0 : x0 + width] = 1.0
    return mask


def _rectangles(side):
    if side < 8:
        raise ValueError("rectangles phantom needs side >= 8")
    e = side // 8
    mask = np.zeros((side, side))
    mask[1 * e : 4 * e, 1 * e : 3 * e] = 1.0
    mask[2 * e : 6 * e, 4 * e : 7 * e] = 0.6
    mask[5 * e : 7 * e, 1 * e : 3 * e] = 0.3
    return mask


def dft2_unitary(f: Field2D) -> Field2D:
    """Transform between domains with the unitary 2D DFT (see module docstring)."""
    if f.domain is Domain.POSITION:
        out = np.fft.fftshift(np.fft.fft2(f.values, norm="ortho"))
        return Field2D(out, Domain.MOMENTUM)
    out = np.fft.ifft2(np.fft.ifftshift(f.values), norm="ortho")
    return Field2D(out, Domain.POSITION)


def intensity(f: Field2D, norm: Normalization | str = Normalization.RAW) -> IntensityImage:
    """Per-pixel ``|value|**2``, normalized per ``norm``."""
    norm = Normalization(norm)
    return IntensityImage(normalize(np.abs(f.values) ** 2, norm), norm)
