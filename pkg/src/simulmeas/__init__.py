"""Simultaneous position/momentum imaging by random binary partial projections.

Momentum is recovered by averaging Fourier-plane frames; position is recovered
from the integrated frame powers with total-variation compressive sensing.
"""

__version__ = "0.1.0"

from simulmeas.field import (
    Domain,
    Field2D,
    IntensityImage,
    Normalization,
    SceneKind,
    dft2_unitary,
    intensity,
    make_scene,
)
from simulmeas.sensing import (
    BinaryFilter,
    FilterSpectrumModel,
    SensingPlan,
    Source,
    apply_sensing,
    apply_sensing_adjoint,
    build_plan,
    filter_row,
    filter_spectrum_stats,
)
from simulmeas.forward import (
    CcdFrame,
    CcdModel,
    MeasurementRecord,
    SaturationError,
    capture_frame,
    integrate_frame,
    momentum_intensity_exact,
    partial_project,
    run_acquisition,
)
from simulmeas.recovery import (
    DivergenceError,
    ReconstructionResult,
    SolverConfig,
    discrete_gradient,
    recover_momentum,
    recover_position_tv,
    recover_position_weighted_sum,
    shrink,
    tv,
)
from simulmeas.records import load_record, save_record
from simulmeas.bench import CurveData, Metrics, image_metrics, momentum_mse_curve

__all__ = [
    "BinaryFilter",
    "CcdFrame",
    "CcdModel",
    "CurveData",
    "DivergenceError",
    "Domain",
    "Field2D",
    "FilterSpectrumModel",
    "IntensityImage",
    "MeasurementRecord",
    "Metrics",
    "Normalization",
    "ReconstructionResult",
    "SaturationError",
    "SceneKind",
    "SensingPlan",
    "SolverConfig",
    "Source",
    "apply_sensing",
    "apply_sensing_adjoint",
    "build_plan",
    "capture_frame",
    "dft2_unitary",
    "discrete_gradient",
    "filter_row",
    "filter_spectrum_stats",
    "image_metrics",
    "integrate_frame",
    "intensity",
    "load_record",
    "make_scene",
    "momentum_intensity_exact",
    "momentum_mse_curve",
    "partial_project",
    "recover_momentum",
    "recover_position_tv",
    "recover_position_weighted_sum",
    "run_acquisition",
    "save_record",
    "shrink",
    "tv",
]
