"""Momentum and position recovery from a measurement record.

Position recovery solves

    min_X  (mu / 2) * ||Y - F X||_2**2 + TV(X)

with anisotropic TV (sum of absolute forward differences) by an augmented
Lagrangian splitting in the style of TVAL3: an auxiliary ``w ~ D X`` is
updated by soft thresholding, X by a few projected Barzilai-Borwein steps,
and the multiplier by a dual ascent step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from simulmeas.field import IntensityImage, Normalization, normalize
from simulmeas.forward import MeasurementRecord
from simulmeas.sensing import SensingPlan, Source, apply_sensing, apply_sensing_adjoint


_ARMIJO = 1e-5
_NONMONOTONE = 0.9995


class DivergenceError(RuntimeError):
    def __init__(self, message, objective_trace):
        super().__init__(message)
        self.objective_trace = list(objective_trace)


def recover_momentum(record: MeasurementRecord) -> IntensityImage:
    """Average the frames, subtract the dark level, and normalize to unit sum."""
    if record.frame_count < 1:
        raise ValueError("record holds no frames to average")
    mean = record.frame_sum / record.frame_count
    if record.ccd.enabled:
        mean = mean - record.ccd.dark_mean
    return IntensityImage(normalize(np.maximum(mean, 0.0), Normalization.UNIT_SUM), Normalization.UNIT_SUM)


def recover_position_weighted_sum(record: MeasurementRecord | np.ndarray, plan: SensingPlan) -> IntensityImage:
    """Correlation estimate ``(1/M) * sum_i (Y_i - mean(Y)) * (F_i - mean_i(F_i))``.

    Subtracting the empirical filter mean column by column removes the
    transmit-level pedestal (about ``P * mean(Y)`` per pixel). The result is
    clamped at zero and normalized to unit sum; an all-zero estimate is
    returned raw.
    """
    y = _measurements(record, plan)
    ones = np.ones(plan.m)
    mean_filter = apply_sensing_adjoint(plan, ones) / plan.m
    est = apply_sensing_adjoint(plan, y) / plan.m - y.mean() * mean_filter
    est = np.maximum(est, 0.0).reshape(plan.side, plan.side)
    if not np.any(est > 0):
        return IntensityImage(np.zeros_like(est), Normalization.RAW)
    return IntensityImage(normalize(est, Normalization.UNIT_SUM), Normalization.UNIT_SUM)


def discrete_gradient(x: np.ndarray) -> np.ndarray:
    """Forward differences as a ``(2, side, side)`` stack: horizontal, then vertical.

    The last column of the horizontal plane and the last row of the vertical
    plane are zero.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros((2,) + x.shape)
    g[0, :, :-1] = x[:, 1:] - x[:, :-1]
    g[1, :-1, :] = x[1:, :] - x[:-1, :]
    return g


def discrete_gradient_adjoint(g: np.ndarray) -> np.ndarray:
    gx, gy = g[0], g[1]
    out = np.zeros(gx.shape)
    out[:, 1:] += gx[:, :-1]
    out[:, :-1] -= gx[:, :-1]
    out[1:, :] += gy[:-1, :]
    out[:-1, :] -= gy[:-1, :]
    return out


def tv(x: np.ndarray) -> float:
    """Anisotropic total variation: sum of ``|x_i - x_j|`` over adjacent pixel pairs."""
    return float(np.abs(discrete_gradient(x)).sum())


def shrink(v, t):
    """Soft thresholding ``sign(v) * max(|v| - t, 0)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 2.0**12
    beta: float = 2.0**5
    max_outer: int = 200
    inner_steps: int = 20
    tol: float = 1e-4
    nonneg: bool = True

    def __post_init__(self):
        if not (self.mu > 0 and self.beta > 0 and self.tol > 0):
            raise ValueError("mu, beta and tol must be positive")
        if self.max_outer < 1 or self.inner_steps < 1:
            raise ValueError("max_outer and inner_steps must be at least 1")


@dataclass
class ReconstructionResult:
    x: IntensityImage
    outer_iterations: int
    final_residual: float
    objective_trace: list[float] = field(default_factory=list)
    residual_trace: list[float] = field(default_factory=list)
    converged: bool = True


def operator_scale(plan: SensingPlan) -> float:
    """Norm used to bring F's rows to unit scale inside the solver.

    Zero-mean parts of the filter rows have squared norm about
    ``N * p * (1 - p)`` (exactly ``N / 4`` for Hadamard rows).
    """
    p = 0.5 if plan.source is Source.ONES else plan.p
    return float(np.sqrt(plan.n * p * (1 - p)))


def data_scale(y: np.ndarray) -> float:
    """Norm of Y with its mean removed, or ``||Y||`` when Y is constant.

    Every filter passes roughly the same fraction of the total power, so Y is
    a large common pedestal plus the variations that carry the image. Scaling
    by the variations keeps the balance between the two objective terms
    independent of the pedestal, the gain, and M.
    """
    y = np.asarray(y, dtype=np.float64)
    total = float(np.linalg.norm(y))
    varying = float(np.linalg.norm(y - y.mean()))
    return varying if varying > 1e-12 * total else total


def tv_objective(x: np.ndarray, y: np.ndarray, plan: SensingPlan, mu: float) -> float:
    """Objective the solver minimizes, evaluated at a raw image ``x``.

    Internally Y is divided by :func:`data_scale` and F by
    :func:`operator_scale`, so the unknown becomes
    ``x * operator_scale / data_scale``. ``mu`` therefore has the same
    meaning whatever the detector gain or grid size.
    """
    y = np.asarray(y, dtype=np.float64)
    scale = data_scale(y) or 1.0
    x = np.asarray(x, dtype=np.float64).reshape(plan.side, plan.side)
    r = (apply_sensing(plan, x.ravel()) - y) / scale
    return 0.5 * mu * float(r @ r) + tv(x) * operator_scale(plan) / scale


def solve_tv(y: np.ndarray, plan: SensingPlan, cfg: SolverConfig = SolverConfig()) -> ReconstructionResult:
    """TV-regularized least squares for ``Y = F X``; X is returned in Y's units (raw).

    ``objective_trace`` holds :func:`tv_objective` after each multiplier
    cycle; ``residual_trace`` and ``final_residual`` are ``||Y - F X|| / ||Y||``.

    The iterate with the lowest objective is returned. ``converged`` is False
    when ``max_outer`` cycles ran without the relative change in X dropping
    below ``tol``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (plan.m,):
        raise ValueError(f"y has shape {y.shape}, plan has m={plan.m}")
    side, n = plan.side, plan.n
    scale = data_scale(y)
    if scale == 0.0:
        return ReconstructionResult(IntensityImage(np.zeros((side, side))), 1, 0.0, [0.0], [0.0], True)
    b = y / scale
    # residuals are reported relative to ||Y||
    y_rel = scale / float(np.linalg.norm(y))
    mu, beta = cfg.mu, cfg.beta
    sigma = operator_scale(plan)

    def op(v):
        return apply_sensing(plan, v) / sigma

    def op_t(v):
        return apply_sensing_adjoint(plan, v) / sigma

    # F @ ones: the direction along which the data term is stiffest
    f_ones = op(np.ones(n))
    f_ones_sq = float(f_ones @ f_ones)

    def fit_dc(x, fx):
        # exact minimization of the data term along the all-ones direction
        t = float(f_ones @ (b - fx)) / f_ones_sq
        x = x + t
        fx = fx + t * f_ones
        if cfg.nonneg and t < 0:
            x = np.maximum(x, 0.0)
            fx = op(x)
        return x, fx

    # back-projection of the varying part of b: for orthonormal centered rows
    # this is the minimum-norm least-squares image
    x = op_t(b - b.mean())
    if cfg.nonneg:
        x = np.maximum(x, 0.0)
    x, fx = fit_dc(x, op(x))
    lam = np.zeros((2, side, side))
    w = discrete_gradient(x.reshape(side, side))
    alpha = None
    objective_trace, residual_trace = [], []
    best = (np.inf, x, np.inf)
    converged = False
    k = 0

    for k in range(1, cfg.max_outer + 1):
        x_prev = x
        dx = discrete_gradient(x.reshape(side, side))
        w = shrink(dx + lam / beta, 1.0 / beta)
        target = w - lam / beta

        def subproblem(x, fx):
            d = discrete_gradient(x.reshape(side, side)) - target
            r = fx - b
            value = 0.5 * beta * float(np.sum(d * d)) + 0.5 * mu * float(r @ r)
            grad = beta * discrete_gradient_adjoint(d).ravel() + mu * op_t(r)
            return value, grad

        q, g = subproblem(x, fx)
        if alpha is None:
            ag = beta * discrete_gradient_adjoint(discrete_gradient(g.reshape(side, side))).ravel()
            fg = op(g)
            ag += mu * op_t(fg)
            curvature = float(g @ ag)
            alpha = float(g @ g) / curvature if curvature > 0 else 1.0
        # nonmonotone Armijo test against a running average of Q (Zhang-Hager)
        ref, weight = q, 1.0
        for _ in range(cfg.inner_steps):
            step = alpha
            for _ in range(40):
                x_new = x - step * g
                if cfg.nonneg:
                    x_new = np.maximum(x_new, 0.0)
                fx_new = op(x_new)
                x_new, fx_new = fit_dc(x_new, fx_new)
                q_new, g_new = subproblem(x_new, fx_new)
                if q_new <= ref + _ARMIJO * float(g @ (x_new - x)):
                    break
                step *= 0.5
            else:
                break
            s, dg = x_new - x, g_new - g
            sd = float(s @ dg)
            if sd > 0:
                alpha = float(s @ s) / sd
            x, fx, q, g = x_new, fx_new, q_new, g_new
            weight_next = _NONMONOTONE * weight + 1.0
            ref = (_NONMONOTONE * weight * ref + q) / weight_next
            weight = weight_next

        lam = lam + beta * (discrete_gradient(x.reshape(side, side)) - w)

        r = fx - b
        objective = 0.5 * mu * float(r @ r) + tv(x.reshape(side, side))
        residual = float(np.linalg.norm(r)) * y_rel
        if not np.isfinite(objective):
            raise DivergenceError(f"objective became non-finite at outer iteration {k}", objective_trace)
        objective_trace.append(objective)
        residual_trace.append(residual)
        if objective < best[0]:
            best = (objective, x, residual)

        change = np.linalg.norm(x - x_prev) / max(np.linalg.norm(x_prev), np.finfo(float).tiny)
        if change < cfg.tol:
            converged = True
            break

    # the augmented Lagrangian iteration is not monotone in the objective; keep the best iterate
    _, x, _ = best
    # without the nonnegativity constraint, negative pixels are clipped on output only
    image = IntensityImage(np.maximum(x, 0.0).reshape(side, side) * (scale / sigma))
    residual = float(np.linalg.norm(y - apply_sensing(plan, image.values.ravel())) / np.linalg.norm(y))
    return ReconstructionResult(image, k, residual, objective_trace, residual_trace, converged)


def recover_position_tv(
    record: MeasurementRecord | np.ndarray, plan: SensingPlan, cfg: SolverConfig = SolverConfig()
) -> ReconstructionResult:
    """Recover ``|psi(x)|**2`` from a record's integrated powers.

    When given a record, the estimate is divided by the detector gain so it
    is in the same units as the ground-truth intensity.
    """
    y = _measurements(record, plan)
    result = solve_tv(y, plan, cfg)
    if isinstance(record, MeasurementRecord):
        result.x = IntensityImage(result.x.values / record.ccd.gain)
    return result


def _measurements(record, plan):
    y = record.y if isinstance(record, MeasurementRecord) else np.asarray(record, dtype=np.float64)
    if y.shape != (plan.m,):
        raise ValueError(f"measurement vector has shape {y.shape}, plan has m={plan.m}")
    return y
