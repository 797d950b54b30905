"""Desk-scale studies: momentum error versus number of filters, and image metrics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from simulmeas.field import Field2D, IntensityImage, Normalization, dft2_unitary, intensity, normalize
from simulmeas.forward import CcdModel, run_acquisition, suggest_gain
from simulmeas.recovery import recover_momentum
from simulmeas.sensing import Source, build_plan

_TAG_TRIALS = 5


@dataclass(frozen=True)
class Metrics:
    mse: float
    psnr: float
    pearson: float


@dataclass
class CurveData:
    m_values: list[int]
    mse_mean: list[float]
    mse_std: list[float]
    trials: int
    scene: str
    side: int
    # per-trial MSE, shape (trials, len(m_values))
    samples: np.ndarray | None = None

    def to_csv(self) -> str:
        lines = ["M,mse_mean,mse_std"]
        for m, mean, std in zip(self.m_values, self.mse_mean, self.mse_std):
            lines.append(f"{m},{mean!r},{std!r}")
        return "\n".join(lines) + "\n"


def image_metrics(estimate: IntensityImage | np.ndarray, truth: IntensityImage | np.ndarray) -> Metrics:
    """Compare two images after normalizing each to unit sum.

    PSNR takes the truth's peak as the signal level, so it equals the PSNR of
    both images rescaled by the truth's maximum.
    """
    est = _values(estimate)
    ref = _values(truth)
    if est.shape != ref.shape:
        raise ValueError(f"image shapes differ: {est.shape} vs {ref.shape}")
    est = normalize(est, Normalization.UNIT_SUM)
    ref = normalize(ref, Normalization.UNIT_SUM)
    diff = est - ref
    mse = float(np.mean(diff * diff))
    peak = float(ref.max())
    psnr = float("inf") if mse == 0 else float(10 * np.log10(peak * peak / mse))
    ref_c = ref - ref.mean()
    est_c = est - est.mean()
    ref_ss = float(np.sum(ref_c * ref_c))
    if ref_ss == 0:
        raise ValueError("truth image is constant; correlation is undefined")
    est_ss = float(np.sum(est_c * est_c))
    pearson = 0.0 if est_ss == 0 else float(np.sum(ref_c * est_c) / np.sqrt(ref_ss * est_ss))
    return Metrics(mse, psnr, float(np.clip(pearson, -1.0, 1.0)))


def _values(img):
    return np.asarray(img.values if isinstance(img, IntensityImage) else img, dtype=np.float64)


def momentum_mse_curve(
    scene: Field2D,
    m_list,
    trials: int,
    seed: int,
    ccd: CcdModel | None = None,
    source: Source | str = Source.HADAMARD,
    p: float = 0.5,
    scene_name: str = "custom",
    threads: int = 1,
) -> CurveData:
    """Momentum MSE of the frame average against the true distribution, versus M.

    Each trial draws its own plan of ``max(m_list)`` filters; the estimate for
    each M averages that trial's first M frames. Both distributions are
    normalized to unit sum before differencing. ``ccd=None`` means an ideal
    detector; a CCD with ``gain=1`` gets :func:`suggest_gain`.
    """
    m_values = [int(m) for m in m_list]
    if not m_values or any(b < a for a, b in zip(m_values, m_values[1:])) or m_values[0] < 1:
        raise ValueError("m_list must be a non-empty ascending list of positive counts")
    if trials < 2:
        raise ValueError("need at least two trials for a spread estimate")
    if ccd is None:
        ccd = CcdModel(enabled=False)
    elif ccd.enabled and ccd.gain == 1.0:
        ccd = ccd.with_gain(suggest_gain(scene, ccd, p))

    truth = intensity(dft2_unitary(scene), Normalization.UNIT_SUM).values
    n = scene.side**2
    root = np.random.SeedSequence([int(seed), _TAG_TRIALS])
    trial_seeds = [int(s.generate_state(2, np.uint64)[0]) for s in root.spawn(trials)]

    def run_trial(trial_seed):
        out = []
        for m in m_values:
            # plans drawn with the same seed are prefixes of one another
            plan = build_plan(n, m, p, source, trial_seed)
            rec = run_acquisition(scene, plan, ccd, trial_seed, keep_every=0)
            est = recover_momentum(rec).values
            out.append(float(np.mean((est - truth) ** 2)))
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_trial, trial_seeds))
    else:
        rows = [run_trial(s) for s in trial_seeds]

    samples = np.array(rows)
    return CurveData(
        m_values=m_values,
        mse_mean=[float(v) for v in samples.mean(axis=0)],
        mse_std=[float(v) for v in samples.std(axis=0, ddof=1)],
        trials=trials,
        scene=scene_name,
        side=scene.side,
        samples=samples,
    )
