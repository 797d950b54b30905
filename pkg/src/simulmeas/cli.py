"""Command-line entry point: ``simulmeas <command> [flags]``.

Every command writes its outputs plus ``run.txt`` (all parameters, seed and
package version) into ``--out``. A ``--config`` file of ``key=value`` lines
sets flag defaults; flags given on the command line win.

Exit codes: 0 success, 2 bad flags or configuration, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from simulmeas import __version__
from simulmeas.bench import image_metrics, momentum_mse_curve
from simulmeas.field import Normalization, SceneKind, dft2_unitary, intensity, make_scene
from simulmeas.forward import CcdModel, run_acquisition, suggest_gain
from simulmeas.kvfile import parse_bool, read_kv, write_kv
from simulmeas.pgm import quantize_unit, write_pgm
from simulmeas.records import load_record, save_record, write_table_csv, write_vector_csv
from simulmeas.recovery import SolverConfig, recover_momentum, recover_position_tv, recover_position_weighted_sum
from simulmeas.sensing import (
    Source,
    build_plan,
    filter_row,
    filter_spectrum_stats,
    lattice_spectrum_model,
)


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return value


def _add_common(p: argparse.ArgumentParser, seed=True) -> None:
    p.add_argument("--out", type=Path, default=None, help="output directory (default ./<command>-out)")
    p.add_argument("--config", type=Path, default=None, help="key=value file of flag defaults")
    p.add_argument("--threads", type=int, default=1, help="worker threads (1 = serial)")
    if seed:
        p.add_argument("--seed", type=_seed, default=0)


def _add_scene(p: argparse.ArgumentParser, default="triple-slit") -> None:
    p.add_argument("--scene", choices=[k.value for k in SceneKind], default=default)
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--image", type=Path, default=None, help="P5 graymap for --scene from-image")
    p.add_argument("--slit-width", type=int, default=None)
    p.add_argument("--slit-height", type=int, default=None)
    p.add_argument("--separation", type=int, default=None)


def _add_ccd(p: argparse.ArgumentParser, default_on=True) -> None:
    p.add_argument("--noise", dest="noise", action="store_true", default=default_on, help="enable the CCD model")
    p.add_argument("--no-noise", dest="noise", action="store_false", help="ideal detector")
    p.add_argument("--bit-depth", type=int, default=12)
    p.add_argument("--dark-mean", type=float, default=50.0)
    p.add_argument("--dark-std", type=float, default=10.0)
    p.add_argument("--gain", type=float, default=None, help="counts per unit intensity (default: automatic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simulmeas", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene", help="write a scene and its momentum intensity")
    _add_scene(p)
    _add_common(p, seed=False)

    p = sub.add_parser("acquire", help="simulate an acquisition and save the record")
    _add_scene(p)
    p.add_argument("--m", type=int, default=None, help="number of filters (default N/10)")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--source", choices=[s.value for s in Source], default=Source.HADAMARD.value)
    p.add_argument("--include-dc", action="store_true", default=False)
    p.add_argument("--keep-every", type=int, default=0, help="retain every j-th frame (0 = none)")
    _add_ccd(p)
    _add_common(p)

    p = sub.add_parser("recover", help="reconstruct momentum and position from a record")
    p.add_argument("--record", type=Path, required=True)
    p.add_argument("--method", choices=["tv", "weighted-sum"], default="tv")
    p.add_argument("--mu", type=float, default=SolverConfig.mu)
    p.add_argument("--beta", type=float, default=SolverConfig.beta)
    p.add_argument("--max-outer", type=int, default=SolverConfig.max_outer)
    p.add_argument("--inner-steps", type=int, default=SolverConfig.inner_steps)
    p.add_argument("--tol", type=float, default=SolverConfig.tol)
    p.add_argument("--nonneg", dest="nonneg", action="store_true", default=True)
    p.add_argument("--no-nonneg", dest="nonneg", action="store_false")
    _add_common(p, seed=False)

    p = sub.add_parser("bench-mse", help="momentum MSE versus number of filters")
    _add_scene(p)
    p.add_argument("--m-list", type=_int_list, default=[1, 10, 100, 500])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--source", choices=[s.value for s in Source], default=Source.HADAMARD.value)
    _add_ccd(p, default_on=False)
    _add_common(p)

    p = sub.add_parser("filter-stats", help="noise-to-peak statistics of filter spectra")
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--count", type=int, default=100, help="number of filters")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--source", choices=[s.value for s in Source], default=Source.BERNOULLI.value)
    _add_common(p)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    if not args.config.is_file():
        raise ConfigError(f"config file not found: {args.config}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in read_kv(args.config).items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        action = actions[dest]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)) or action.const is not None:
            defaults[dest] = parse_bool(value)
        elif action.type is not None:
            try:
                defaults[dest] = action.type(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from None
        else:
            defaults[dest] = value
        if action.choices is not None and defaults[dest] not in action.choices:
            raise ConfigError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _run_manifest(args: argparse.Namespace) -> dict:
    # the output directory is left out so that identical runs give identical files
    skip = {"out", "config", "threads"}
    items = {"command": args.command, "version": __version__}
    for key, value in sorted(vars(args).items()):
        if key in skip or key == "command" or value is None:
            continue
        items[key.replace("_", "-")] = str(value) if isinstance(value, Path) else value
    return items


def _scene(args):
    if args.scene == SceneKind.FROM_IMAGE.value and args.image is None:
        raise ConfigError("--scene from-image needs --image")
    if args.image is not None and not args.image.is_file():
        raise ConfigError(f"image not found: {args.image}")
    return make_scene(
        args.scene,
        args.side,
        slit_width=args.slit_width,
        slit_height=args.slit_height,
        separation=args.separation,
        image=args.image,
    )


def _ccd(args, field, p):
    ccd = CcdModel(args.bit_depth, args.dark_mean, args.dark_std, 1.0, args.noise)
    if args.gain is not None:
        return ccd.with_gain(args.gain)
    return ccd.with_gain(suggest_gain(field, ccd, p)) if ccd.enabled else ccd


def _write_images(out: Path, stem: str, img: np.ndarray) -> None:
    write_pgm(out / f"{stem}.pgm", quantize_unit(img), 65535)


def cmd_scene(args, out):
    field = _scene(args)
    _write_images(out, "position", intensity(field).values)
    momentum = intensity(dft2_unitary(field), Normalization.UNIT_MAX).values
    _write_images(out, "momentum", momentum)
    # square-root mapping brings out the weak fringes for display
    _write_images(out, "momentum_sqrt", np.sqrt(momentum))
    return {"total_power": field.total_power}


def cmd_acquire(args, out):
    field = _scene(args)
    n = args.side**2
    m = max(1, n // 10) if args.m is None else args.m
    args.m = m
    plan = build_plan(n, m, args.p, args.source, args.seed, include_dc=args.include_dc)
    ccd = _ccd(args, field, args.p)
    record = run_acquisition(field, plan, ccd, args.seed, keep_every=args.keep_every, threads=args.threads)
    save_record(record, out / "record")
    momentum = recover_momentum(record).values
    _write_images(out, "momentum_mean", momentum / momentum.max())
    return {"gain": ccd.gain, "m": m}


def cmd_recover(args, out):
    if not (args.record / "manifest.txt").is_file():
        raise ConfigError(f"not a record directory: {args.record}")
    record = load_record(args.record)
    plan = record.plan
    summary = {}
    if args.method == "tv":
        cfg = SolverConfig(args.mu, args.beta, args.max_outer, args.inner_steps, args.tol, args.nonneg)
        result = recover_position_tv(record, plan, cfg)
        estimate = result.x.values
        rows = [
            (k + 1, obj, res)
            for k, (obj, res) in enumerate(zip(result.objective_trace, result.residual_trace))
        ]
        write_table_csv(out / "convergence.csv", ("iteration", "objective", "residual"), rows)
        summary.update(
            outer_iterations=result.outer_iterations,
            final_residual=result.final_residual,
            converged=result.converged,
        )
    else:
        estimate = recover_position_weighted_sum(record, plan).values
    if estimate.max() > 0:
        _write_images(out, "position", estimate / estimate.max())
    else:
        write_pgm(out / "position.pgm", np.zeros(estimate.shape, dtype=np.int64), 65535)
    momentum = recover_momentum(record).values
    _write_images(out, "momentum", momentum / momentum.max())
    if record.ground_truth is not None and estimate.max() > 0:
        truth = intensity(record.ground_truth).values
        if truth.max() > truth.min():
            metrics = image_metrics(estimate, truth)
            summary.update(mse=metrics.mse, psnr=metrics.psnr, pearson=metrics.pearson)
    write_kv(out / "summary.txt", summary)
    return summary


def cmd_bench_mse(args, out):
    field = _scene(args)
    ccd = _ccd(args, field, args.p) if args.noise else None
    curve = momentum_mse_curve(
        field, args.m_list, args.trials, args.seed, ccd, args.source, args.p, args.scene, args.threads
    )
    (out / "curve.csv").write_text(curve.to_csv(), encoding="utf-8", newline="")
    return {"m_max": max(curve.m_values)}


def cmd_filter_stats(args, out):
    n = args.side**2
    if args.count < 1:
        raise ConfigError("--count must be at least 1")
    source = Source(args.source)
    if source is Source.HADAMARD and args.count > n - 1:
        raise ConfigError(f"--count {args.count} exceeds the {n - 1} non-DC Hadamard rows")
    plan = build_plan(n, args.count, args.p, source, args.seed)
    rows, ratios = [], []
    for i in range(plan.m):
        stats = filter_spectrum_stats(filter_row(plan, i))
        ratios.append(stats.noise_to_peak_ratio)
        rows.append((i, stats.peak_amplitude, stats.noise_rms_amplitude, stats.noise_to_peak_ratio))
    write_table_csv(out / "filters.csv", ("index", "peak", "noise_rms", "ratio"), rows)
    model = lattice_spectrum_model(n, args.p)
    summary = {
        "n": n,
        "ratio_mean": float(np.mean(ratios)),
        "ratio_std": float(np.std(ratios)),
        "inverse_sqrt_n": 1.0 / np.sqrt(n),
        "sqrt_two_over_n": float(np.sqrt(2.0 / n)),
        "lattice_model_ratio": model.noise_to_peak_ratio,
    }
    write_kv(out / "summary.txt", summary)
    return summary


COMMANDS = {
    "scene": cmd_scene,
    "acquire": cmd_acquire,
    "recover": cmd_recover,
    "bench-mse": cmd_bench_mse,
    "filter-stats": cmd_filter_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, ValueError) as exc:
        print(f"simulmeas: error: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("simulmeas: error: --threads must be at least 1", file=sys.stderr)
        return 2

    out = args.out if args.out is not None else Path(f"{args.command}-out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"simulmeas: error: cannot create output directory: {exc}", file=sys.stderr)
        return 2

    try:
        results = COMMANDS[args.command](args, out)
    except ValueError as exc:
        print(f"simulmeas: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: saturation, divergence, I/O
        print(f"simulmeas: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest = _run_manifest(args)
    manifest.update({f"result.{k}": v for k, v in results.items()})
    write_kv(out / "run.txt", manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
