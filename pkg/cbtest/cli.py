"""Command line interface: ``python -m cbtest {test,simulate,snr,figures}``.

Reports and summaries go to stdout as JSON; progress and a rounded one-line
summary go to the log (stderr).
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .asymptotics import (
    gaussian_power,
    inner_product,
    project_Lstar,
    snr_kernel,
    snr_linear,
    tv_power,
)
from .config import configure_logging, get_settings
from .dataio import RunManifest, read_pairs, rescale_unit, write_ecdf, write_json, write_rows
from .distmodel import (
    DependenceAlternative,
    DistributionSpec,
    EqualityAlternative,
    builtin_alternative,
    builtin_distribution,
    parse_alternative,
    q_direction,
)
from .empirical import ColourBlindSample
from .errors import CbtestError, ConfigError, DataError
from .montecarlo import (
    DependenceModel,
    EqualityModel,
    NullModel,
    SimConfig,
    critical_value,
    ecdf_distance,
    ecdf_gap,
    p_value,
    simulate,
    statistic_function,
)
from .statistics import (
    KS_EXACT_LIMIT,
    TestReport,
    cone_membership,
    direction_by_name,
    inequality_chain,
    inner_q2,
    kernel_by_name,
    maxima_shift,
    maxima_variance,
    power_shift_reference,
    snr_maxima,
)

logger = logging.getLogger("cbtest.cli")

LEVELS = (0.10, 0.05, 0.01)
TEST_STATISTICS = ("ks-sym", "linear", "maxima", "cross-prob")
FIGURE_ALT = "uniform-vs-square"


# --- Shared building blocks (also used by the HTTP service) ----------------


def parse_model(text: str, epsilon: Optional[float] = None):
    """``null-<dist>``, ``equality:<alt>``, ``dependence:<alt>`` or a bare alternative."""
    if text.startswith("null-"):
        return NullModel(builtin_distribution(text[len("null-"):]))

    kind = None
    spec = text
    for prefix in ("equality:", "dependence:"):
        if text.startswith(prefix):
            kind, spec = prefix[:-1], text[len(prefix):]
    alt = parse_alternative(spec)
    if epsilon is not None:
        alt = alt.with_epsilon(epsilon)

    if isinstance(alt, DependenceAlternative):
        if kind == "equality":
            raise ConfigError(f"{spec!r} is a dependence alternative")
        return DependenceModel(alt)
    if kind == "dependence":
        raise ConfigError(f"{spec!r} is an equality alternative")
    return EqualityModel(alt)


def resolve_direction(statistic: str, alt=None, kernel: Optional[str] = None, model=None):
    if statistic not in ("linear", "maxima"):
        return None
    if kernel:
        return kernel_by_name(kernel) if statistic == "linear" else direction_by_name(kernel)
    if alt is not None:
        parsed = parse_alternative(alt)
        if not isinstance(parsed, EqualityAlternative):
            raise ConfigError(f"statistic {statistic!r} needs an equality alternative")
        return parsed
    if isinstance(model, EqualityModel):
        return model.alt
    raise ConfigError(f"statistic {statistic!r} needs --alt or --kernel")


def run_test(a, b, statistic: str, alt=None, kernel: Optional[str] = None, model: Optional[str] = None,
             reps: Optional[int] = None, seed: Optional[int] = None, workers: Optional[int] = None,
             tail: Optional[str] = None, levels: Sequence[float] = LEVELS) -> TestReport:
    """Observed statistic on colour-blind pairs with a simulated null."""
    settings = get_settings()
    reps = settings.replications if reps is None else reps
    seed = settings.seed if seed is None else seed

    if statistic == "ks-full":
        raise ConfigError("ks-full needs labeled pairs; colour-blind data supports ks-sym")
    if statistic not in TEST_STATISTICS:
        raise ConfigError(f"unknown statistic {statistic!r} (choose from {', '.join(TEST_STATISTICS)})")

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2:
        raise DataError(f"need at least 2 pairs, got {a.size}")
    a, b, scaling = rescale_unit(a, b)
    sample = ColourBlindSample.from_pairs(a, b)

    direction = resolve_direction(statistic, alt, kernel)
    if model is not None:
        null = parse_model(model)
        if not isinstance(null, NullModel):
            raise ConfigError(f"the null model must be null-<distribution>, got {model!r}")
    elif isinstance(direction, EqualityAlternative):
        null = NullModel(direction.base)
    else:
        null = NullModel(DistributionSpec.uniform())

    notes = [scaling.describe(), f"null simulated under Q={null.Q.name}"]
    if statistic == "ks-sym" and sample.n > KS_EXACT_LIMIT:
        notes.append("supremum taken over a thinned grid")

    config = SimConfig(statistic, sample.n, reps, seed, null, direction, workers, tail)
    observed = statistic_function(statistic, direction)(sample)
    table = simulate(config)
    return TestReport(
        statistic=statistic,
        observed=float(observed),
        p_value=p_value(table, observed),
        critical_values={level: critical_value(table, level) for level in levels},
        replications=reps,
        seed=seed,
        n=sample.n,
        notes=notes,
        tail=config.tail,
    )


def snr_summary(alt, n: int, variant: str = "linear", epsilon: Optional[float] = None,
                kernel: Optional[str] = None, level: float = 0.05, reps: Optional[int] = None,
                seed: Optional[int] = None, workers: Optional[int] = None) -> dict:
    """SNR, null variance, expected shift and power predictions.

    For maxima statistics ``shift`` is the simulated mean under the
    alternative (``reps`` replications from ``seed``); the quadrature value
    and the ∫q d(z³) reference are reported next to it.
    """
    parsed = parse_alternative(alt)
    if not isinstance(parsed, EqualityAlternative):
        raise ConfigError("SNR is computed for equality alternatives")
    if epsilon is not None:
        parsed = parsed.with_epsilon(epsilon)
    root_n = math.sqrt(n)
    out = {"alt": parsed.name, "n": n, "variant": variant, "epsilon": parsed.epsilon}

    if variant == "linear":
        if kernel:
            k = kernel_by_name(kernel)
            projected = project_Lstar(k, parsed.base)
            variance = inner_product(projected, projected, parsed.base)
            snr = snr_kernel(k, parsed, n)
            out["kernel"] = k.name
        else:
            snr = snr_linear(parsed, n)
            variance = parsed.norm_squared() ** 2
        shift = -snr * math.sqrt(variance)
    elif variant == "maxima":
        alpha = direction_by_name(kernel) if kernel else q_direction(parsed)
        variance = maxima_variance(alpha, parsed.base)
        snr = snr_maxima(alpha, parsed, n)
        settings = get_settings()
        config = SimConfig(
            "maxima", n, settings.replications if reps is None else reps,
            settings.seed if seed is None else seed,
            EqualityModel(parsed), direction=alpha, workers=workers,
        )
        table = simulate(config)
        shift = table.mean()
        cone = cone_membership(alpha, parsed.base)
        out.update(
            shift_quadrature=root_n * maxima_shift(alpha, parsed),
            mc_shift=shift,
            mc_stderr=table.stderr(),
            mc_replications=config.replications,
            mc_seed=config.seed,
            inner_alpha_q=inner_q2(alpha, q_direction(parsed), parsed.base),
            shift_reference=power_shift_reference(parsed),
            cone_member=cone.is_member,
            cone_exceptional_points=int(cone.exceptional.size),
        )
    else:
        raise ConfigError(f"unknown variant {variant!r} (linear or maxima)")

    out.update(
        snr=snr,
        variance=variance,
        shift=shift,
        tv_power=tv_power(abs(snr)),
        gaussian_power=gaussian_power(abs(snr), level),
    )
    return out


# --- Subcommands ----------------------------------------------------------


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def cmd_test(args) -> int:
    a, b = read_pairs(args.data)
    levels = tuple(sorted(set(LEVELS) | ({args.level} if args.level else set()), reverse=True))
    report = run_test(
        a, b, args.statistic, alt=args.alt, kernel=args.kernel, model=args.model,
        reps=args.reps, seed=args.seed, workers=args.workers, tail=args.tail, levels=levels,
    )
    _emit(report.to_dict())
    if args.out:
        out = Path(args.out)
        manifest_path = out.with_suffix(".manifest.json")
        write_json({**report.to_dict(), "manifest": manifest_path.name}, out)
        inputs = {**_args_dict(args), "reps": report.replications, "seed": report.seed}
        RunManifest("test", {"args": inputs}, report.seed, [str(args.data)], [str(out)]).write(manifest_path)
    logger.info("%s = %.4f, p = %.4f (n=%d, R=%d)", report.statistic, report.observed,
                report.p_value, report.n, report.replications)
    return 0


def cmd_simulate(args) -> int:
    settings = get_settings()
    model = parse_model(args.model, args.epsilon)
    direction = resolve_direction(args.statistic, args.alt, args.kernel, model)
    config = SimConfig(
        args.statistic, args.n, settings.replications if args.reps is None else args.reps,
        settings.seed if args.seed is None else args.seed,
        model, direction, args.workers, args.tail,
    )
    table = simulate(config)
    out = Path(args.out)
    manifest_path = out.with_suffix(".manifest.json")
    csv_path, json_path = write_ecdf(table, out, manifest_path.name)
    recorded = {
        "args": {**_args_dict(args), "reps": config.replications, "seed": config.seed},
        "resolved": config.to_dict(),
    }
    RunManifest("simulate", recorded, config.seed, [], [str(csv_path), str(json_path)]).write(manifest_path)

    summary = {"csv": str(csv_path), "replications": table.replications, "mean": table.mean()}
    if args.level:
        summary["critical_value"] = critical_value(table, args.level)
    _emit(summary)
    logger.info("%s: mean %.4f over %d replications -> %s", config.statistic, table.mean(),
                table.replications, csv_path)
    return 0


def cmd_snr(args) -> int:
    summary = snr_summary(args.alt, args.n, args.variant, args.epsilon, args.kernel, args.level or 0.05,
                          reps=args.reps, seed=args.seed, workers=args.workers)
    _emit(summary)
    logger.info("SNR %.3f (variance %.5f, shift %.5f)", summary["snr"], summary["variance"], summary["shift"])
    return 0


def _write_curves(path: Path, tables: dict) -> Path:
    rows = ((name, v, p) for name, t in tables.items() for v, p in zip(t.values, t.probabilities))
    return write_rows(path, ("curve", "value", "probability"), rows)


def cmd_figures(args) -> int:
    settings = get_settings()
    out = Path(args.out or "figures")
    seed = settings.seed if args.seed is None else args.seed
    reps = settings.replications if args.reps is None else args.reps
    n_null = args.n or 1000
    n_alt = args.n or 500
    summary = {}

    inputs = {**_args_dict(args), "reps": reps, "seed": seed, "out": str(out)}

    def manifest(name: str, resolved: dict, outputs) -> None:
        recorded = {"args": inputs, "resolved": resolved}
        RunManifest("figures", recorded, seed, [], [str(p) for p in outputs]).write(out / f"{name}.manifest.json")

    uniform = DistributionSpec.uniform()
    square = DistributionSpec.power(2)
    grid = np.linspace(0.0, 1.0, args.grid or 201)
    lo, mid, hi = inequality_chain(uniform, square, grid)
    fig1 = write_rows(out / "fig1.csv", ("x", "lo", "mid", "hi"), zip(grid, lo, mid, hi))
    manifest("fig1", {"p1": uniform.name, "p2": square.name, "grid": grid.size}, [fig1])

    null_uniform = NullModel(uniform)
    fig3_tables = {
        stat: simulate(SimConfig(stat, n_null, reps, seed, null_uniform, workers=args.workers))
        for stat in ("ks-full", "ks-sym")
    }
    fig3 = _write_curves(out / "fig3.csv", fig3_tables)
    manifest("fig3", {k: t.config.to_dict() for k, t in fig3_tables.items()}, [fig3])
    summary["fig3_min_gap"] = float(np.min(ecdf_gap(fig3_tables["ks-sym"], fig3_tables["ks-full"])))

    alt = builtin_alternative(FIGURE_ALT)
    for name, stat in (("fig4", "ks-sym"), ("fig5", "ks-full")):
        tables = {
            "null": simulate(SimConfig(stat, n_alt, reps, seed, NullModel(alt.base), workers=args.workers)),
            "alternative": simulate(SimConfig(stat, n_alt, reps, seed, EqualityModel(alt), workers=args.workers)),
        }
        path = _write_curves(out / f"{name}.csv", tables)
        manifest(name, {k: t.config.to_dict() for k, t in tables.items()}, [path])
        summary[f"{name}_gap"] = ecdf_distance(tables["null"], tables["alternative"])

    _emit({"out": str(out), **summary})
    logger.info("figures written to %s (fig4 gap %.3f, fig5 gap %.3f)", out,
                summary["fig4_gap"], summary["fig5_gap"])
    return 0


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "handler" and not callable(v)}


def manifest_argv(manifest: dict, out: Optional[str] = None) -> list:
    """Command line that repeats the run recorded in a manifest.

    ``out`` redirects the outputs; everything else, including inline JSON
    alternatives, is taken verbatim from the recorded arguments.
    """
    recorded = dict(manifest["config"]["args"])
    argv = [recorded.pop("cmd", manifest["subcommand"])]
    recorded.pop("log_level", None)
    if "data" in recorded:
        argv.append(str(recorded.pop("data")))
    if out is not None:
        recorded["out"] = out
    for key, value in recorded.items():
        if value is not None:
            argv += [f"--{key.replace('_', '-')}", str(value)]
    return argv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbtest", description="Colour-blind two-sample tests")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, type=str.upper,
                        choices=("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"), help="overrides CBTEST_LOG_LEVEL")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--reps", type=int, default=None, help="Monte Carlo replications")
        p.add_argument("--seed", type=int, default=None, help="master seed (default CBTEST_SEED)")
        p.add_argument("--workers", type=int, default=None, help="worker threads (capped by CBTEST_THREADS)")
        p.add_argument("--level", type=float, default=None)
        p.add_argument("--out", default=None)

    test_p = sub.add_parser("test", help="test colour-blind data from a CSV file")
    test_p.add_argument("data", help="CSV with two columns per pair")
    test_p.add_argument("--statistic", required=True, choices=TEST_STATISTICS + ("ks-full",))
    test_p.add_argument("--alt", default=None)
    test_p.add_argument("--kernel", default=None)
    test_p.add_argument("--model", default=None, help="null model, e.g. null-uniform")
    test_p.add_argument("--tail", default=None, choices=("right", "left", "two-sided"))
    common(test_p)
    test_p.set_defaults(handler=cmd_test)

    sim_p = sub.add_parser("simulate", help="simulate a statistic and write its ECDF")
    sim_p.add_argument("--statistic", required=True, choices=("ks-sym", "ks-full", "linear", "maxima", "cross-prob"))
    sim_p.add_argument("--model", default="null-uniform")
    sim_p.add_argument("--alt", default=None)
    sim_p.add_argument("--kernel", default=None)
    sim_p.add_argument("--n", type=int, required=True)
    sim_p.add_argument("--epsilon", type=float, default=None)
    sim_p.add_argument("--tail", default=None, choices=("right", "left", "two-sided"))
    common(sim_p)
    sim_p.set_defaults(handler=cmd_simulate, out="ecdf.csv")

    snr_p = sub.add_parser("snr", help="signal-to-noise ratio of a linear or maxima statistic")
    snr_p.add_argument("--alt", default="example-4-2")
    snr_p.add_argument("--n", type=int, default=400)
    snr_p.add_argument("--variant", default="linear", choices=("linear", "maxima"))
    snr_p.add_argument("--kernel", default=None)
    snr_p.add_argument("--epsilon", type=float, default=None)
    snr_p.add_argument("--level", type=float, default=None)
    snr_p.add_argument("--reps", type=int, default=None, help="replications of the simulated maxima shift")
    snr_p.add_argument("--seed", type=int, default=None)
    snr_p.add_argument("--workers", type=int, default=None)
    snr_p.set_defaults(handler=cmd_snr)

    fig_p = sub.add_parser("figures", help="write the figure data as CSV files")
    fig_p.add_argument("--n", type=int, default=None, help="overrides the sample sizes 1000/500")
    fig_p.add_argument("--grid", type=int, default=None, help="points of the inequality-chain grid")
    common(fig_p)
    fig_p.set_defaults(handler=cmd_figures)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level)
        return args.handler(args)
    except CbtestError as e:
        logger.error("%s", e)
        return e.exit_code
    except OSError as e:
        logger.error("I/O failure: %s", e)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
