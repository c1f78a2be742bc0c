"""Batch front end: parse a config, dispatch one study or solver run, write reports.

One study per invocation; composition happens in the shell.  Exit codes:
0 on success, 1 when a fitted rate misses its acceptance band (or a checked
identity fails), 2 on usage or configuration errors.  Every run writes its
resolved configuration next to its outputs, and identical configurations
produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    INITIAL_DATA,
    TEST_FUNCTIONS,
    energy_rate_study,
    gronwall_trace,
    make_initial_field,
    operator_rate_study,
    remainder_rate_study,
    solution_convergence_study,
    symbol_study,
)
from .grid import Field, UniformGrid, l2_norm, save_field
from .kernels import (
    Kernel,
    eval_J,
    make_mollifier,
    moment_first,
    moment_second_trace,
    radial_mass_target,
    second_moment_per_axis,
    total_mass,
)
from .nonlocal_ops import apply_direct, apply_fft, l2_inner, pair_difference_double_sum
from .potentials import parse_potential
from .solvers import SolverConfig, run

PASS, BAND_FAIL, USAGE_ERROR = 0, 1, 2


def _parse_eps_list(text: str):
    try:
        values = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad scale list {text!r}") from None
    return values


def _load_config_file(path: str) -> dict[str, str]:
    """Flat key=value text; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _write_resolved_config(outdir: Path, args: argparse.Namespace) -> None:
    skip = {"config", "func_builder"}
    lines = []
    for key in sorted(vars(args)):
        if key in skip or key.startswith("_"):
            continue
        value = getattr(args, key)
        if callable(value):
            continue
        if isinstance(value, (tuple, list)):
            value = ",".join(repr(v) if not isinstance(v, float) else f"{v:.17g}" for v in value)
        lines.append(f"{key}={value}")
    (outdir / "resolved_config.txt").write_text("\n".join(lines) + "\n")


def _make_grid(args) -> UniformGrid:
    cells = tuple(int(n) for n in str(args.N).split(","))
    lengths = tuple(float(x) for x in str(args.L).split(","))
    if len(lengths) == 1 and len(cells) > 1:
        lengths = lengths * len(cells)
    return UniformGrid(lengths, cells, args.domain)


def _band_verdict(slope: float, lo, hi) -> bool:
    if lo is not None and slope < lo:
        return False
    if hi is not None and slope > hi:
        return False
    return True


def _emit_rate_outputs(outdir: Path, name: str, table, band, extra=None) -> int:
    from .reports import write_loglog_svg, write_rate_csv, write_summary_json

    lo, hi = band
    ok = _band_verdict(table.fitted_slope, lo, hi)
    summary = {
        "study": name,
        "slope": table.fitted_slope,
        "intercept": table.fitted_intercept,
        "r_squared": table.r_squared,
        "band_min": lo,
        "band_max": hi,
        "pass": ok,
        "epsilons": list(table.epsilons),
        "errors": list(table.errors),
        "included_in_fit": [bool(b) for b in table.included],
    }
    if extra:
        summary.update(extra)
    write_rate_csv(outdir / f"{name}.csv", table)
    write_summary_json(outdir / f"{name}_summary.json", summary)
    write_loglog_svg(outdir / f"{name}.svg", table, title=name)
    band_text = f"band [{lo}, {hi}]"
    print(f"{name}: slope {table.fitted_slope:.4f} (r2 {table.r_squared:.4f}) "
          f"{band_text} -> {'pass' if ok else 'FAIL'}")
    return PASS if ok else BAND_FAIL


# ---------------------------------------------------------------------------
# subcommands

def _cmd_check_kernel(args, outdir: Path) -> int:
    from .reports import write_summary_json

    mollifier = make_mollifier(args.n, args.profile)
    kernel = Kernel(mollifier, args.eps)
    target = radial_mass_target(args.n)
    from .kernels import adaptive_gauss_legendre

    radial = adaptive_gauss_legendre(
        lambda r: mollifier.rho_scaled(r, args.eps) * r ** (args.n - 1),
        0.0, kernel.support_radius,
    )
    firsts = [moment_first(kernel, a) for a in range(args.n)]
    trace = moment_second_trace(kernel)
    per_axis = second_moment_per_axis(kernel)
    checks = {
        "normalization": abs(radial - target) <= 1e-10 * target,
        "first_moments": all(abs(v) <= 1e-10 for v in firsts),
        "second_moment_per_axis": abs(per_axis - 2.0) <= 1e-8,
    }
    summary = {
        "study": "check-kernel",
        "dimension": args.n,
        "profile": args.profile,
        "epsilon": args.eps,
        "norm_constant": mollifier.norm_constant,
        "radial_mass": radial,
        "radial_mass_target": target,
        "first_moments": firsts,
        "second_moment_trace": trace,
        "second_moment_per_axis": per_axis,
        "total_mass": total_mass(kernel),
        "kernel_at_zero": eval_J(kernel, np.zeros(args.n)),
        "pass": all(checks.values()),
        "checks": checks,
    }
    write_summary_json(outdir / "check_kernel_summary.json", summary)
    print(f"normalization: {radial:.12e} (target {target:.12e})")
    print(f"first moments: {firsts}")
    print(f"second moment trace: {trace:.12f} (target {args.n}), "
          f"per axis: {per_axis:.12f} (target 2)")
    print(f"check-kernel -> {'pass' if summary['pass'] else 'FAIL'}")
    return PASS if summary["pass"] else BAND_FAIL


def _cmd_symbol_rate(args, outdir: Path) -> int:
    mollifier = make_mollifier(args.n, args.profile)
    table = symbol_study(mollifier, args.eps, workers=args.workers)
    return _emit_rate_outputs(outdir, "symbol_rate", table, (args.slope_min, args.slope_max))


def _cmd_operator_rate(args, outdir: Path) -> int:
    grid = _make_grid(args)
    mollifier = make_mollifier(grid.dimension, args.profile)
    table = operator_rate_study(grid, mollifier, args.func, args.eps, workers=args.workers)
    lo, hi = args.slope_min, args.slope_max
    if lo is None and hi is None:
        # default bands: square-root loss at a wall is sharp, so cospix on a
        # box is pinned near one half; everything else just needs fast decay
        if grid.boundary == "neumann" and args.func == "cospix":
            lo, hi = 0.4, 0.7
        elif grid.boundary == "neumann" and args.func == "flatbump":
            lo, hi = 0.85, None
        else:
            lo, hi = 0.9, None
    return _emit_rate_outputs(outdir, "operator_rate", table, (lo, hi),
                              extra={"domain": grid.boundary, "func": args.func})


def _cmd_energy_rate(args, outdir: Path) -> int:
    from .reports import write_loglog_svg, write_series_csv, write_summary_json

    grid = _make_grid(args)
    mollifier = make_mollifier(grid.dimension, args.profile)
    result = energy_rate_study(grid, mollifier, args.func, args.eps, workers=args.workers)
    ok = result.verdict == "exact" or result.monotone_decreasing
    summary = {
        "study": "energy-rate",
        "verdict": result.verdict,
        "monotone_decreasing": result.monotone_decreasing,
        "limit_value": result.limit_value,
        "epsilons": list(result.epsilons),
        "energies": list(result.energies),
        "errors": list(result.errors),
        "pass": ok,
    }
    write_series_csv(outdir / "energy_rate.csv",
                     ["epsilon", "energy", "error"],
                     [result.epsilons, result.energies, result.errors])
    if result.table is not None:
        summary["slope"] = result.table.fitted_slope
        write_loglog_svg(outdir / "energy_rate.svg", result.table, title="energy_rate")
    write_summary_json(outdir / "energy_rate_summary.json", summary)
    print(f"energy-rate: verdict {result.verdict}, monotone {result.monotone_decreasing} "
          f"-> {'pass' if ok else 'FAIL'}")
    return PASS if ok else BAND_FAIL


def _cmd_remainder_rate(args, outdir: Path) -> int:
    from .reports import write_loglog_svg, write_series_csv, write_summary_json

    grid = _make_grid(args)
    mollifier = make_mollifier(grid.dimension, args.profile)
    result = remainder_rate_study(grid, mollifier, args.func, args.eps,
                                  margin_factor=args.margin_factor, workers=args.workers)
    ok = result.verdict == "exact" or result.monotone_decreasing
    summary = {
        "study": "remainder-rate",
        "verdict": result.verdict,
        "monotone_decreasing": result.monotone_decreasing,
        "margin_factor": args.margin_factor,
        "epsilons": list(result.epsilons),
        "values": list(result.values),
        "margins": list(result.margins),
        "pass": ok,
    }
    write_series_csv(outdir / "remainder_rate.csv",
                     ["epsilon", "margin", "value"],
                     [result.epsilons, result.margins, result.values])
    if result.table is not None:
        summary["slope"] = result.table.fitted_slope
        write_loglog_svg(outdir / "remainder_rate.svg", result.table, title="remainder_rate")
    write_summary_json(outdir / "remainder_rate_summary.json", summary)
    print(f"remainder-rate: verdict {result.verdict}, monotone {result.monotone_decreasing} "
          f"-> {'pass' if ok else 'FAIL'}")
    return PASS if ok else BAND_FAIL


def _cmd_solve(args, outdir: Path) -> int:
    grid = _make_grid(args)
    potential = parse_potential(args.potential)
    config = SolverConfig(
        tau=args.tau, t_final=args.T, mobility=args.mobility,
        stabilization=args.stabilization, scheme=args.scheme,
        record_every=args.record_every, keep_fields=args.checkpoints,
    )
    kernel = None
    if args.eq.startswith("nonlocal"):
        if args.eps_value is None:
            print("nonlocal equations need --eps", file=sys.stderr)
            return USAGE_ERROR
        kernel = Kernel(make_mollifier(grid.dimension, args.profile), args.eps_value)
    initial = make_initial_field(grid, args.initial)
    record = run(initial, config, potential, args.eq, kernel)
    record.to_csv(outdir / "trajectory.csv")
    if args.checkpoints:
        for t, field in zip(record.times, record.fields):
            save_field(field, outdir / f"state_t{t:.8f}.bin")
    drift = float(np.max(np.abs(record.mass - record.mass[0])))
    print(f"solve {args.eq}: {len(record.times)} records to t = {record.times[-1]:.6g}; "
          f"mass drift {drift:.3e}; final energy {record.energy[-1]:.8g}")
    return PASS


def _cmd_solution_rate(args, outdir: Path) -> int:
    grid = _make_grid(args)
    mollifier = make_mollifier(grid.dimension, args.profile)
    potential = parse_potential(args.potential)
    config = SolverConfig(tau=args.tau, t_final=args.T, mobility=args.mobility,
                          record_every=args.record_every)
    result = solution_convergence_study(
        grid, config, potential, mollifier, args.eps, args.initial,
        equation=args.eq, perturbation_scale=args.perturbation, workers=args.workers,
    )
    code = PASS
    extra = {"equation": args.eq, "reference_h3_max": result.reference_h3_max}
    primary = "l2_sup" if args.eq.endswith("ac") else "hminus1_sup"
    for name, table in sorted(result.tables.items()):
        band = (args.slope_min, args.slope_max) if name in (primary, "l2_spacetime") else (None, None)
        rc = _emit_rate_outputs(outdir, f"solution_rate_{name}", table, band, extra=extra)
        code = max(code, rc)
    return code


def _cmd_oracle_check(args, outdir: Path) -> int:
    from .reports import write_summary_json

    grid = _make_grid(args)
    mollifier = make_mollifier(grid.dimension, args.profile)
    kernel = Kernel(mollifier, args.eps_value)
    rng = np.random.default_rng(args.seed)
    field = Field(grid, rng.standard_normal(grid.shape))
    direct = apply_direct(kernel, field)
    fast = apply_fft(kernel, field)
    rel = l2_norm(fast - direct) / l2_norm(direct)
    quad_form = l2_inner(direct, field)
    double_sum = pair_difference_double_sum(kernel, field)
    ratio = quad_form / double_sum
    ok = rel <= args.tol and abs(ratio - 0.5) <= 1e-10
    summary = {
        "study": "oracle-check",
        "relative_l2_difference": rel,
        "tolerance": args.tol,
        "quadratic_form": quad_form,
        "pair_double_sum": double_sum,
        "quadratic_form_over_double_sum": ratio,
        "pass": ok,
    }
    write_summary_json(outdir / "oracle_check_summary.json", summary)
    print(f"oracle-check: fft vs direct rel {rel:.3e} (tol {args.tol:.1e}); "
          f"<Lc,c>/double-sum = {ratio:.12f} -> {'pass' if ok else 'FAIL'}")
    return PASS if ok else BAND_FAIL


def _cmd_gronwall(args, outdir: Path) -> int:
    from .reports import write_series_csv, write_summary_json

    grid = _make_grid(args)
    mollifier = make_mollifier(grid.dimension, args.profile)
    potential = parse_potential(args.potential)
    config = SolverConfig(tau=args.tau, t_final=args.T, mobility=args.mobility,
                          record_every=args.record_every)
    result = solution_convergence_study(
        grid, config, potential, mollifier, args.eps, args.initial,
        equation=args.eq, perturbation_scale=args.perturbation, workers=args.workers,
    )
    eps0 = args.eps[min(1, len(args.eps) - 1)]
    trace = gronwall_trace(result.records[eps0], result.reference, Kernel(mollifier, eps0))
    m = len(trace.derivative)
    write_series_csv(
        outdir / "gronwall_trace.csv",
        ["t", "dual_sq_half", "derivative", "l2_sq_half", "pair_energy_half",
         "dual_sq", "consistency_sq"],
        [trace.times[:m], trace.dual_sq_half[:m], trace.derivative,
         trace.l2_sq_half[:m], trace.pair_energy_half[:m], trace.dual_sq[:m],
         trace.consistency_sq[:m]],
    )
    ok = trace.holds_with(trace.empirical_constant)
    write_summary_json(outdir / "gronwall_summary.json", {
        "study": "gronwall",
        "epsilon": eps0,
        "empirical_constant": trace.empirical_constant,
        "energy_time_integral": trace.energy_time_integral,
        "pass": ok,
    })
    print(f"gronwall (eps {eps0}): C = {trace.empirical_constant:.6g}, "
          f"int pair energy = {trace.energy_time_integral:.4e} -> {'pass' if ok else 'FAIL'}")
    return PASS if ok else BAND_FAIL


# ---------------------------------------------------------------------------
# parser

def _add_common(p, *, grid=True, eps_ladder=True):
    p.add_argument("--out", default=None, help="output directory (default out-<command>)")
    p.add_argument("--config", default=None, help="flat key=value config file; flags override")
    p.add_argument("--profile", default="poly-2-3", help="mollifier profile name")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="process pool size for per-scale work (default: all cores)")
    if grid:
        p.add_argument("--domain", choices=("neumann", "periodic"), default="neumann")
        p.add_argument("--N", default="256", help="cells per axis, comma separated for 2D")
        p.add_argument("--L", default="1.0", help="box lengths, comma separated for 2D")
    if eps_ladder:
        p.add_argument("--eps", type=_parse_eps_list, default=(0.2, 0.1, 0.05, 0.025),
                       help="decreasing comma-separated scale ladder")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonloclab",
        description="Nonlocal-operator laboratory: kernel checks, rate studies, gradient-flow runs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-kernel", help="kernel normalization and moment identities")
    _add_common(p, grid=False, eps_ladder=False)
    p.add_argument("--n", type=int, default=1, choices=(1, 2))
    p.add_argument("--eps", type=float, default=0.1)
    p.set_defaults(func_impl=_cmd_check_kernel)

    p = sub.add_parser("symbol-rate", help="frequency-symbol error rate on a lattice")
    _add_common(p, grid=False)
    p.add_argument("--n", type=int, default=1, choices=(1, 2))
    p.add_argument("--slope-min", type=float, default=0.9)
    p.add_argument("--slope-max", type=float, default=None)
    p.set_defaults(func_impl=_cmd_symbol_rate)

    p = sub.add_parser("operator-rate", help="rate of the operator against the Laplacian")
    _add_common(p)
    p.add_argument("--func", default="cospix", choices=sorted(TEST_FUNCTIONS))
    p.add_argument("--slope-min", type=float, default=None)
    p.add_argument("--slope-max", type=float, default=None)
    p.set_defaults(func_impl=_cmd_operator_rate)

    p = sub.add_parser("energy-rate", help="pair energy against the gradient energy")
    _add_common(p)
    p.add_argument("--func", default="cospix", choices=sorted(TEST_FUNCTIONS))
    p.set_defaults(func_impl=_cmd_energy_rate)

    p = sub.add_parser("remainder-rate", help="boundary remainder decay on interior sub-boxes")
    _add_common(p)
    p.add_argument("--func", default="cospix", choices=sorted(TEST_FUNCTIONS))
    p.add_argument("--margin-factor", type=float, default=0.5,
                   help="interior margin as a multiple of the kernel support")
    p.set_defaults(func_impl=_cmd_remainder_rate)

    p = sub.add_parser("solve", help="run one gradient flow and write its trajectory")
    _add_common(p, eps_ladder=False)
    p.add_argument("--eq", required=True,
                   choices=("local-ch", "nonlocal-ch", "local-ac", "nonlocal-ac"))
    p.add_argument("--eps", dest="eps_value", type=float, default=None,
                   help="kernel scale for the nonlocal equations")
    p.add_argument("--potential", default="doublewell:K=1")
    p.add_argument("--initial", default="cosmix", help=f"one of {sorted(INITIAL_DATA)}")
    p.add_argument("--T", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=1e-5)
    p.add_argument("--mobility", type=float, default=1.0)
    p.add_argument("--stabilization", type=float, default=None)
    p.add_argument("--scheme", choices=("semi-implicit", "explicit"), default="semi-implicit")
    p.add_argument("--record-every", type=int, default=100)
    p.add_argument("--checkpoints", action="store_true", help="write binary state checkpoints")
    p.set_defaults(func_impl=_cmd_solve)

    p = sub.add_parser("solution-rate", help="nonlocal-to-local solution convergence rate")
    _add_common(p)
    p.add_argument("--eq", default="nonlocal-ch", choices=("nonlocal-ch", "nonlocal-ac"))
    p.add_argument("--potential", default="doublewell:K=1")
    p.add_argument("--initial", default="cosmix")
    p.add_argument("--T", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=2e-5)
    p.add_argument("--mobility", type=float, default=1.0)
    p.add_argument("--record-every", type=int, default=25)
    p.add_argument("--perturbation", type=float, default=0.05,
                   help="sqrt-scale initial offset amplitude (0 for identical data)")
    p.add_argument("--slope-min", type=float, default=0.35)
    p.add_argument("--slope-max", type=float, default=0.8)
    p.set_defaults(func_impl=_cmd_solution_rate)

    p = sub.add_parser("oracle-check", help="fft vs direct operator, energy factor audit")
    _add_common(p, eps_ladder=False)
    p.add_argument("--eps", dest="eps_value", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func_impl=_cmd_oracle_check)

    p = sub.add_parser("gronwall", help="per-time differential inequality audit")
    _add_common(p)
    p.add_argument("--eq", default="nonlocal-ch", choices=("nonlocal-ch", "nonlocal-ac"))
    p.add_argument("--potential", default="doublewell:K=1")
    p.add_argument("--initial", default="cosmix")
    p.add_argument("--T", type=float, default=0.02)
    p.add_argument("--tau", type=float, default=2e-5)
    p.add_argument("--mobility", type=float, default=1.0)
    p.add_argument("--record-every", type=int, default=20)
    p.add_argument("--perturbation", type=float, default=0.0)
    p.set_defaults(func_impl=_cmd_gronwall)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)

    # apply config-file values as defaults, so flags keep precedence
    if "--config" in argv:
        try:
            cfg_path = argv[argv.index("--config") + 1]
        except IndexError:
            print("config error: --config needs a path", file=sys.stderr)
            return USAGE_ERROR
        try:
            file_values = _load_config_file(cfg_path)
        except (OSError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return USAGE_ERROR
        command = next((a for a in argv if not a.startswith("-")), None)
        choices = parser._subparsers._group_actions[0].choices  # noqa: SLF001
        if command not in choices:
            print(f"config error: unknown or missing subcommand {command!r}", file=sys.stderr)
            return USAGE_ERROR
        actions = {a.dest: a for a in choices[command]._actions}  # noqa: SLF001
        unknown = sorted(set(file_values) - set(actions))
        if unknown:
            print(f"config error: unknown keys {unknown}", file=sys.stderr)
            return USAGE_ERROR
        for key, raw in file_values.items():
            action = actions[key]
            try:
                if action.type is not None:
                    raw = action.type(raw)
                elif isinstance(action.default, bool):
                    raw = raw.lower() in ("1", "true", "yes")
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                print(f"config error: bad value for {key!r}: {exc}", file=sys.stderr)
                return USAGE_ERROR
            action.default = raw

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0

    outdir = Path(args.out) if args.out else Path(f"out-{args.command}")
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return USAGE_ERROR

    try:
        code = args.func_impl(args, outdir)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    _write_resolved_config(outdir, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
