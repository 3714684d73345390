"""Command-line entry points: fit, check, enforce, eval, validate, fixture.

Exit codes: 0 success / passive, 1 passivity violations remain, 2 error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import fixtures
from .dataset import (
    DatasetError,
    FitSplit,
    entry_columns,
    export_report,
    fmt,
    load_dataset,
    load_report_json,
    rms_error,
    save_dataset,
    write_csv,
)
from .enforce import EnforceConfig, QpConfig, QpError, enforce
from .gsk import GskConfig, GskConvergenceWarning, default_poles, fit, stability_sweep
from .model import INF, ParamBasis, SingularEvaluationError, load_model, save_model
from .oracle import dense_sweep_oracle
from .passivity import CheckConfig, adaptive_check

log = logging.getLogger("parampass")

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2


class CliError(Exception):
    pass


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"file not found: {p}")
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _out_file(path: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def check_config(args) -> CheckConfig:
    return CheckConfig(
        gamma=args.gamma,
        kappa=args.kappa,
        max_passes=args.max_passes,
        im_tol=args.im_tol,
        band_samples=args.band_samples,
        omega_cap_factor=args.omega_cap_factor,
    )


def _split(args, n_params: int) -> FitSplit:
    split = FitSplit.all(n_params) if args.split == "all" else FitSplit.alternating(n_params)
    if not split.validation_indices and args.split != "all":
        split = FitSplit.all(n_params)
    return split


def write_check_outputs(report, out_dir: Path, format: str) -> list[Path]:
    if format == "json":
        return [export_report(report, out_dir / "report.json", "json")]
    return [
        export_report(report, out_dir / "psi.csv", "csv", table="psi"),
        export_report(report, out_dir / "violations.csv", "csv", table="violations"),
    ]


# -- subcommands --------------------------------------------------------------


def cmd_fit(args) -> int:
    manifest = _existing(args.manifest)
    out = _out_file(args.output)
    data = load_dataset(manifest)
    split = _split(args, data.n_params)
    poles = default_poles(args.poles, data.f_min, data.f_max, args.pole_spacing)
    pb = ParamBasis(args.basis, args.basis_count, float(data.params[0]), float(data.params[-1]))
    cfg = GskConfig(args.gsk_iters, args.gsk_tol, not args.no_column_scaling, args.pole_spacing)
    with warnings.catch_warnings():
        # reported below together with the chosen iterate
        warnings.simplefilter("ignore", GskConvergenceWarning)
        res = fit(data, split, poles, pb, cfg)
    model = res.model
    stab = stability_sweep(model, args.stability_grid)
    if not stab.passed:
        msg = f"fitted model is unstable: pole {stab.worst_pole:.6g} at theta={stab.worst_theta:.6g}"
        if not args.allow_unstable:
            raise CliError(msg + " (use --allow-unstable to write it anyway)")
        log.warning(msg)
    save_model(model, out)
    report = Path(args.report) if args.report else out.with_name(out.stem + "_fit.csv")
    write_fit_report(model, data, split, _out_file(report))
    if args.log:
        res.write_log(_out_file(args.log))
    worst = rms_error(model, data, split.fit_indices, "absolute").worst
    status = "converged" if res.converged else "not converged"
    print(
        f"fit: {len(res.log)} GSK iterations ({status}), kept iteration {res.best_iteration}, "
        f"worst absolute RMS at fit points {worst:.3e}"
    )
    return EXIT_OK


def write_fit_report(model, data, split: FitSplit, path: Path) -> None:
    """Per-entry absolute and relative RMS at the fit and validation points."""
    P = model.ports
    cols = {}
    for name, idx in (("fit", split.fit_indices), ("validation", split.validation_indices)):
        for mode, short in (("absolute", "abs"), ("relative", "rel")):
            cols[f"{short}_{name}"] = rms_error(model, data, idx, mode).per_entry if idx else None
    header = ["entry"] + list(cols)
    rows = []
    for i in range(P):
        for j in range(P):
            rows.append([f"S{i + 1}{j + 1}"] + [fmt(v[i, j]) if v is not None else "" for v in cols.values()])
    rows.append(["worst"] + [fmt(v.max()) if v is not None else "" for v in cols.values()])
    write_csv(path, header, rows)


def cmd_check(args) -> int:
    model = load_model(_existing(args.model))
    out_dir = _out_dir(args.out_dir)
    report = adaptive_check(model, check_config(args))
    write_check_outputs(report, out_dir, args.format)
    return report_exit(report)


def report_exit(report) -> int:
    n = len(report.violations)
    if n:
        print(f"check: {n} violations, max sigma {report.max_sigma:.9g}")
        return EXIT_VIOLATION
    print(f"check: passive ({len(report.samples)} parameter samples, {report.passes_used} passes)")
    return EXIT_OK


def cmd_enforce(args) -> int:
    model_path = _existing(args.model)
    manifest = _existing(args.manifest)
    out = _out_file(args.output)
    model = load_model(model_path)
    data = load_dataset(manifest)
    split = _split(args, data.n_params)
    qp = QpConfig(feas_tol=args.feas_tol, gap_tol=args.gap_tol)
    ecfg = EnforceConfig(margin=args.margin, max_iterations=args.max_iters, qp=qp)
    res = enforce(model, data, split, check_config(args), ecfg)
    if res.best_iteration == 0:
        # the input model is the result: copy the input verbatim
        out.write_bytes(model_path.read_bytes())
    else:
        save_model(res.model, out)
    log_path = Path(args.log) if args.log else out.with_name(out.stem + "_enforce.csv")
    res.write_log(_out_file(log_path))
    out_dir = _out_dir(args.out_dir) if args.out_dir else out.parent
    write_check_outputs(res.final_report, out_dir, args.format)
    if res.converged:
        print(f"enforce: {res.iterations} iterations")
    else:
        print(f"enforce: not passive after {res.iterations} iterations, kept iteration {res.best_iteration}")
    return report_exit(res.final_report)


def _grid(values: str | None, start, stop, n) -> np.ndarray:
    if values:
        return np.array([float(v) for v in values.split(",")])
    if start is None or stop is None:
        raise CliError("give either a value list or start/stop")
    return np.linspace(start, stop, n)


def cmd_eval(args) -> int:
    model = load_model(_existing(args.model))
    out = _out_file(args.output)
    pb = model.pbasis
    freqs = [] if args.only_inf else list(_grid(args.freqs, args.f_start, args.f_stop, args.n_freq))
    if args.thetas or args.theta_start is not None:
        thetas = _grid(args.thetas, args.theta_start, args.theta_stop, args.n_theta)
    else:
        thetas = np.linspace(pb.theta_min, pb.theta_max, args.n_theta)
    if args.inf or args.only_inf:
        freqs.append(math.inf)
    if not freqs or not len(thetas):
        raise CliError("empty evaluation grid")
    P = model.ports
    rows = []
    for theta in thetas:
        outside = int(not pb.contains(theta))
        s = np.array([INF if math.isinf(f) else model.s_from_hz(f) for f in freqs], dtype=complex)
        h = model.transfer(s, theta)
        for f, hk in zip(freqs, h):
            row = ["inf" if math.isinf(f) else fmt(f), fmt(theta), outside]
            for z in hk.reshape(-1):
                row += [fmt(z.real), fmt(z.imag)]
            rows.append(row)
    if any(r[2] for r in rows):
        log.warning("some parameter values lie outside [%g, %g]", pb.theta_min, pb.theta_max)
    write_csv(out, ["freq_hz", "theta", "outside_domain"] + entry_columns(P), rows)
    return EXIT_OK


def cmd_validate(args) -> int:
    model = load_model(_existing(args.model))
    report_path = _existing(args.report) if args.report else None
    orc = dense_sweep_oracle(model, args.oracle_nf, args.oracle_ntheta, args.f_max_mult)
    if report_path:
        doc = load_report_json(report_path)
        check_passive = not doc["violations"]
        source = str(report_path)
    else:
        report = adaptive_check(model, check_config(args))
        check_passive = report.passive
        source = "adaptive check"
    scale = model.freq_scale
    print(f"oracle: max sigma {orc.max_sigma:.9g} at theta={orc.theta_at_max:.6g}, "
          f"omega={orc.omega_at_max * scale:.6g} rad/s; sigma(inf) {orc.sigma_inf:.9g}")
    print(f"oracle verdict: {'passive' if orc.passed else 'NOT passive'}")
    print(f"{source} verdict: {'passive' if check_passive else 'NOT passive'}")
    if orc.passed != check_passive:
        print("verdicts DISAGREE")
        return EXIT_ERROR
    print("verdicts agree")
    return EXIT_OK if orc.passed else EXIT_VIOLATION


def cmd_fixture(args) -> int:
    out = _out_file(args.output)
    kind = args.kind
    if kind == "first-order":
        save_model(fixtures.first_order_model(args.c), out)
    elif kind == "linear-theta":
        save_model(fixtures.linear_theta_model(), out)
    elif kind == "random":
        m = fixtures.random_model(args.seed, args.ports, args.n_poles, args.n_param)
        save_model(fixtures.scale_to_peak(m, args.peak), out)
    elif kind == "shallow":
        model, data = fixtures.shallow_two_port(args.seed)
        save_model(model, out)
        save_dataset(data, out.with_name(out.stem + "_data.json"))
    elif kind == "line":
        save_dataset(fixtures.transmission_line_dataset(), out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_check_flags(p):
    d = CheckConfig()
    g = p.add_argument_group("passivity check")
    g.add_argument("--gamma", type=float, default=d.gamma)
    g.add_argument("--kappa", type=int, default=d.kappa)
    g.add_argument("--max-passes", type=int, default=d.max_passes)
    g.add_argument("--im-tol", type=float, default=d.im_tol)
    g.add_argument("--band-samples", type=int, default=d.band_samples)
    g.add_argument("--omega-cap-factor", type=float, default=d.omega_cap_factor)


def _add_split_flag(p):
    p.add_argument("--split", choices=["alternating", "all"], default="alternating",
                   help="parameter columns used for fitting (alternating: 1st, 3rd, ...)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parampass", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="identify a model from a dataset manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="model JSON")
    p.add_argument("--report", help="fit report CSV (default: <output>_fit.csv)")
    p.add_argument("--log", help="GSK iteration log CSV")
    p.add_argument("--poles", type=int, required=True, help="number of basis poles")
    p.add_argument("--basis", choices=["chebyshev", "monomial", "trigonometric"], default="chebyshev")
    p.add_argument("--basis-count", type=int, default=3)
    p.add_argument("--pole-spacing", choices=["log", "linear"], default=GskConfig.pole_spacing)
    p.add_argument("--gsk-iters", type=int, default=GskConfig.max_iterations)
    p.add_argument("--gsk-tol", type=float, default=GskConfig.stop_tol)
    p.add_argument("--no-column-scaling", action="store_true")
    p.add_argument("--stability-grid", type=int, default=101)
    p.add_argument("--allow-unstable", action="store_true")
    _add_split_flag(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("check", help="adaptive passivity check")
    p.add_argument("model")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_check_flags(p)
    p.set_defaults(func=cmd_check)

    ed = EnforceConfig()
    p = sub.add_parser("enforce", help="passivity enforcement")
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="passive model JSON")
    p.add_argument("--log", help="iteration log CSV (default: <output>_enforce.csv)")
    p.add_argument("--out-dir", help="directory for the final check report (default: next to output)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--margin", type=float, default=ed.margin)
    p.add_argument("--max-iters", type=int, default=ed.max_iterations)
    p.add_argument("--feas-tol", type=float, default=ed.qp.feas_tol)
    p.add_argument("--gap-tol", type=float, default=ed.qp.gap_tol)
    _add_split_flag(p)
    _add_check_flags(p)
    p.set_defaults(func=cmd_enforce)

    p = sub.add_parser("eval", help="tabulate model responses")
    p.add_argument("model")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--freqs", help="comma-separated frequencies in Hz")
    p.add_argument("--f-start", type=float)
    p.add_argument("--f-stop", type=float)
    p.add_argument("--n-freq", type=int, default=101)
    p.add_argument("--thetas", help="comma-separated parameter values")
    p.add_argument("--theta-start", type=float)
    p.add_argument("--theta-stop", type=float)
    p.add_argument("--n-theta", type=int, default=11)
    p.add_argument("--inf", action="store_true", help="append a row at s = infinity per parameter")
    p.add_argument("--only-inf", action="store_true", help="evaluate at s = infinity only")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="certify a model with the dense-sweep oracle")
    p.add_argument("model")
    p.add_argument("--report", help="check report JSON to compare against (default: run the check)")
    p.add_argument("--oracle-nf", type=int, default=2048)
    p.add_argument("--oracle-ntheta", type=int, default=101)
    p.add_argument("--f-max-mult", type=float, default=10.0)
    _add_check_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fixture", help="write a synthetic model or dataset")
    p.add_argument("kind", choices=["first-order", "linear-theta", "random", "shallow", "line"])
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c", type=float, default=2.0, help="gain of the first-order fixture")
    p.add_argument("--ports", type=int, default=2)
    p.add_argument("--n-poles", type=int, default=4)
    p.add_argument("--n-param", type=int, default=2)
    p.add_argument("--peak", type=float, default=1.2)
    p.set_defaults(func=cmd_fixture)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (CliError, FileNotFoundError, DatasetError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (np.linalg.LinAlgError, QpError, SingularEvaluationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
