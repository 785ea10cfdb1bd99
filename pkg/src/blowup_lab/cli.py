"""Command-line entry point: ``blowup-lab <command> [options]``.

Options may also come from ``--config FILE`` holding flat ``key = value``
lines (keys are option names with dashes or underscores); flags win.
Artifacts go to ``--out`` or, by default, to $BLOWUP_LAB_OUT (else ./blowup_out).

Exit status: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
from pathlib import Path

from . import functional as fl
from . import ode, odi, report, wave
from .fitting import FitError, fit_line

OUT_ENV = "BLOWUP_LAB_OUT"
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

ODE_COLUMNS = ["variant", "n", "p", "A", "T0", "t_blow", "ln_t_blow", "status", "product"]
PDE_COLUMNS = ["n", "p", "epsilon", "T_num", "status", "threshold_sensitivity"]
# options that steer execution but never change results; not echoed in reports
_PLUMBING = {"command", "config", "out", "workers", "func", "quiet"}


class UsageError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _opt_float(text):
    return None if str(text).lower() in ("none", "off", "") else float(text)


def read_config_file(path) -> dict[str, str]:
    out = {}
    for i, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{i}: expected key = value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


# ---------------------------------------------------------------- options


def _add_common(sp):
    sp.add_argument("--config", help="flat key = value file; flags override it")
    sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./blowup_out)")
    sp.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="parallel sweep members")
    sp.add_argument("--quiet", action="store_true")


def _add_ode(sp, sweep=False):
    sp.add_argument("--variant", choices=["critical", "subcritical"], default="subcritical")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--p", type=float, default=2.0)
    if sweep:
        sp.add_argument("--A", type=_floats, default=[1, 0.5, 0.25, 0.125, 0.0625], help="comma list")
    else:
        sp.add_argument("--A", type=float, default=1.0)
    sp.add_argument("--T0", type=float, default=0.125)
    sp.add_argument("--rtol", type=float, default=1e-8)
    sp.add_argument("--atol", type=float, default=1e-12)
    sp.add_argument("--threshold", type=float, default=1e30)
    sp.add_argument("--max-steps", type=int, default=200_000)
    sp.add_argument("--coord", choices=["physical", "log"], default=None)
    sp.add_argument("--horizon", type=float, default=None)


def _add_wave(sp, sweep=False):
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--p", type=float, default=2.0)
    if sweep:
        sp.add_argument("--eps", type=_floats, default=[0.8, 0.4, 0.2, 0.1], help="comma list")
    else:
        sp.add_argument("--eps", type=float, default=0.5)
    sp.add_argument("--shape", choices=["standard_bump", "shell_bump"], default="standard_bump")
    sp.add_argument("--R", type=float, default=1.0)
    sp.add_argument("--amplitude", type=float, default=1.0)
    sp.add_argument("--g-mode", choices=["zero", "equal_to_f"], default="zero")
    sp.add_argument("--dr", type=float, default=1 / 200)
    sp.add_argument("--cfl", type=float, default=0.5)
    sp.add_argument("--threshold", type=float, default=1e6)
    sp.add_argument("--horizon", type=float, default=5000.0)
    sp.add_argument("--window", type=_opt_float, default=2.0,
                    help="trailing window behind the front; 'none' updates the whole light cone")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="blowup-lab", description="ODI ladders, ODE blow-up, radial wave lifespans")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("constants", help="sharp and theorem constants")
    _add_common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--R", type=float, default=1.0)
    sp.add_argument("--A-f", type=float, default=None, help="data mass; default: standard bump of radius R")
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("odi-ladder", help="iteration ladder with closed-form check")
    _add_common(sp)
    sp.add_argument("--variant", choices=["critical", "subcritical"], default="critical")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--A", type=float, default=1.0)
    sp.add_argument("--T0", type=float, default=0.125)
    sp.add_argument("--K", type=int, default=25)
    sp.set_defaults(func=cmd_ladder)

    sp = sub.add_parser("ode-blowup", help="integrate one equality model to blow-up")
    _add_common(sp)
    _add_ode(sp)
    sp.add_argument("--H0", type=float, default=0.0)
    sp.add_argument("--dH0", type=float, default=0.0)
    sp.set_defaults(func=cmd_ode_blowup)

    sp = sub.add_parser("ode-sweep", help="blow-up times over an A ladder")
    _add_common(sp)
    _add_ode(sp, sweep=True)
    sp.set_defaults(func=cmd_ode_sweep)

    sp = sub.add_parser("pde-run", help="one radial wave run")
    _add_common(sp)
    _add_wave(sp)
    sp.add_argument("--check-resolution", action="store_true")
    sp.add_argument("--verify-functional", action="store_true")
    sp.add_argument("--beta", type=float, default=None, help="default: 0 subcritical, 1 critical")
    sp.add_argument("--R0", type=float, default=None, help="default: 3R/4")
    sp.add_argument("--save-snapshots", action="store_true")
    sp.set_defaults(func=cmd_pde_run)

    sp = sub.add_parser("pde-sweep", help="lifespans over an epsilon ladder")
    _add_common(sp)
    _add_wave(sp, sweep=True)
    sp.set_defaults(func=cmd_pde_sweep)

    sp = sub.add_parser("verify-functional", help="lower-bound residuals from a snapshot file")
    _add_common(sp)
    sp.add_argument("--snapshots", required=True, help="npz written by pde-run --save-snapshots")
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--R0", type=float, default=None)
    sp.add_argument("--t-max", type=float, default=None)
    sp.set_defaults(func=cmd_verify_functional)

    sp = sub.add_parser("fit", help="least-squares line through two CSV columns")
    _add_common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--x", required=True)
    sp.add_argument("--y", required=True)
    sp.add_argument("--logx", action="store_true")
    sp.add_argument("--logy", action="store_true")
    sp.add_argument("--where", default=None, help="column=value row filter, e.g. status=blew_up")
    sp.set_defaults(func=cmd_fit)
    return ap


def parse(argv) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        cfg = read_config_file(args.config)
        sp = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        typed = {}
        for a in sp._actions:
            if a.dest in cfg:
                raw = cfg[a.dest]
                if a.type is not None:
                    try:
                        typed[a.dest] = a.type(raw)
                    except (ValueError, argparse.ArgumentTypeError) as exc:
                        raise UsageError(f"config key {a.dest}: {exc}") from exc
                elif isinstance(a, argparse._StoreTrueAction):
                    typed[a.dest] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    typed[a.dest] = raw
                if a.choices is not None and typed[a.dest] not in a.choices:
                    raise UsageError(f"config key {a.dest}: {raw!r} not in {list(a.choices)}")
        sp.set_defaults(**typed)
        args = ap.parse_args(argv)
    return args


def _echo(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in _PLUMBING}


def _outdir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or "blowup_out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _say(args, text):
    if not args.quiet:
        print(text)


# ---------------------------------------------------------------- commands


def cmd_constants(args):
    sc = odi.sharp_constants(args.n, args.p)
    data = {"config": _echo(args), "critical_exponent": odi.critical_exponent(args.n)}
    data.update(dataclasses.asdict(sc))
    theo = {}
    pc = odi.critical_exponent(args.n)
    if args.n >= 2:
        if args.A_f is None:
            A_f = fl.compute_A_f(wave.DataProfile(R=args.R), args.n).A_f
        else:
            A_f = args.A_f
        data["A_f"] = A_f
        field = "crit" if math.isclose(args.p, pc, rel_tol=1e-12) else ("sub" if args.p < pc else None)
        if field:
            tc = odi.theorem_constants(args.n, args.p, args.R, A_f, field=field)
            theo = {"crit": tc.crit, "sub": tc.sub}
    data["theorem_constants"] = theo
    path = _outdir(args) / f"constants_n{args.n}_p{report.fmt(args.p)}.json"
    report.write_json(path, data)
    _say(args, report.dumps({k: v for k, v in data.items() if k != "config"}))
    _say(args, f"wrote {path}")


def cmd_ladder(args):
    if args.variant == "critical":
        prm = odi.CriticalOdiParams(args.A, args.p, args.T0)
        lad = odi.critical_ladder(prm, args.K)
        closed = odi.critical_closed_form
    else:
        prm = odi.SubcriticalOdiParams(args.A, args.p, args.n, args.T0)
        lad = odi.subcritical_ladder(prm, args.K)
        closed = odi.subcritical_closed_form
    rows, worst = [], 0.0
    for e in lad.entries:
        c = closed(prm, e.k)
        rel = max(abs(a - b) / max(abs(b), 1e-300) for a, b in ((e.q, c.q), (e.lnC, c.lnC), (e.lnT, c.lnT)))
        worst = max(worst, rel)
        rows.append({"k": e.k, "q": e.q, "lnC": e.lnC, "lnT": e.lnT, "closed_form_rel_diff": rel})
    out = _outdir(args)
    csv_path = out / f"ladder_{args.variant}.csv"
    report.write_csv(csv_path, ["k", "q", "lnC", "lnT", "closed_form_rel_diff"], rows)
    report.write_json(out / f"ladder_{args.variant}.json",
                      {"config": _echo(args), "tilde_T": lad.tilde_T, "max_closed_form_rel_diff": worst})
    _say(args, f"{args.variant} ladder K={args.K}: max recursion/closed-form rel diff {worst:.3e}")
    if lad.tilde_T is not None:
        _say(args, f"ln(tilde_T + 1) = {lad.tilde_T:.12g}")
    _say(args, f"wrote {csv_path}")


def _ode_spec(args, A):
    return ode.OdeSpec(args.variant, A, args.p, args.n, args.T0)


def _controls(args):
    return ode.IntegratorControls(args.rtol, args.atol, args.threshold, args.max_steps, args.coord)


def cmd_ode_blowup(args):
    spec = _ode_spec(args, args.A)
    res = ode.integrate_blowup(spec, (args.H0, args.dH0), _controls(args), args.horizon)
    mem = ode.membership_residuals(res, spec)
    out = _outdir(args)
    data = {
        "config": _echo(args),
        "status": res.status,
        "t_blow": res.t_blow,
        "ln_t_blow": res.ln_t_blow,
        "diagnostics": res.diagnostics,
        "membership": {
            "min_forcing_residual": mem.min_forcing_residual,
            "min_nonlinear_residual": mem.min_nonlinear_residual,
            "first_violation_t": mem.first_violation_t,
        },
    }
    if args.variant == "critical":
        data["bound_ln_T_plus_1"] = odi.predict_lifespan_critical(args.A, args.p)
    else:
        data["bound_T_plus_1"] = odi.predict_lifespan_subcritical(args.A, args.n, args.p)
    report.write_json(out / "ode_blowup.json", data)
    tr = res.trace
    report.write_csv(out / "ode_trace.csv", ["t", "H", "dH"],
                     [{"t": a, "H": b, "dH": c} for a, b, c in zip(tr["t"], tr["H"], tr["dH"])])
    _say(args, f"{args.variant} A={args.A}: {res.status} t_blow={res.t_blow:.10g} ln t_blow={res.ln_t_blow:.10g}")
    if res.status == "step_failure":
        raise RuntimeFailure("integration failed before threshold or horizon")


def cmd_ode_sweep(args):
    specs = [_ode_spec(args, A) for A in args.A]
    sw = ode.sweep_ode(specs, _controls(args), args.horizon, workers=args.workers)
    out = _outdir(args)
    rows = [{**r.__dict__} for r in sw.rows]
    report.write_csv(out / f"ode_sweep_{args.variant}.csv", ODE_COLUMNS, rows)
    fit = {
        "config": _echo(args),
        "fit": sw.fit.to_dict(),
        "target_slope": sw.target_slope,
        "products": sw.products,
        "products_nondecreasing": sw.products_nondecreasing,
    }
    report.write_json(out / f"ode_sweep_{args.variant}_fit.json", fit)
    for r in sw.rows:
        _say(args, f"A={r.A:<10g} {r.status:<15} t_blow={r.t_blow:.8g} product={r.product:.6g}")
    label = "upper bound" if args.variant == "critical" else "target"
    _say(args, f"fitted slope {sw.fit.slope:.6g} ({label} {sw.target_slope:.6g}), r^2={sw.fit.r_squared:.6f}")


def _wave_config(args, eps):
    prof = wave.DataProfile(args.shape, args.R, args.amplitude, args.g_mode)
    return wave.WaveConfig(args.n, args.p, eps, prof, args.dr, args.cfl, args.threshold, args.horizon, args.window)


def functional_check(cfg: wave.WaveConfig, beta: float | None = None, R0: float | None = None,
                     snapshots_out=None):
    """Run to blow-up, rerun with snapshots up to 0.8 T, and check both lower bounds."""
    if beta is None:
        beta = 1.0 if math.isclose(cfg.p, odi.critical_exponent(cfg.n), rel_tol=1e-12) else 0.0
    fcfg = fl.FunctionalConfig(beta, cfg.profile.R, cfg.p, R0)
    est = wave.detect_lifespan(cfg)
    if est.status != "blew_up":
        raise RuntimeFailure("no blow-up within the horizon; nothing to check")
    t_max = 0.8 * est.T_num
    times = fl.default_snapshot_times(fcfg.R1, t_max)
    margin = 8 * cfg.dr
    run = wave.detect_lifespan(cfg, times, (fcfg.r0 - margin, cfg.profile.R + margin))
    if snapshots_out is not None:
        wave.save_snapshots(snapshots_out, run.snapshots, cfg)
    af = fl.compute_A_f(cfg.profile, cfg.n, fcfg.r0)
    trace = fl.compute_functional(run.snapshots, fcfg, cfg.n, A_f=af.A_f_conservative)
    rep = fl.verify_lower_bounds(trace, cfg.epsilon, cfg.p, t_max=t_max)
    return est, trace, rep


def cmd_pde_run(args):
    cfg = _wave_config(args, args.eps)
    out = _outdir(args)
    est = wave.detect_lifespan(cfg, check_resolution=args.check_resolution)
    data = {"config": _echo(args), "lifespan": est.to_dict()}
    _say(args, f"n={args.n} p={args.p} eps={args.eps}: {est.status} T_num={est.T_num:.10g} "
               f"threshold sensitivity={est.threshold_sensitivity:.3g}")
    if est.resolution_sensitivity is not None:
        _say(args, f"resolution sensitivity (dr/2): {est.resolution_sensitivity:.3g}")
    failed = False
    if args.verify_functional or args.save_snapshots:
        snap_path = out / "snapshots.npz" if args.save_snapshots else None
        _, _, rep = functional_check(cfg, args.beta, args.R0, snap_path)
        if args.verify_functional:
            rep.write_json(out / "residuals.json")
            rep.write_csv(out / "residuals.csv")
            data["residuals"] = rep.to_dict()
            _say(args, f"min residual linear={rep.min_linear:.6g} (tol {rep.tol_linear:.3g}), "
                       f"nonlinear={rep.min_nonlinear if rep.min_nonlinear is not None else math.nan:.6g} (tol {rep.tol_nonlinear:.3g}) ok={rep.ok}")
            failed = not rep.ok
    report.write_json(out / "pde_run.json", data)
    if failed:
        raise RuntimeFailure("functional lower bound violated")


def cmd_pde_sweep(args):
    cfgs = [_wave_config(args, e) for e in args.eps]
    sw = wave.pde_sweep(cfgs, workers=args.workers)
    out = _outdir(args)
    report.write_csv(out / "pde_sweep.csv", PDE_COLUMNS, sw.rows)
    data = {"config": _echo(args), "mode": sw.mode, "fit": sw.fit.to_dict(), "target_slope": sw.target_slope,
            "products": list(sw.products)}
    report.write_json(out / "pde_sweep_fit.json", data)
    for r in sw.rows:
        _say(args, f"eps={r['epsilon']:<8g} {r['status']:<15} T_num={r['T_num']:.8g}")
    if sw.mode == "subcritical":
        _say(args, f"slope of ln T vs ln eps: {sw.fit.slope:.6g} (target {sw.target_slope:.6g}), "
                   f"r^2={sw.fit.r_squared:.6f}")
    else:
        _say(args, f"ln T vs eps^-(p-1): slope {sw.fit.slope:.6g}, r^2={sw.fit.r_squared:.6f}")


def cmd_verify_functional(args):
    snaps, cfg = wave.load_snapshots(args.snapshots)
    beta = args.beta
    if beta is None:
        beta = 1.0 if math.isclose(cfg.p, odi.critical_exponent(cfg.n), rel_tol=1e-12) else 0.0
    fcfg = fl.FunctionalConfig(beta, cfg.profile.R, cfg.p, args.R0)
    af = fl.compute_A_f(cfg.profile, cfg.n, fcfg.r0)
    trace = fl.compute_functional(snaps, fcfg, cfg.n, A_f=af.A_f_conservative)
    rep = fl.verify_lower_bounds(trace, cfg.epsilon, cfg.p, t_max=args.t_max)
    out = _outdir(args)
    rep.write_json(out / "residuals.json")
    rep.write_csv(out / "residuals.csv")
    _say(args, report.dumps(rep.to_dict()))
    if not rep.ok:
        raise RuntimeFailure("functional lower bound violated")


def cmd_fit(args):
    rows = report.read_csv(args.input)
    if args.where:
        k, _, v = args.where.partition("=")
        rows = [r for r in rows if r.get(k) == v]
    if rows and (args.x not in rows[0] or args.y not in rows[0]):
        raise UsageError(f"columns {args.x!r}/{args.y!r} not in {args.input}")
    pts = []
    for r in rows:
        x, y = float(r[args.x]), float(r[args.y])
        if args.logx:
            x = math.log(x)
        if args.logy:
            y = math.log(y)
        pts.append((x, y))
    fit = fit_line(pts)
    report.write_json(_outdir(args) / "fit.json", {"config": _echo(args), "fit": fit.to_dict()})
    _say(args, f"slope={fit.slope:.10g} intercept={fit.intercept:.10g} r^2={fit.r_squared:.8f} n={fit.n_points}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse(sys.argv[1:] if argv is None else argv)
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FitError, RuntimeFailure, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (odi.DomainError, odi.ParameterError, wave.DataError, fl.FunctionalError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
