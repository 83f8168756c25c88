"""Command line entry point: ``divsolve solve|sweep|exponents|report``.

Exit codes:
    0  success
    1  other failure (including a certificate above tolerance)
    2  configuration / usage error
    3  GradientFieldIncompatible
    4  FailedTransversality
    5  IllConditioned
    6  GradientFieldDetected
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import exponents as ex
from .config import SolveConfig, load_config, validate_sweep
from .divinverse import build_s0
from .errors import (ConfigError, DivSolveError, EvaluationDomainError, FailedTransversality,
                     GradientFieldDetected, GradientFieldIncompatible, HypothesisViolation,
                     IllConditioned, NoRealSingularScaling)
from .fieldexpr import sample_scalar, sample_vector
from .fredholm import (CORRECTED_RTOL, SolveCertificate, build_decomposition,
                       build_right_inverse, check_invariants, find_singular_scaling,
                       residual_ratio, singular_scan, solve)
from .gradient import compatibilized_rhs, gradient_case_solve, is_gradient
from .grid import Grid, VectorField, discrete_grad
from .perturbation import PerturbedOperator
from .output import write_grid_csv, write_heatmap_svg, write_rows_csv, write_text

log = logging.getLogger("divsolve")

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_INCOMPATIBLE = 3
EXIT_TRANSVERSALITY = 4
EXIT_ILL_CONDITIONED = 5
EXIT_GRADIENT = 6

_ERROR_CODES = [
    (ConfigError, EXIT_CONFIG),
    (EvaluationDomainError, EXIT_CONFIG),
    (HypothesisViolation, EXIT_CONFIG),
    (GradientFieldIncompatible, EXIT_INCOMPATIBLE),
    (FailedTransversality, EXIT_TRANSVERSALITY),
    (IllConditioned, EXIT_ILL_CONDITIONED),
    (GradientFieldDetected, EXIT_GRADIENT),
]


def exit_code_for(exc: BaseException) -> int:
    for cls, code in _ERROR_CODES:
        if isinstance(exc, cls):
            return code
    return EXIT_OTHER


def _setup(cfg: SolveConfig, out: str | None):
    if out is not None:
        cfg = replace(cfg, output=replace(cfg.output, directory=out))
    g = Grid(cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly)
    run_dir = Path(cfg.output.directory)
    run_dir.mkdir(parents=True, exist_ok=True)
    # the run directory is left out so reruns elsewhere stay byte-identical
    write_text(run_dir / "config.txt", cfg.to_text(include_directory=False))
    return cfg, g, run_dir


def _coefficient(cfg, g):
    if cfg.fields.potential is not None:
        A = sample_scalar(cfg.fields.potential, g)
        return discrete_grad(A), A
    return sample_vector(cfg.fields.a_x, cfg.fields.a_y, g), None


def cell_magnitude(u: VectorField) -> np.ndarray:
    cx = 0.5 * (u.ux[:-1, :] + u.ux[1:, :])
    cy = 0.5 * (u.uy[:, :-1] + u.uy[:, 1:])
    return np.hypot(cx, cy)


def invariant_lines(inv: dict) -> str:
    return "".join(f"invariant {k} = {v[0]:.6e} (tol {v[1]:.1e}) {'ok' if v[2] else 'FAIL'}\n"
                   for k, v in inv.items())


def run_solve(config_path, out: str | None = None) -> int:
    cfg, g, run_dir = _setup(load_config(config_path), out)
    opts = cfg.solver
    a, A = _coefficient(cfg, g)
    f = sample_scalar(cfg.fields.f, g)
    s0 = build_s0(g, opts.backend)
    try:
        if A is not None:
            # analytic potential given: the gradient case with that exact A
            if not opts.delegate_gradient:
                raise GradientFieldDetected("a = grad(potential) by construction")
            decision = is_gradient(a, opts.grad_tol)
            write_text(run_dir / "gradient.txt", decision.to_text())
            if cfg.fields.compatibilize:
                f, c = compatibilized_rhs(A, f)
                log.info("compatibilizing constant c = %.17g", c)
            u, compat = gradient_case_solve(A, f, s0, opts.compat_tol, opts.coupling)
            op = PerturbedOperator(g, a, s0, opts.coupling)
            cert = SolveCertificate(residual_ratio(op, u.flat(), f.flat()), "gradient", 0, 1.0,
                                    CORRECTED_RTOL, compatibility=compat)
            dec = None
        else:
            u, cert, extras = solve(a, f, opts, s0)
            write_text(run_dir / "gradient.txt", extras["decision"].to_text())
            op = extras.get("operator") or PerturbedOperator(g, a, s0, opts.coupling)
            dec = extras["decomposition"]
    except (GradientFieldIncompatible, GradientFieldDetected, FailedTransversality,
            IllConditioned) as exc:
        write_text(run_dir / "error.txt", f"{type(exc).__name__}: {exc}\n")
        raise
    residual = op.ta_matrix @ u.flat() - f.flat()
    write_grid_csv(run_dir / "u_x.csv", u.ux)
    write_grid_csv(run_dir / "u_y.csv", u.uy)
    write_grid_csv(run_dir / "residual.csv", residual.reshape(g.nx, g.ny))
    write_text(run_dir / "certificate.txt", cert.to_text())
    if dec is not None:
        write_text(run_dir / "decomposition.txt",
                   dec.summary() + invariant_lines(check_invariants(op, dec)))
    else:
        write_text(run_dir / "decomposition.txt", "gradient case: no Fredholm decomposition\n")
    if "svg" in cfg.output.formats:
        write_heatmap_svg(run_dir / "solution.svg", [
            ("|u|", cell_magnitude(u)), ("residual", residual.reshape(g.nx, g.ny))])
    print(cert.to_text(), end="")
    return EXIT_OK if cert.ok else EXIT_OTHER


def run_singular_sweep(config_path, t_min=None, t_max=None, steps=None, out=None) -> int:
    cfg = load_config(config_path)
    sw = cfg.sweep
    sw = replace(sw, **{k: v for k, v in
                        (("t_min", t_min), ("t_max", t_max), ("steps", steps)) if v is not None})
    validate_sweep(sw)
    cfg = replace(cfg, sweep=sw)
    cfg, g, run_dir = _setup(cfg, out)
    opts = cfg.solver
    a, _ = _coefficient(cfg, g)
    decision = is_gradient(a, opts.grad_tol)
    if decision.is_gradient:
        raise GradientFieldDetected("sweep base field is a gradient; nothing to sweep", decision)
    s0 = build_s0(g, opts.backend)
    ts = np.linspace(sw.t_min, sw.t_max, sw.steps + 1)
    scan = singular_scan(a, ts, s0, opts.coupling, opts.svd_tol)
    t_star, reason = None, ""
    try:
        hit = find_singular_scaling(a, g, sw.t_min, sw.t_max, sw.steps, s0, opts.coupling,
                                    opts.svd_tol, scan=scan)
        t_star = hit.t
    except NoRealSingularScaling as exc:
        reason = str(exc)
    rows = [(p.t, p.sigma_min_ratio, p.sigma_excess_ratio, p.dim_n, 0) for p in scan]
    if t_star is not None:
        # the refined t* goes in as its own row, kept in t order
        rows.append((hit.t, hit.sigma_min_ratio, hit.sigma_excess_ratio, hit.dim_n, 1))
        rows.sort(key=lambda r: (r[0], r[4]))
    write_rows_csv(run_dir / "sweep.csv",
                   ["t", "sigma_min_ratio", "sigma_excess_ratio", "dim_n", "marked"], rows)
    if t_star is None:
        write_text(run_dir / "singular.txt", f"t_star = none\nreason = {reason}\n")
        print(f"no singular scaling: {reason}")
        return EXIT_OK
    op = PerturbedOperator(g, a * t_star, s0, opts.coupling)
    dec = build_decomposition(op, opts.svd_tol, opts.bump_margin, opts.seed, method="svd")
    f = sample_scalar(cfg.fields.f, g)
    u = build_right_inverse(op, dec).apply(f)
    cert = SolveCertificate(residual_ratio(op, u.flat(), f.flat()), dec.branch, dec.dim_n,
                            dec.condition, CORRECTED_RTOL, dec.dim_z)
    inv = check_invariants(op, dec)
    write_text(run_dir / "singular.txt", f"t_star = {t_star:.17g}\n"
               f"sigma_excess_ratio = {hit.sigma_excess_ratio:.6e}\ndim_N = {hit.dim_n}\n")
    write_text(run_dir / "certificate_tstar.txt", cert.to_text())
    write_text(run_dir / "decomposition_tstar.txt", dec.summary() + invariant_lines(inv))
    print(f"t_star = {t_star:.17g}")
    print(cert.to_text(), end="")
    return EXIT_OK if cert.ok and all(v[2] for v in inv.values()) else EXIT_OTHER


def run_exponents(mode: str, args: list[str], csv_path: str | None = None) -> int:
    """Print an exponent table; ``args`` are rationals as ``num/den`` strings."""
    need = {"bootstrap": 3, "multiplier": 5, "conjugate": 2, "embedding": 3}
    if mode not in need:
        raise HypothesisViolation(f"unknown mode {mode!r}; choose from {', '.join(need)}")
    target = None
    if mode == "bootstrap" and len(args) == 4:
        args, target = args[:3], args[3]
    if len(args) != need[mode]:
        raise HypothesisViolation(f"{mode} takes {need[mode]} arguments, got {len(args)}")

    def integer(s, name):
        try:
            return int(s)
        except ValueError:
            raise HypothesisViolation(f"{name} must be an integer, got {s!r}") from None

    if mode == "bootstrap":
        res = ex.bootstrap_sequence(args[0], args[1], integer(args[2], "n"), target)
        header = ["k", "p_k", "1/p_k"]
        rows = res.rows()
        print(f"exit = {res.exit_reason}  k0 = {res.k0}")
    elif mode == "multiplier":
        p, q = args[0], args[1]
        n, m, l = (integer(s, k) for s, k in zip(args[2:], "nml"))
        res = ex.multiplier_admissible(p, q, n, m, l)
        thr = ex.fmt(ex.as_rational(n) / (m + l))
        print(f"admissible = {str(res.admissible).lower()}  (requires q > n/(m+l) = {thr})  "
              f"p(l) = {ex.fmt(res.p_of_l)}")
        header = ["k", "1/p_k(l)", "1/q_(m-k)", "holds", "any_small"]
        rows = [(r.k, ex.fmt(r.recip_pk), ex.fmt(r.recip_q), str(r.holds).lower(),
                 str(r.any_small).lower()) for r in res.table]
    elif mode == "conjugate":
        val = ex.sobolev_conjugate(args[0], integer(args[1], "n"))
        header, rows = ["p", "p_star"], [(args[0], ex.fmt(val))]
    else:
        val = ex.embedding_exponent(integer(args[0], "k"), args[1], integer(args[2], "n"))
        header, rows = ["k", "p", "q_k"], [(args[0], args[1], ex.fmt(val))]
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(header)]
    print("  ".join(str(h).rjust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(str(x).rjust(w) for x, w in zip(r, widths)))
    if csv_path:
        write_rows_csv(csv_path, header, rows)
    return EXIT_OK


def run_report(run_dir) -> int:
    d = Path(run_dir)
    if not d.is_dir():
        raise ConfigError("not a directory", str(d))
    found = False
    for name in ("certificate.txt", "gradient.txt", "decomposition.txt", "singular.txt",
                 "certificate_tstar.txt", "error.txt"):
        p = d / name
        if p.exists():
            found = True
            print(f"== {name}")
            print(p.read_text(), end="")
    sweep = d / "sweep.csv"
    if sweep.exists():
        found = True
        data = np.genfromtxt(sweep, delimiter=",", names=True)
        data = np.atleast_1d(data)
        k = int(np.argmin(data["sigma_excess_ratio"]))
        print("== sweep.csv")
        print(f"points = {data.size}")
        print(f"max sigma_min_ratio = {data['sigma_min_ratio'].max():.6e}")
        print(f"min sigma_excess_ratio = {data['sigma_excess_ratio'][k]:.6e} "
              f"at t = {data['t'][k]:.17g}")
        print(f"marked = {int(data['marked'].sum())}")
    if not found:
        raise ConfigError("no run artifacts found", str(d))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="divsolve", description=__doc__.splitlines()[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter,
                                 epilog="\n".join(__doc__.splitlines()[2:]))
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("solve", help="solve T_a u = f from a config file")
    p.add_argument("config")
    p.add_argument("--out", help="override [output] directory")
    p = sub.add_parser("sweep", help="scan I+K(t a) for singular scalings")
    p.add_argument("config")
    p.add_argument("--t-min", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", help="override [output] directory")
    p = sub.add_parser("exponents", help="exact exponent tables")
    p.add_argument("mode", choices=["bootstrap", "multiplier", "conjugate", "embedding"])
    p.add_argument("args", nargs="+")
    p.add_argument("--csv", help="also write the table as CSV")
    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("run_dir")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.verb == "solve":
            return run_solve(ns.config, ns.out)
        if ns.verb == "sweep":
            return run_singular_sweep(ns.config, ns.t_min, ns.t_max, ns.steps, ns.out)
        if ns.verb == "exponents":
            return run_exponents(ns.mode, ns.args, ns.csv)
        return run_report(ns.run_dir)
    except DivSolveError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
