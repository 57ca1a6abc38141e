"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 a check failed (reports are still written).
Relative output paths are resolved against ``$SOLCMC_OUT`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2
OUT_ENV = "SOLCMC_OUT"

log = logging.getLogger("solcmc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def out_path(p: Optional[str], default: Optional[str] = None) -> Optional[Path]:
    """Resolve an output path; relative ones go under ``$SOLCMC_OUT``."""
    name = p if p is not None else default
    if name is None:
        return None
    path = Path(name)
    if not path.is_absolute():
        path = Path(os.environ.get(OUT_ENV, ".")) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _positive(x: str) -> float:
    v = float(x)
    if not math.isfinite(v) or v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {x}")
    return v


def _dump(obj, path: Optional[Path] = None) -> str:
    from .sphere_solver import _plain

    s = json.dumps(_plain(obj), indent=2, sort_keys=True)
    if path is not None:
        path.write_text(s + "\n")
    return s


def _fail_json(kind: str, exc: Exception, **extra) -> int:
    print(json.dumps({"error": kind, "message": str(exc), **extra}, sort_keys=True))
    return EXIT_CHECK


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_profile(a) -> int:
    from .cylinders import profile

    prof = profile(a.H, a.n)
    path = out_path(a.output, f"profile_H{a.H:g}.csv")
    prof.to_csv(path)
    print(_dump({"H": a.H, "n": a.n, "output": str(path), "loop_gap": prof.loop_gap,
                 "x3_range": [float(prof.x3.min()), float(prof.x3.max())]}))
    return EXIT_OK


def cmd_cylinder(a) -> int:
    from .cylinders import embedding_defect, embedding_defect_bessel, gauss_of_cylinder, parametrize, u_period
    from .gauss_map import IntegrabilityError, integrate_representation, max_residual, pde_residual
    from .mesh import grid_mesh, write_obj

    f = gauss_of_cylinder(a.H, a.n, a.nv)
    report = {"H": a.H, "embedding_defect": embedding_defect(a.H),
              "embedding_defect_bessel": embedding_defect_bessel(a.H), "u_period": u_period(a.H),
              "pde_residual_max": max_residual(pde_residual(f))}
    checks = {"embedding_defect_negative": report["embedding_defect"] < 0}
    try:
        patch = integrate_representation(f, tol=a.tol)
        report["integrability_residual"] = patch.integrability_residual
        checks["integrable"] = True
    except IntegrabilityError as exc:
        report["integrability_residual"] = exc.residual
        checks["integrable"] = False
        patch = None
    report["checks"] = checks
    if a.format == "csv":
        path = out_path(a.output, f"cylinder_gauss_H{a.H:g}.csv")
        f.to_csv(path)
    elif a.format == "obj":
        path = out_path(a.output, f"cylinder_H{a.H:g}.obj")
        t = np.linspace(-np.pi / 2, 3 * np.pi / 2, a.n)
        v = np.linspace(0.0, 1.0, a.nv)
        T, V = np.meshgrid(t, v, indexing="ij")
        X = parametrize(a.H, T, V)
        P, F = grid_mesh(X)
        write_obj(path, P, F, None, {"H": a.H, "source": "cylinder"})
    else:
        path = out_path(a.output, f"cylinder_H{a.H:g}.json")
    report["output"] = str(path)
    s = _dump(report, path if a.format == "json" else None)
    print(s)
    return EXIT_OK if all(checks.values()) else EXIT_CHECK


def _solver_config(a):
    from .sphere_solver import SolverConfig

    cfg = SolverConfig.from_json(a.config) if getattr(a, "config", None) else SolverConfig()
    for name, attr in (("resolution", "resolution"), ("tol", "tol"), ("max_iters", "max_iters"),
                       ("zero_cluster_C", "zero_cluster_C")):
        val = getattr(a, name, None)
        if val is not None:
            setattr(cfg, attr, val)
    _ = cfg.frequency  # validates the resolution
    return cfg


def _regime_warning(H: float) -> None:
    from .sphere_solver import STABILITY_THRESHOLD

    if H <= STABILITY_THRESHOLD:
        print(f"warning: H={H:g} <= 1/sqrt(3): conjecture regime; the diameter bound is advisory",
              file=sys.stderr)


def _quad_diff_report(m) -> dict:
    from .cylinders import gauss_of_cylinder
    from .quad_diff import Q_eval, build_L, verify_L

    t = build_L(m)
    rep = verify_L(t, m)
    rep["sphere_vanish_max"] = t.meta["sphere_vanish_max"]
    qc = Q_eval(gauss_of_cylinder(m.H), t)
    rep["cylinder_vanish_max"] = qc["vanish_max"]
    rep["cylinder_cr_ratio_max"] = qc["cr_ratio_max"]
    return t, rep


def cmd_sphere(a) -> int:
    from .sphere_solver import NonConvergenceError, DegenerateMeshError, solve, verify

    _regime_warning(a.H)
    cfg = _solver_config(a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            m = solve(a.H, cfg)
        except (NonConvergenceError, DegenerateMeshError) as exc:
            return _fail_json(type(exc).__name__, exc, H=a.H)
    obj = out_path(a.obj, f"sphere_H{a.H:g}.obj")
    m.to_obj(obj)
    rep = verify(m, cfg)
    d = rep.to_dict()
    if a.quad_diff:
        t, qd = _quad_diff_report(m)
        t.to_json(out_path(a.L_table, f"L_H{a.H:g}.json"))
        d["quad_diff"] = qd
    d["mesh"] = str(obj)
    _dump(d, out_path(a.report, f"report_H{a.H:g}.json"))
    print(_dump({k: d[k] for k in ("H", "index", "embedded", "maxHdev", "passed")} | {"failures": rep.failures()}))
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_family(a) -> int:
    from .sphere_solver import NonConvergenceError, DegenerateMeshError, continue_family, solve, verify

    for H in a.H:
        _regime_warning(H)
    cfg = _solver_config(a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            m0 = solve(a.H[0], cfg)
        except (NonConvergenceError, DegenerateMeshError) as exc:
            return _fail_json(type(exc).__name__, exc, H=a.H[0])
        meshes, reports, summary = continue_family(m0, a.H[1:], cfg)
    meshes.insert(0, m0)
    reports.insert(0, verify(m0, cfg))
    rows = []
    for m, rep in zip(meshes, reports):
        m.to_obj(out_path(f"{a.out_dir}/sphere_H{m.H:g}.obj"))
        rep.to_json(out_path(f"{a.out_dir}/report_H{m.H:g}.json"))
        rows.append({"H": m.H, "passed": rep.passed, "index": rep.index, "area": m.area,
                     "volume": m.volume, "failures": rep.failures()})
    summary["members"] = rows
    _dump(summary, out_path(f"{a.out_dir}/family.json"))
    print(_dump(summary))
    ok = summary["break"] is None and all(r["passed"] for r in rows)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_verify(a) -> int:
    from .sphere_solver import CmcSphereMesh, verify

    path = Path(a.mesh)
    if not path.exists():
        raise UsageError(f"mesh file {path} does not exist")
    m = CmcSphereMesh.from_obj(path, a.H)
    _regime_warning(m.H)
    cfg = _solver_config(a)
    rep = verify(m, cfg)
    d = rep.to_dict()
    if a.quad_diff:
        try:
            _, d["quad_diff"] = _quad_diff_report(m)
        except ValueError as exc:
            d["quad_diff"] = {"error": str(exc)}
    _dump(d, out_path(a.report, f"verify_H{m.H:g}.json"))
    print(_dump({k: d[k] for k in ("H", "index", "embedded", "maxHdev", "passed")} | {"failures": rep.failures()}))
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_minimal(a) -> int:
    from .minimal_graphs import entire_family, residual_sweep

    g = entire_family(a.family, a.a, a.b)
    path = out_path(a.output, f"minimal_{a.family}.csv")
    rows = residual_sweep(g, tuple(a.x2_range), tuple(a.x3_range), a.n, str(path))
    worst = float(np.abs(rows[:, 2]).max())
    print(_dump({"family": g.family, "a": a.a, "b": a.b, "max_abs_residual": worst, "tol": a.tol,
                 "output": str(path)}))
    return EXIT_OK if worst <= a.tol else EXIT_CHECK


def cmd_gaussmap(a) -> int:
    from .cylinders import gauss_of_cylinder
    from .gauss_map import GaussField, IntegrabilityError, integrate_representation, max_residual, pde_residual

    if a.field:
        if not Path(a.field).exists():
            raise UsageError(f"field file {a.field} does not exist")
        f = GaussField.from_csv(a.field)
    elif a.cylinder_H is not None:
        f = gauss_of_cylinder(a.cylinder_H, a.n, a.nv)
    else:
        raise UsageError("give --field or --cylinder-H")
    if a.perturb > 0:
        rng = np.random.default_rng(a.seed)
        f.g = f.g + a.perturb * (rng.standard_normal(f.g.shape) + 1j * rng.standard_normal(f.g.shape))
    report = {"H": f.H, "shape": list(f.g.shape), "perturb": a.perturb}
    checks = {}
    if f.is_grid:
        report["pde_residual_max"] = max_residual(pde_residual(f))
        try:
            patch = integrate_representation(f, tol=a.tol)
            report["integrability_residual"] = patch.integrability_residual
            checks["integrable"] = True
            if a.output:
                path = out_path(a.output)
                P = patch.points.reshape(-1, 3)
                with open(path, "w") as fh:
                    fh.write("u,v,x1,x2,x3\n")
                    np.savetxt(fh, np.column_stack([f.u.ravel(), f.v.ravel(), P]), delimiter=",", fmt="%.17g")
                report["output"] = str(path)
        except IntegrabilityError as exc:
            report["integrability_residual"] = exc.residual
            report["error"] = str(exc)
            checks["integrable"] = False
    if a.L_table:
        from .quad_diff import LTable, Q_eval

        q = Q_eval(f, LTable.from_json(a.L_table))
        report["Q"] = {k: q[k] for k in ("vanish_max", "vanish_median", "cr_ratio_max", "noise_floor")}
    report["checks"] = checks
    print(_dump(report, out_path(a.report) if a.report else None))
    return EXIT_OK if all(checks.values()) else EXIT_CHECK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _solver_flags(p):
    p.add_argument("--resolution", type=int, help="target vertex count (10 nu^2 + 2)")
    p.add_argument("--tol", type=_positive, help="max |H_v - H|")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--zero-cluster-C", dest="zero_cluster_C", type=_positive)
    p.add_argument("--config", help="solver config JSON")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="solcmc", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("profile", help="profile curve (t, x1, x3) of the invariant cylinder")
    p.add_argument("--H", type=_positive, required=True)
    p.add_argument("-n", type=int, default=512)
    p.add_argument("-o", "--output")
    p.set_defaults(run=cmd_profile)

    p = sub.add_parser("cylinder", help="cylinder Gauss field, surface or summary")
    p.add_argument("--H", type=_positive, required=True)
    p.add_argument("-n", type=int, default=256)
    p.add_argument("--nv", type=int, default=5)
    p.add_argument("--tol", type=_positive, default=1e-2, help="integrability tolerance")
    p.add_argument("--format", choices=("csv", "obj", "json"), default="csv")
    p.add_argument("-o", "--output")
    p.set_defaults(run=cmd_cylinder)

    p = sub.add_parser("sphere", help="solve and verify one CMC sphere")
    p.add_argument("--H", type=_positive, required=True)
    _solver_flags(p)
    p.add_argument("--obj")
    p.add_argument("--report")
    p.add_argument("--quad-diff", dest="quad_diff", action="store_true", help="also build and check L")
    p.add_argument("--L-table", dest="L_table")
    p.set_defaults(run=cmd_sphere)

    p = sub.add_parser("family", help="continuation over a list of H values")
    p.add_argument("--H", type=_positive, nargs="+", required=True)
    _solver_flags(p)
    p.add_argument("--out-dir", dest="out_dir", default="family")
    p.set_defaults(run=cmd_family)

    p = sub.add_parser("verify", help="verify a sphere mesh from OBJ")
    p.add_argument("--mesh", required=True)
    p.add_argument("--H", type=_positive)
    _solver_flags(p)
    p.add_argument("--report")
    p.add_argument("--quad-diff", dest="quad_diff", action="store_true")
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("minimal", help="residual sweep of an entire minimal graph")
    p.add_argument("--family", required=True, choices=("Affine", "Exp", "MixedExp", "Exp2"))
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=0.0)
    p.add_argument("-n", type=int, default=21)
    p.add_argument("--x2-range", dest="x2_range", type=float, nargs=2, default=(-2.0, 2.0))
    p.add_argument("--x3-range", dest="x3_range", type=float, nargs=2, default=(-2.0, 2.0))
    p.add_argument("--tol", type=_positive, default=1e-10)
    p.add_argument("-o", "--output")
    p.set_defaults(run=cmd_minimal)

    p = sub.add_parser("gaussmap", help="PDE residual, integration and Q of a Gauss field")
    p.add_argument("--field", help="GaussField CSV")
    p.add_argument("--cylinder-H", dest="cylinder_H", type=_positive)
    p.add_argument("-n", type=int, default=256)
    p.add_argument("--nv", type=int, default=5)
    p.add_argument("--perturb", type=float, default=0.0, help="add complex Gaussian noise to g")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=_positive, default=1e-2)
    p.add_argument("--L-table", dest="L_table")
    p.add_argument("--report")
    p.add_argument("-o", "--output", help="CSV of the integrated surface")
    p.set_defaults(run=cmd_gaussmap)
    return ap


def run(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(message)s")
    try:
        return a.run(a)
    except UsageError as exc:
        print(f"solcmc {a.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"solcmc {a.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
