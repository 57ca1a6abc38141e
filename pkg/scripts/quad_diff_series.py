"""Two-level refinement series for L and Q at one H.

    python3 scripts/quad_diff_series.py --H 1 --resolutions 2562 10242
"""

import argparse
import json
import warnings

from solcmc.cylinders import gauss_of_cylinder
from solcmc.quad_diff import Q_eval, build_L, sphere_self_check, verify_L
from solcmc.sphere_solver import SolverConfig, solve


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--H", type=float, default=1.0)
    ap.add_argument("--resolutions", type=int, nargs="+", default=[2562, 10242])
    args = ap.parse_args()
    cyl = gauss_of_cylinder(args.H)
    rows = []
    for res in args.resolutions:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = solve(args.H, SolverConfig(resolution=res))
        t = build_L(m)
        v = verify_L(t, m)
        own = sphere_self_check(m, t)["vanish_max"]
        rows.append({
            "n_vertices": m.n_vertices,
            "ratio_max": v["ratio_max"],
            "eqL_residual": v["eqL_residual"],
            "corrupted_over_honest": verify_L(t.scaled(2.0), m)["eqL_residual"] / v["eqL_residual"],
            "sphere_vanish_max": own,
            "cylinder_over_sphere": Q_eval(cyl, t)["vanish_max"] / own,
        })
        print(json.dumps(rows[-1]))
    if len(rows) > 1:
        print(f"vanish shrink {rows[-2]['sphere_vanish_max'] / rows[-1]['sphere_vanish_max']:.2f}x, "
              f"eqL shrink {rows[-2]['eqL_residual'] / rows[-1]['eqL_residual']:.2f}x")


if __name__ == "__main__":
    main()
