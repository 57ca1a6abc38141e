"""Solve the sphere family by continuation and verify every member.

    python3 scripts/run_family.py --H 2.0 1.5 1.0 0.8 0.7 0.6 --out out/family
"""

import argparse
import json
import logging
import time
from pathlib import Path

from solcmc.sphere_solver import SolverConfig, continue_family, solve, verify


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--H", type=float, nargs="+", default=[2.0, 1.5, 1.0, 0.8, 0.7, 0.6])
    ap.add_argument("--resolution", type=int, default=10242)
    ap.add_argument("--out", type=Path, default=Path("out/family"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    cfg = SolverConfig(resolution=args.resolution)
    t0 = time.time()
    m0 = solve(args.H[0], cfg)
    meshes, reports, summary = continue_family(m0, args.H[1:], cfg)
    meshes.insert(0, m0)
    reports.insert(0, verify(m0, cfg))
    for m, rep in zip(meshes, reports):
        m.to_obj(args.out / f"sphere_H{m.H:g}.obj")
        rep.to_json(args.out / f"report_H{m.H:g}.json")
        print(f"H={m.H:g} passed={rep.passed} index={rep.index} maxHdev={rep.maxHdev:.2e} "
              f"B2max={rep.B2max:.3f}/{rep.B2bound:.3f} diameter={rep.diameter:.3f}/{rep.diameterBound} "
              f"failures={rep.failures()}")
    summary["seconds"] = time.time() - t0
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    print(json.dumps(summary, default=float))


if __name__ == "__main__":
    main()
