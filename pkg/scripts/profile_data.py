"""Write the cylinder profile curves (t, x1, x3) for a list of H values.

    python3 scripts/profile_data.py --H 1 5 --out out/profiles
"""

import argparse
from pathlib import Path

from solcmc.cylinders import embedding_defect, profile


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--H", type=float, nargs="+", default=[1.0, 5.0])
    ap.add_argument("-n", type=int, default=512)
    ap.add_argument("--out", type=Path, default=Path("out/profiles"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for H in args.H:
        p = profile(H, args.n)
        path = args.out / f"profile_H{H:g}.csv"
        p.to_csv(path)
        print(f"H={H:g}: loop gap {p.loop_gap:.10f}, embedding defect {embedding_defect(H):.10f} -> {path}")


if __name__ == "__main__":
    main()
