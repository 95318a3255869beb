"""Test 2 on triangulated disk meshes: velocity rates per trilinear variant."""
import argparse
from pathlib import Path

from vemflow.analysis import convergence_study, make_problem
from vemflow.cli import parse_levels
from vemflow.mesh import make_mesh


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", default="1/5,1/10,1/20")
    ap.add_argument("--formulation", default="curl")
    ap.add_argument("--nu", type=float, default=1.0)
    ap.add_argument("--out-dir", default="results/test2")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meshes = [make_mesh("tri", h) for h in parse_levels(args.levels)]
    pb = make_problem("test2", args.nu)
    for v in ("conv", "skew", "rot"):
        rep = convergence_study(meshes, pb, args.formulation, v)
        (out / f"{args.formulation}_{v}.csv").write_text(rep.to_csv())
        rates = " ".join(f"{r:.2f}" for r in rep.rate_u[1:])
        print(f"{v:4s} err_u_h1 {' '.join(f'{r.err_u_h1:.3e}' for r in rep.rows)}  rates {rates}")


if __name__ == "__main__":
    main()
