"""Test 1 errors on CVT or distorted-quad meshes for every formulation and variant.

Writes one CSV per (formulation, variant) into --out-dir and prints a summary table.
"""
import argparse
from pathlib import Path

from vemflow.analysis import convergence_study, make_problem
from vemflow.cli import parse_levels
from vemflow.mesh import make_mesh


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", default="cvt", choices=["cvt", "dquad"])
    ap.add_argument("--levels", default="1/8,1/16,1/32")
    ap.add_argument("--formulations", default="velocity-pressure,curl")
    ap.add_argument("--variants", default="conv,skew,rot")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="results/test1")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meshes = [make_mesh(args.family, h, args.seed) for h in parse_levels(args.levels)]
    pb = make_problem("test1")
    for form in args.formulations.split(","):
        for v in args.variants.split(","):
            rep = convergence_study(meshes, pb, form, v)
            (out / f"{args.family}_{form}_{v}.csv").write_text(rep.to_csv())
            for r, ru, rp in zip(rep.rows, rep.rate_u, rep.rate_p):
                print(f"{form:18s} {v:4s} h={r.h:<8.5g} dofs={r.n_dofs:6d} u={r.err_u_h1:.4e} ({ru:5.2f}) p={r.err_p_l2:.4e} ({rp:5.2f})")


if __name__ == "__main__":
    main()
