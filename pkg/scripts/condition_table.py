"""DoF counts and first-Newton-operator condition numbers across refinement levels.

With several seeds the log-log slope is also fitted to the per-level
geometric mean, which damps the mesh-to-mesh scatter of random CVT meshes.
"""
import argparse
import csv
import sys

import numpy as np

from vemflow.analysis import make_problem
from vemflow.assembly import Discretization, assemble, estimate_condition_number
from vemflow.cli import parse_levels
from vemflow.mesh import make_mesh


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", default="cvt", choices=["cvt", "dquad"])
    ap.add_argument("--levels", default="1/8,1/16,1/32")
    ap.add_argument("--seeds", type=int, default=1)
    ap.add_argument("--formulations", default="velocity-pressure,reduced,curl")
    args = ap.parse_args()

    hs = parse_levels(args.levels)
    forms = args.formulations.split(",")
    pb = make_problem("test1")
    cond = {f: np.zeros((args.seeds, len(hs))) for f in forms}
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["seed", "h", "formulation", "n_dofs", "cond"])
    for s in range(args.seeds):
        for i, h in enumerate(hs):
            disc = Discretization(make_mesh(args.family, h, s), 2)
            for f in forms:
                cond[f][s, i] = estimate_condition_number(assemble(disc, f, 1.0, pb).matrix)
                w.writerow([s, f"{h:g}", f, disc.dof_counts(f)["total"], f"{cond[f][s, i]:.4e}"])
                sys.stdout.flush()
    for f in forms:
        gm = np.exp(np.log(cond[f]).mean(axis=0))
        print(f"# {f}: slope {-np.polyfit(np.log(hs), np.log(gm), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
