"""C1 stream-function scheme on Test 1 with both consistency choices."""
import argparse

from vemflow.analysis import make_problem, rates, run_level
from vemflow.assembly import Discretization, SolverSettings
from vemflow.cli import parse_levels
from vemflow.mesh import make_mesh


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", default="dquad", choices=["cvt", "dquad"])
    ap.add_argument("--levels", default="1/10,1/20,1/40")
    args = ap.parse_args()

    hs = parse_levels(args.levels)
    discs = [Discretization(make_mesh(args.family, h), 2) for h in hs]
    pb = make_problem("test1")
    for consistency in ("hessian", "laplacian"):
        st = SolverSettings(c1_consistency=consistency)
        errs = [run_level(d, pb, "stream-c1", "conv", settings=st)[0].err_psi_h2 for d in discs]
        print(consistency, " ".join(f"{e:.4e}" for e in errs), "rates", " ".join(f"{r:.2f}" for r in rates(hs, errs)[1:]))


if __name__ == "__main__":
    main()
