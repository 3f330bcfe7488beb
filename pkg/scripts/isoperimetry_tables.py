"""Profile, concentration and small-ball tables in one go.

    python3 scripts/isoperimetry_tables.py --n 100 --m 1000000 --outdir tables/
"""

import argparse
import csv
import math
from pathlib import Path

import numpy as np

from locwalk.bodies import Gaussian, ProductExponential, sample_iid
from locwalk.isoperimetry import (
    concentration_experiment,
    cone_slab_profile,
    estimate_log_cheeger,
    gaussian_profile_grid,
    small_ball_experiment,
)
from locwalk.rng import stream


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--m", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default="tables")
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)

    grid = gaussian_profile_grid()
    write(out / "profile.csv", ["descriptor", "g", "boundary", "kappa", "psi"],
          [[" ".join(map(str, p.descriptor[1:])), p.g, p.boundary, p.kappa, p.psi] for p in grid])
    print(f"1-d gaussian profile: min kappa {min(p.kappa for p in grid):.4f}")

    for name, dens in (("gaussian", Gaussian(args.n)), ("product_exponential", ProductExponential(args.n))):
        tab = concentration_experiment(dens, "euclidean_norm", np.arange(0, 8.5, 0.5), args.m, stream(args.seed, 1))
        rows = list(tab.rows())
        write(out / f"concentration_{name}.csv", list(rows[0]), [list(r.values()) for r in rows])
        print(f"concentration {name}: fitted c {tab.c_median:.3f} (median), {tab.c_mean:.3f} (mean)")

    for n in (2, 8):
        s = sample_iid(Gaussian(n), 200_000, stream(args.seed, 2, n))
        dirs = stream(args.seed, 3, n).standard_normal((20, n))
        est = estimate_log_cheeger(s, np.vstack([np.eye(n), dirs]))
        print(f"halfspace log-Cheeger upper estimate, gaussian n={n}: {est.kappa_hat:.3f} (rho ~ {est.rho_hat:.3f})")

    rows = []
    for n in (25, 100):
        eps = [0.05, 0.1, 0.2, 0.5, 0.7, 1.0]
        mc = small_ball_experiment(n, eps, mode="monte_carlo", m=args.m, rng=stream(args.seed, 4, n))
        for e, r in zip(small_ball_experiment(n, eps), mc):
            rows.append([n, e.eps, e.prob, e.bound, e.bound_k2, r.prob if r.resolvable else "< resolution"])
    write(out / "smallball.csv", ["n", "eps", "p_exact", "bound", "bound_k2", "p_mc"], rows)

    rows = []
    for n in (64, 100, 144):
        for D in np.linspace(2 * math.sqrt(n), n / 2, 5):
            c = cone_slab_profile(n, float(D))
            rows.append([n, float(D), c.t0, c.log_p, c.kappa_upper, c.kappa_upper * math.sqrt(D)])
    write(out / "cone_slab.csv", ["n", "D", "t0", "log_p", "kappa_upper", "kappa_sqrt_D"], rows)
    print(f"tables written to {out}/")


if __name__ == "__main__":
    main()
