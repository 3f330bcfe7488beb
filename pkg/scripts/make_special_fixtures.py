"""Regenerate tests/fixtures/special_reference.json with 50-digit mpmath values."""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "special_reference.json"


def main():
    normal = []
    for x in [-30, -12.5, -8, -5, -3, -1.5, -1, -0.5, -1e-3, 0, 1e-3, 0.25, 0.5, 1, 2, 3.7, 6, 9, 20, 37]:
        x = mp.mpf(x)
        normal.append(
            {"x": float(x), "cdf": mp.nstr(mp.ncdf(x), 30), "sf": mp.nstr(mp.ncdf(-x), 30),
             "pdf": mp.nstr(mp.npdf(x), 30)}
        )
    gamma = []
    for a, x in [(0.5, 0.01), (0.5, 2), (1, 1), (2.5, 0.1), (5, 4), (5, 6), (12.5, 0.625), (12.5, 1.25),
                 (12.5, 2.5), (12.5, 12.5), (12.5, 30), (50, 2.5), (50, 5), (50, 10), (50, 49),
                 (50, 50), (50, 51), (50, 80), (150, 140), (500, 480), (1000, 1100), (3.3, 17.2)]:
        a_, x_ = mp.mpf(a), mp.mpf(x)
        p = mp.gammainc(a_, 0, x_, regularized=True)
        q = mp.gammainc(a_, x_, mp.inf, regularized=True)
        gamma.append({"a": a, "x": x, "P": mp.nstr(p, 30), "Q": mp.nstr(q, 30)})
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"normal": normal, "gamma": gamma}, indent=1) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
