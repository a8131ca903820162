"""Small-ball exponents of the design measures and the moment oracles.

    python scripts/smallball_and_moments.py
"""

import math

import numpy as np

from kspec import dist, oracle, regress

SEED = 6


def exponents():
    grid = np.geomspace(10 ** -2.5, 10 ** -0.5, 20)
    cases = [("uniform [-2,2]^2", dist.UniformBox([-2, -2], [2, 2]), 4.0, 2.0),
             ("cantor", dist.Cantor1D(), 1.0, math.log(2) / math.log(3)),
             ("sierpinski", dist.sierpinski(), 4.0, math.log(3) / math.log(2)),
             ("0.5/0.5 mixture", dist.uniform_sierpinski_mixture(0.5), 4.0, float("nan"))]
    print(f"{'measure':<18} {'slope':>7} {'se':>6} {'theory':>7} {'box-dim':>8}")
    for name, spec, diam, want in cases:
        X = dist.sample(spec, 10000, SEED)
        slope, se = dist.singularity_exponent(dist.small_ball_curve(X, grid * diam))
        box = dist.box_counting_dimension(X) if X.shape[1] == 2 else float("nan")
        print(f"{name:<18} {slope:>7.3f} {se:>6.3f} {want:>7.3f} {box:>8.3f}")


def moments():
    print("\nh^-1 E[H^2] for uniform [0,1] (limit 0.6)")
    for h, val, se, target in oracle.ac_limit_check(dist.UniformBox([0.0], [1.0]), 1.0,
                                                    h_list=[0.1, 0.03, 0.01], seed=SEED):
        print(f"  h={h:<5g} {val:.4f} +- {se:.4f}")
    print("\nmoment ratio (E G^2 + E H^4 / n) / (E H^2)^2, h = n^-1/3")
    for name, spec in (("uniform", dist.UniformBox([-2, -2], [2, 2])),
                       ("mixture", dist.uniform_sierpinski_mixture(0.5))):
        d = regress.DgpSpec(spec, [0.0])
        r = [oracle.hall_ratio(oracle.mc_moments(d, n ** (-1 / 3), reps=20000, seed=SEED), n)
             for n in (500, 2000, 8000)]
        print(f"  {name:<8} " + "  ".join(f"{v:.3f}" for v in r))


if __name__ == "__main__":
    exponents()
    moments()
