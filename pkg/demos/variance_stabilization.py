"""Show the variance-stabilizing transform doing its job.

Poisson noise scales with the signal: std = sqrt(lambda). After
z -> 2*sqrt(z + 3/8) the noise std is close to 1 at every intensity, which
is what lets a single network (or a single Gaussian filter) treat bright
and dark regions alike. The script prints the std before and after across
three decades of intensity, then compares the two inverse variants at low
counts, where the naive algebraic inverse picks up a visible bias.

Usage: python3 demos/variance_stabilization.py
"""

import numpy as np

from xraydenoise.noise import anscombe, anscombe_inv

N = 200_000


def main():
    print(f"{'lambda':>8} {'raw std':>9} {'sqrt(lam)':>10} {'stabilized':>11}")
    for lam in (10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0):
        rng = np.random.Generator(np.random.Philox(int(lam)))
        z = rng.poisson(lam, size=N).astype(np.float64)
        print(f"{lam:8.0f} {z.std():9.3f} {np.sqrt(lam):10.3f} "
              f"{anscombe(z).std():11.4f}")

    # Inverting the transform after averaging (which is what any smoother
    # does) is where the bias shows: the algebraic inverse of the mean
    # undershoots at low counts, the corrected closed form does not.
    print(f"\n{'lambda':>8} {'algebraic':>10} {'unbiased':>10}")
    for lam in (2.0, 5.0, 10.0, 20.0, 50.0):
        rng = np.random.Generator(np.random.Philox(7000 + int(lam)))
        z = rng.poisson(lam, size=N).astype(np.float64)
        a_mean = np.array([anscombe(z).mean()])
        alg = anscombe_inv(a_mean, mode="algebraic")[0]
        unb = anscombe_inv(a_mean, mode="unbiased")[0]
        print(f"{lam:8.0f} {alg:10.3f} {unb:10.3f}")
    print("\n(the unbiased column should track lambda to within ~1%)")


if __name__ == "__main__":
    main()
