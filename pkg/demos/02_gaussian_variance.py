"""The same story for a Gaussian variance.

Run:  python demos/02_gaussian_variance.py

Dividing by n shrinks the variance by (n-1)/n per generation; dividing by
n-1 leaves its expectation fixed.  With n = 10 the MLE chain loses about
two thirds of its variance in ten rounds.
"""

from ple_lab import LoopConfig, SeededRng, run_loop

N = 10
mle = run_loop(LoopConfig("gaussian", (0.0, 1.0), N, 10, 1000, "mle"), SeededRng(4))
ple = run_loop(LoopConfig("gaussian", (0.0, 1.0), N, 10, 1000, "ple"), SeededRng(5))

print("  gen   MLE var        predicted   PLE var")
for g in range(11):
    m, ms = mle.mean("var")[g], mle.stderr("var")[g]
    p, ps = ple.mean("var")[g], ple.stderr("var")[g]
    print(f"  {g:>3}   {m:.3f}+/-{ms:.3f}   {((N - 1) / N) ** g:.3f}       {p:.3f}+/-{ps:.3f}")
