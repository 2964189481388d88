"""The Moreau envelope smooths a loss from below, and the lambda calculus turns
envelope inequalities into closed-form bounds.

Run: python demos/01_envelope_and_lambda.py
"""
import numpy as np

from moreaugen.envelope import AbsoluteError, Hinge, Square, loss_value, moreau_closed, optimize_lambda_square_family

yhat = np.linspace(-3, 3, 7)

print("absolute error around y = 0: the envelope is a Huber loss that tightens as lambda grows")
print("   yhat     f   " + "  ".join(f"lam={lam:<5g}" for lam in (0.1, 1, 10)))
for v in yhat:
    env = [moreau_closed(AbsoluteError(), lam, v, 0.0) for lam in (0.1, 1, 10)]
    print(f"{v:7.2f} {loss_value(AbsoluteError(), v, 0.0):5.2f}   " + "  ".join(f"{e:9.4f}" for e in env))

print("\nhinge with label +1: f - f_lam never exceeds 1 / (4 lam)")
for lam in (0.1, 1.0, 10.0):
    gap = loss_value(Hinge(), yhat, 1.0) - moreau_closed(Hinge(), lam, yhat, 1.0)
    print(f"  lam={lam:<5g} max gap {gap.max():.4f}  limit {1 / (4 * lam):.4f}")

print("\nsquare loss: f_lam = lam / (1 + lam) f exactly")
print(f"  f(2, 0) = {loss_value(Square(), 2.0, 0.0)},  f_1(2, 0) = {moreau_closed(Square(), 1.0, 2.0, 0.0)}")

print("\nsup over lam of lam/(1+lam) a - lam b equals (sqrt(a) - sqrt(b))_+^2")
for a, b in [(1.0, 0.25), (2.0, 0.5), (0.3, 0.4)]:
    grid = np.geomspace(1e-6, 1e6, 100_000)
    brute = max((grid / (1 + grid) * a - grid * b).max(), 0.0)
    print(f"  a={a}, b={b}: closed form {optimize_lambda_square_family(a, b):.6f}, grid {brute:.6f}")
