"""Tour of the autodiff engine and its verification story.

The tensor library is a small define-by-run reverse-mode graph over numpy
arrays. Every differentiable op registers a finite-difference check, and the
whole generator/discriminator stack is checked end to end in float64.

Run:  python3 demos/gradcheck_tour.py
"""

import numpy as np

import biplanarct.autodiff as ad
from biplanarct.autodiff import Tensor, backward, grad_check
from biplanarct.verification import run_all

# --- a tiny graph by hand ---------------------------------------------------
x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
y = Tensor(np.array([0.5, 0.5, 0.5]), requires_grad=True)
loss = ad.reduce_mean(ad.mul(ad.sub(x, y), ad.sub(x, y)))  # mean((x-y)^2)
backward(loss)
print("loss =", loss.item())
print("dL/dx =", x.grad, " (closed form: 2(x-y)/3 =", 2 * (x.data - y.data) / 3, ")")

# --- the checker on a custom function ----------------------------------------
report = grad_check(
    lambda t: ad.reduce_mean(ad.sigmoid(ad.mul(t["a"], t["b"]))),
    {"a": np.random.default_rng(0).standard_normal((3, 4)),
     "b": np.random.default_rng(1).standard_normal((3, 4))})
print("\ncustom function:", "PASS" if report.passed else "FAIL",
      "max rel err %.2e" % report.max_error)

# --- every registered check ---------------------------------------------------
# Op-level checks probe each primitive on small random inputs; the model
# checks run the real generator/discriminator at 8^3 with 2 levels, in f64.
print("\nregistered checks:")
worst = 0.0
for name, rep in run_all():
    print("  %-20s %s  %.2e" % (name, "PASS" if rep.passed else "FAIL",
                                rep.max_error))
    worst = max(worst, rep.max_error)
print("worst over everything: %.2e" % worst)
