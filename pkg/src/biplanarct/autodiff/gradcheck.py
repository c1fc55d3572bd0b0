"""Central-difference gradient verification.

Runs the function under test in float64 so truncation error of the f32
training path cannot be mistaken for a wrong adjoint. For large inputs a
random subset of coordinates is probed (`max_probes` per input); the analytic
gradient still comes from one full backward pass.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward


class GradCheckReport:
    def __init__(self, errors: dict, tol: float):
        self.errors = errors  # input name -> max relative error
        self.tol = tol

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def __repr__(self):
        lines = ["gradcheck %s (tol %.1e)" % ("PASS" if self.passed else "FAIL", self.tol)]
        for name, err in self.errors.items():
            lines.append("  %-24s max rel err %.3e" % (name, err))
        return "\n".join(lines)


def grad_check(fn, inputs, eps: float = 1e-3, tol: float = 1e-4,
               max_probes: int = 25, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued ``fn`` against central differences.

    ``inputs`` is a dict name -> ndarray (checked coordinates) — every entry is
    passed to ``fn`` as a float64 Tensor with requires_grad set.
    """
    rng = np.random.default_rng(seed)
    tensors = {name: Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)
               for name, arr in inputs.items()}

    out = fn(tensors)
    if out.data.size != 1:
        raise ValueError("grad_check requires a scalar-valued function, got shape %s"
                         % (out.shape,))
    backward(out)

    errors = {}
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        n = flat.size
        probes = (np.arange(n) if n <= max_probes
                  else rng.choice(n, size=max_probes, replace=False))
        worst = 0.0
        for i in probes:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = fn(tensors).item()
            flat[i] = orig - eps
            f_minus = fn(tensors).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            a = analytic.reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1.0)
            worst = max(worst, abs(a - numeric) / denom)
        errors[name] = worst
    return GradCheckReport(errors, tol)
