"""Finite-difference verification of analytic gradients.

Central differences are compared elementwise against the gradients
produced by the reverse pass. Checks should run at float64: float32
differences are too noisy for tight tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import NumericsError, Tensor, backward

# Relative error uses a floored denominator so near-zero gradient pairs
# compare absolutely rather than blowing up.
_REL_FLOOR = 1e-2


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_index: tuple
    n_checked: int

    @property
    def ok(self):
        return np.isfinite(self.max_rel_err)


def _eval_scalar(f, x: Tensor) -> float:
    out = f(x)
    if out.data.shape != ():
        raise NumericsError(f"grad_check: f must be scalar-valued, got shape {out.shape}")
    return float(out.data)


def grad_check(f, x: Tensor, eps: float = 1e-6) -> GradCheckReport:
    """Compare analytic d f(x) / dx against central finite differences.

    ``f`` must be a pure scalar-valued function that rebuilds its graph
    from ``x`` on every call. Returns the worst relative error and the
    index at which it occurs.
    """
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    if not x.requires_grad:
        raise NumericsError("grad_check: x must require grad")

    x.grad = None
    loss = f(x)
    if loss.data.shape != ():
        raise NumericsError(f"grad_check: f must be scalar-valued, got shape {loss.shape}")
    backward(loss)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    max_rel = 0.0
    worst = ()
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = _eval_scalar(f, x)
        flat[i] = orig - eps
        f_minus = _eval_scalar(f, x)
        flat[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = analytic.reshape(-1)[i]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), _REL_FLOOR)
        if rel > max_rel:
            max_rel = rel
            worst = np.unravel_index(i, x.data.shape)
    return GradCheckReport(max_rel_err=max_rel, worst_index=tuple(int(v) for v in worst), n_checked=flat.size)


def grad_check_params(f, params: dict, eps: float = 1e-6) -> dict:
    """Run ``grad_check`` against every requires-grad tensor in a dict.

    ``f`` takes no arguments and evaluates the loss from the (mutated in
    place) parameter tensors. Returns {name: GradCheckReport}.
    """
    reports = {}
    for name, p in params.items():
        if not p.requires_grad:
            continue
        reports[name] = grad_check(lambda _t, _f=f: _f(), p, eps=eps)
    return reports
