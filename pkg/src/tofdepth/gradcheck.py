"""Finite-difference gradient verification.

Analytic gradients are compared against central differences evaluated in
double precision. Relative error per entry uses a small floor so that
near-zero true gradients (pure finite-difference noise) do not produce
spurious failures, while a genuinely wrong gradient of any usable
magnitude still fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-3
DEFAULT_TOL = 1e-4
_REL_FLOOR = 1e-6


def numerical_gradient(f: Callable[[], float], x: np.ndarray,
                       h: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. array x (mutated in place)."""
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = _REL_FLOOR) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max()) if a.size else 0.0


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: float = 0.0
    per_param: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"gradient check {verdict}: max relative error "
                f"{self.max_rel_error:.3e} (tolerance {self.tolerance:.1e})")


def check_gradients(loss_fn: Callable[[], float], params: dict,
                    analytic: dict, h: float = DEFAULT_STEP,
                    tol: float = DEFAULT_TOL) -> GradCheckReport:
    """Compare analytic gradients of loss_fn with central differences.

    params maps names to float64 arrays that loss_fn reads; each array is
    perturbed entry by entry. analytic maps the same names to the gradients
    under test.
    """
    report = GradCheckReport(tolerance=tol)
    for name, p in params.items():
        if p.dtype != np.float64:
            raise TypeError(f"gradient check requires float64 arrays, '{name}' is {p.dtype}")
        num = numerical_gradient(loss_fn, p, h=h)
        err = max_relative_error(analytic[name], num)
        report.per_param[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
    return report
