"""Extended-precision helpers on numpy object arrays of ``gmpy2.mpfr``.

Every public function expects to run inside ``working_precision(bits)``;
arithmetic rounds to the precision of the active gmpy2 context.
"""
from __future__ import annotations

import os
from contextlib import contextmanager
from fractions import Fraction

import gmpy2
import numpy as np

from .errors import ConditioningError

DEFAULT_PRECISION = int(os.environ.get("METASTABLE_PRECISION", "256"))

mpfr = gmpy2.mpfr


@contextmanager
def working_precision(bits: int):
    with gmpy2.context(gmpy2.get_context(), precision=int(bits)):
        yield


def to_mp(value) -> gmpy2.mpfr:
    if isinstance(value, type(mpfr(0))):
        return value
    if isinstance(value, Fraction):
        return mpfr(gmpy2.mpq(value.numerator, value.denominator))
    if isinstance(value, str) and "/" in value:
        return to_mp(Fraction(value))
    return mpfr(value)


def zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(mpfr(0))
    return out


def eye(n: int) -> np.ndarray:
    out = zeros((n, n))
    for i in range(n):
        out[i, i] = mpfr(1)
    return out


def asarray(values) -> np.ndarray:
    arr = np.array(values, dtype=object)
    flat = arr.reshape(-1)
    for k, v in enumerate(flat):
        flat[k] = to_mp(v)
    return arr


def exp(arr):
    return np.frompyfunc(gmpy2.exp, 1, 1)(arr)


def log(arr):
    return np.frompyfunc(gmpy2.log, 1, 1)(arr)


def sqrt(arr):
    return np.frompyfunc(gmpy2.sqrt, 1, 1)(arr)


def to_float(arr) -> np.ndarray:
    return np.array(np.frompyfunc(float, 1, 1)(arr), dtype=float)


def abs_max(arr) -> gmpy2.mpfr:
    arr = np.asarray(arr, dtype=object).reshape(-1)
    if arr.size == 0:
        return mpfr(0)
    return max(abs(v) for v in arr)


def _lu_factor(a: np.ndarray):
    a = a.copy()
    n = a.shape[0]
    perm = np.arange(n)
    for k in range(n):
        pivot = k + int(np.argmax([abs(v) for v in a[k:, k]]))
        if a[pivot, k] == 0:
            raise ConditioningError(f"singular matrix: zero pivot in column {k}")
        if pivot != k:
            a[[k, pivot]] = a[[pivot, k]]
            perm[[k, pivot]] = perm[[pivot, k]]
        if k + 1 < n:
            a[k + 1:, k] = a[k + 1:, k] / a[k, k]
            a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return a, perm


def _lu_apply(lu: np.ndarray, perm: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    y = b[perm].copy()
    for k in range(n):
        if k:
            y[k] -= lu[k, :k] @ y[:k]
    for k in range(n - 1, -1, -1):
        if k + 1 < n:
            y[k] -= lu[k, k + 1:] @ y[k + 1:]
        y[k] = y[k] / lu[k, k]
    return y


def solve(a: np.ndarray, b: np.ndarray, refine: bool = True,
          residual_tol: float | None = None) -> np.ndarray:
    """Solve ``a x = b`` by LU with partial pivoting.

    One refinement step is taken with the residual evaluated at twice the
    working precision. ``b`` may hold several right-hand sides as columns.
    """
    a = np.asarray(a, dtype=object)
    b = np.asarray(b, dtype=object)
    if a.shape[0] == 0:
        return b.copy()
    lu, perm = _lu_factor(a)
    x = _lu_apply(lu, perm, b)
    if refine:
        bits = gmpy2.get_context().precision
        with working_precision(2 * bits):
            r = b - a @ x
        r = r * mpfr(1)  # round back to working precision
        x = x + _lu_apply(lu, perm, r)
    if residual_tol is not None:
        res = abs_max(b - a @ x)
        scale = abs_max(a) * abs_max(x) + abs_max(b)
        if scale and res > residual_tol * scale:
            raise ConditioningError(
                f"linear solve residual {float(res):.3e} exceeds "
                f"{residual_tol:.1e} relative to scale {float(scale):.3e}")
    return x
