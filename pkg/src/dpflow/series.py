"""Power-series coefficient algebra.

Series are plain 1-D float arrays indexed by order k = 0..K; coeffs[0] is
the underlying function's value at the start of the window. Products of
time functions become discrete convolutions of their coefficient arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def conv(x, y, k):
    """Order-k convolution sum_{m=0..k} x[m] * y[k-m]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if k < 0 or k >= x.size or k >= y.size:
        raise ValueError(f"order {k} out of range for series of sizes "
                         f"{x.size}, {y.size}")
    return float(np.dot(x[:k + 1], y[k::-1]))


@dataclass(frozen=True)
class ConvLinearization:
    """Coefficients (a, b, c) with a*x[k] + b*y[k] + c == conv(x, y, k).

    For a self-convolution (x is y) the caller uses 2a*x[k] + c instead.
    """
    a: float
    b: float
    c: float


def linearize_conv(x, y, k):
    """Split the order-k convolution into its linear part in the unknown
    order-k coefficients plus a known lower-order remainder."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if k < 1:
        raise ValueError("linearization needs k >= 1")
    if k >= x.size or k >= y.size:
        raise ValueError(f"order {k} out of range")
    c = float(np.dot(x[1:k], y[k - 1:0:-1])) if k >= 2 else 0.0
    return ConvLinearization(a=float(y[0]), b=float(x[0]), c=c)


def eval_series(coeffs, t):
    """Evaluate the polynomial sum_k coeffs[k] * t**k (Horner form).

    Works on a 1-D series or on a stack of series with orders along the
    last axis.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    acc = coeffs[..., -1].copy()
    for k in range(coeffs.shape[-1] - 2, -1, -1):
        acc = acc * t + coeffs[..., k]
    return acc if acc.ndim else float(acc)
