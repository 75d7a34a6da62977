"""Local linear regression with a tricube kernel and a fixed bandwidth."""

from __future__ import annotations

import numpy as np


class FitError(ValueError):
    pass


def tricube(d: np.ndarray) -> np.ndarray:
    d = np.abs(d)
    return np.where(d < 1.0, (1.0 - d**3) ** 3, 0.0)


def local_linear(x, y, x_eval, bandwidth: float, min_support: int = 3) -> np.ndarray:
    """Evaluate the local linear smoother of ``(x, y)`` at ``x_eval``.

    Each evaluation point gets its own weighted least-squares line, with
    weights ``tricube(|x - x0| / bandwidth)``.  Raises :class:`FitError` when
    fewer than ``min_support`` data points carry positive weight.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x_eval = np.atleast_1d(np.asarray(x_eval, dtype=float))
    if bandwidth <= 0:
        raise FitError("bandwidth must be positive")
    if x.shape != y.shape:
        raise FitError("x and y differ in shape")

    d = (x[None, :] - x_eval[:, None]) / bandwidth
    w = tricube(d)
    support = (w > 0).sum(axis=1)
    if support.min(initial=min_support) < min_support:
        bad = x_eval[support < min_support][0]
        raise FitError(f"only {support.min()} points within bandwidth {bandwidth} of {bad}")

    # centred at x0, so the intercept is the fitted value
    dx = x[None, :] - x_eval[:, None]
    sw = w.sum(axis=1)
    mx = (w * dx).sum(axis=1) / sw
    my = (w * y[None, :]).sum(axis=1) / sw
    mxx = (w * dx * dx).sum(axis=1) / sw
    mxy = (w * dx * y[None, :]).sum(axis=1) / sw
    var = mxx - mx * mx
    slope = np.divide(mxy - mx * my, var, out=np.zeros_like(var), where=var > 1e-12 * bandwidth**2)
    return my - slope * mx
