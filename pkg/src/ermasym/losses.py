"""Scalar calculus for convex per-label losses.

Provides values, first/second derivatives, proximal operators, Moreau
envelopes and the residual map ``xi(u, kappa) = u - prox(u, kappa)`` that
drives the fixed-point expectations. All operations broadcast over numpy
arrays in ``y`` and ``u``; ``kappa`` is a positive scalar.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

PROX_TOL = 1e-12


class LossKind(Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"


class LabelSpace(Enum):
    REAL = "real"
    BINARY_PM1 = "binary_pm1"


class InvalidLabelError(ValueError):
    pass


@dataclass(frozen=True)
class LossFamily:
    kind: LossKind

    @property
    def label_space(self) -> LabelSpace:
        if self.kind is LossKind.LOGISTIC:
            return LabelSpace.BINARY_PM1
        return LabelSpace.REAL

    @property
    def curvature_bound(self) -> float:
        """Uniform bound on the second derivative of the per-label loss."""
        return 1.0 if self.kind is LossKind.SQUARED else 0.25


SQUARED = LossFamily(LossKind.SQUARED)
LOGISTIC = LossFamily(LossKind.LOGISTIC)


def _check_labels(loss: LossFamily, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if loss.label_space is LabelSpace.BINARY_PM1:
        if not np.all(np.abs(y) == 1.0):
            raise InvalidLabelError(
                "logistic loss requires labels in {-1, +1}, got values outside"
            )
    if not np.all(np.isfinite(y)):
        raise InvalidLabelError("labels must be finite")
    return y


def loss_value(loss: LossFamily, y, v):
    """Per-label loss L_y(v)."""
    y = _check_labels(loss, y)
    v = np.asarray(v, dtype=float)
    if loss.kind is LossKind.SQUARED:
        out = 0.5 * (v - y) ** 2
    else:
        # log(1 + exp(-y v)), computed stably via logaddexp
        out = np.logaddexp(0.0, -y * v)
    return out if out.ndim else float(out)

def loss_dv(loss: LossFamily, y, v):
    """First derivative of L_y with respect to the score v."""
    y = _check_labels(loss, y)
    v = np.asarray(v, dtype=float)
    if loss.kind is LossKind.SQUARED:
        out = v - y
    else:
        out = -y * expit(-y * v)
    return out if out.ndim else float(out)


def loss_dv2(loss: LossFamily, y, v):
    """Second derivative of L_y with respect to the score v."""
    y = _check_labels(loss, y)
    v = np.asarray(v, dtype=float)
    if loss.kind is LossKind.SQUARED:
        out = np.ones_like(v)
    else:
        s = expit(y * v)
        out = s * (1.0 - s)
    return out if out.ndim else float(out)


def _prox_logistic(y, u, kappa, tol=PROX_TOL, max_iter=200):
    # Root of f(w) = w - u + kappa L'_y(w), strictly increasing with f' >= 1.
    # Newton step, falling back on bisection of the bracket [u-kappa, u+kappa]
    # whenever the Newton candidate escapes it (|L'| <= 1 gives the bracket).
    y, u, kappa = np.broadcast_arrays(
        np.asarray(y, float), np.asarray(u, float), np.asarray(kappa, float)
    )
    shape = u.shape
    y = y.reshape(-1).copy()
    u = u.reshape(-1).copy()
    kappa = kappa.reshape(-1).copy()
    lo = u - kappa
    hi = u + kappa
    out = np.clip(u - kappa * (-y * expit(-y * u)), lo, hi)
    # iterate only on the active (unconverged) entries
    idx = np.arange(u.size)
    w = out
    dx_old = hi - lo
    for _ in range(max_iter):
        f = w - u + kappa * (-y * expit(-y * w))
        active = np.abs(f) > tol
        if not active.any():
            break
        if not active.all():
            idx = idx[active]
            y, u, kappa = y[active], u[active], kappa[active]
            lo, hi = lo[active], hi[active]
            w, f, dx_old = w[active], f[active], dx_old[active]
        lo = np.where(f < 0, w, lo)
        hi = np.where(f > 0, w, hi)
        s = expit(y * w)
        fp = 1.0 + kappa * s * (1.0 - s)
        cand = w - f / fp
        # bisect when Newton leaves the bracket or fails to halve the last step
        bisect = (cand <= lo) | (cand >= hi) | (np.abs(2.0 * f) > np.abs(dx_old * fp))
        w_new = np.where(bisect, 0.5 * (lo + hi), cand)
        dx_old = np.abs(w_new - w)
        w = w_new
        out[idx] = w
    return out.reshape(shape)


def prox(loss: LossFamily, y, u, kappa: float):
    """Proximal point argmin_w { kappa L_y(w) + (u - w)^2 / 2 }."""
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa <= 0):
        raise ValueError("kappa must be positive")
    y = _check_labels(loss, y)
    u = np.asarray(u, dtype=float)
    if loss.kind is LossKind.SQUARED:
        out = (u + kappa * y) / (1.0 + kappa)
    else:
        out = _prox_logistic(y, u, kappa)
    return out if np.ndim(out) else float(out)


def xi(loss: LossFamily, y, u, kappa: float):
    """Residual map u - prox_{kappa L_y}(u); equals kappa L'_y(prox)."""
    u = np.asarray(u, dtype=float)
    out = u - prox(loss, y, u, kappa)
    return out if out.ndim else float(out)


def moreau(loss: LossFamily, y, u, kappa: float):
    """Moreau envelope min_v { (u - v)^2 / (2 kappa) + L_y(v) }."""
    u = np.asarray(u, dtype=float)
    p = prox(loss, y, u, kappa)
    out = (u - p) ** 2 / (2.0 * kappa) + loss_value(loss, y, p)
    return out if np.ndim(out) else float(out)


def moreau_du(loss: LossFamily, y, u, kappa: float):
    """d/du of the Moreau envelope, which is xi(u, kappa) / kappa."""
    out = xi(loss, y, u, kappa) / kappa
    return out if np.ndim(out) else float(out)


def moreau_dkappa(loss: LossFamily, y, u, kappa: float):
    """d/dkappa of the Moreau envelope: -xi(u, kappa)^2 / (2 kappa^2)."""
    r = xi(loss, y, u, kappa)
    out = -np.asarray(r) ** 2 / (2.0 * kappa**2)
    return out if np.ndim(out) else float(out)
