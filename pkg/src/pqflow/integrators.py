"""Adaptive one-step integrators for small autonomous ODE systems.

Two schemes share one driver:

``dopri5``
    Dormand-Prince 5(4) explicit pair, FSAL, propagates the 5th order
    solution (local extrapolation).
``rodas4``
    Hairer-Wanner RODAS 4(3) Rosenbrock method, L-stable and stiffly
    accurate.  Needed for the unit-speed spiral flows, whose transverse
    contraction rate grows like s**-4 per unit arc length.

Both use the same PI step controller
``h_new = h * safety * err**(-0.7/k) * err_prev**(0.4/k)``
with ``k`` the order of the propagated solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class IntegrationError(RuntimeError):
    """Step size underflow or a non-finite right-hand side."""

    def __init__(self, message, t=None, y=None):
        super().__init__(message)
        self.t = t
        self.y = None if y is None else np.array(y, dtype=float)


class StiffnessError(IntegrationError):
    pass


class EvaluationError(IntegrationError):
    pass


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_BHAT = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_E = _DP_B - _DP_BHAT

# RODAS4 (Hairer & Wanner), "K" formulation:
#   (I/(h*gamma) - J) K_i = f(y + sum_j a_ij K_j) + sum_j (c_ij / h) K_j
RODAS_GAMMA = 0.25
RODAS_A = [
    [],
    [1.544],
    [0.9466785280815826, 0.2557011698983284],
    [3.314825187068521, 2.896124015972201, 0.9986419139977817],
    [1.221224509226641, 6.019134481288629, 12.53708332932087, -0.6878860361058950],
    [1.221224509226641, 6.019134481288629, 12.53708332932087, -0.6878860361058950, 1.0],
]
RODAS_C = [
    [],
    [-5.6688],
    [-2.430093356833875, -0.2063599157091915],
    [-0.1073529058151375, -9.594562251023355, -20.47028614809616],
    [7.496443313967647, -10.24680431464352, -33.99990352819905, 11.70890893206160],
    [8.083246795921522, -7.981132988064893, -31.52159432874371, 16.31930543123136,
     -6.058818238834054],
]
RODAS_M = np.array([1.221224509226641, 6.019134481288629, 12.53708332932087,
                    -0.6878860361058950, 1.0, 1.0])
RODAS_E = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 6.0
PI_ALPHA = 0.7
PI_BETA = 0.4

METHOD_ORDER = {"dopri5": 5, "rodas4": 4}


@dataclass
class Solution:
    """Accepted nodes of an integration run."""

    t: np.ndarray
    y: np.ndarray
    f: np.ndarray
    status: str
    nfev: int = 0
    njev: int = 0
    nrejected: int = 0
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def success(self):
        return self.status in ("done", "stopped")


def error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return math.sqrt(float(np.mean((err / scale) ** 2)))


def dopri5_step(rhs, y, f0, h):
    """One Dormand-Prince step.  Returns (y_new, f_new, err_vector)."""
    k = [f0]
    for i in range(1, 7):
        a = _DP_A[i]
        yi = y + h * sum(aij * kj for aij, kj in zip(a, k))
        k.append(np.asarray(rhs(yi), dtype=float))
    y_new = y + h * sum(b * kj for b, kj in zip(_DP_B, k) if b != 0.0)
    # stage 7 is evaluated at y_new (FSAL)
    err = h * sum(e * kj for e, kj in zip(_DP_E, k) if e != 0.0)
    return y_new, k[6], err


def fd_jacobian(rhs, y, f0=None, eps=None):
    """Central-difference Jacobian; used when no analytic one is supplied."""
    n = y.size
    jac = np.empty((n, n))
    for j in range(n):
        hj = (eps or 6e-6) * max(1.0, abs(y[j]))
        yp = y.copy()
        ym = y.copy()
        yp[j] += hj
        ym[j] -= hj
        jac[:, j] = (np.asarray(rhs(yp)) - np.asarray(rhs(ym))) / (2 * hj)
    return jac


def rodas4_step(rhs, y, f0, h, jac):
    """One RODAS4 step with Jacobian ``jac`` at ``y``.  Returns (y_new, f_new, err)."""
    n = y.size
    w = np.eye(n) / (h * RODAS_GAMMA) - jac
    lu = _lu_factor(w)
    ks = []
    for i in range(6):
        if i == 0:
            fi = f0
        else:
            yi = y + sum(aij * kj for aij, kj in zip(RODAS_A[i], ks))
            fi = np.asarray(rhs(yi), dtype=float)
        rhs_i = fi + sum((cij / h) * kj for cij, kj in zip(RODAS_C[i], ks))
        ks.append(_lu_solve(lu, rhs_i))
    y_new = y + sum(m * k for m, k in zip(RODAS_M, ks))
    err = ks[5]
    f_new = np.asarray(rhs(y_new), dtype=float)
    return y_new, f_new, err


def _lu_factor(a):
    import scipy.linalg

    return scipy.linalg.lu_factor(a, check_finite=False)


def _lu_solve(lu, b):
    import scipy.linalg

    return scipy.linalg.lu_solve(lu, b, check_finite=False)


def initial_step(rhs, y, f0, order, rtol, atol, direction=1.0):
    """Hairer-Norsett-Wanner starting step heuristic."""
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y + direction * h0 * f0
    f1 = np.asarray(rhs(y1), dtype=float)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / order)
    return min(100 * h0, h1)


def integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0,
    t_span,
    *,
    method: str = "dopri5",
    rtol: float = 1e-8,
    atol: float = 1e-10,
    jac: Callable[[np.ndarray], np.ndarray] | None = None,
    h0: float | None = None,
    hmax=np.inf,
    max_steps: int = 200_000,
    stop: Callable[[float, np.ndarray], bool] | None = None,
) -> Solution:
    """Integrate the autonomous system ``y' = rhs(y)`` over ``t_span``.

    ``t_span`` may run backwards.  ``hmax`` is a float or a callable of t.
    ``stop(t, y)`` returning True ends the run after the accepted step
    (status ``"stopped"``).  Hitting ``max_steps`` returns status
    ``"max_steps"`` rather than raising.
    """
    if method not in METHOD_ORDER:
        raise ValueError(f"unknown method {method!r}")
    t0, t1 = float(t_span[0]), float(t_span[1])
    direction = 1.0 if t1 >= t0 else -1.0
    y = np.array(y0, dtype=float)
    f = np.asarray(rhs(y), dtype=float)
    nfev, njev = 1, 0
    if not np.all(np.isfinite(f)):
        raise EvaluationError("non-finite right-hand side at initial state", t0, y)
    order = METHOD_ORDER[method]
    k_exp = order  # error estimate is O(h**order)
    if h0 is None:
        h = initial_step(rhs, y, f, order, rtol, atol, direction)
        nfev += 1
    else:
        h = abs(h0)
    hmax_fn = hmax if callable(hmax) else (lambda _t, _h=hmax: _h)

    ts, ys, fs = [t0], [y.copy()], [f.copy()]
    t = t0
    err_prev = 1.0
    nrej = 0
    status = "done"
    steps = 0
    while direction * (t1 - t) > 1e-13 * max(1.0, abs(t1)):
        if steps >= max_steps:
            status = "max_steps"
            break
        h = min(h, hmax_fn(t))
        if h >= abs(t1 - t) * (1 - 1e-9):
            h = abs(t1 - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise StiffnessError(f"step size underflow at t={t:.6g}", t, y)
        hs = direction * h
        if method == "dopri5":
            y_new, f_new, err = dopri5_step(rhs, y, f, hs)
            nfev += 6
        else:
            jm = jac(y) if jac is not None else fd_jacobian(rhs, y)
            if jac is None:
                nfev += 2 * y.size
            njev += 1
            y_new, f_new, err = rodas4_step(rhs, y, f, hs, jm)
            nfev += 6
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            h *= 0.25
            nrej += 1
            continue
        en = error_norm(err, y, y_new, rtol, atol)
        if en <= 1.0:
            fac = SAFETY * max(en, 1e-10) ** (-PI_ALPHA / k_exp) * err_prev ** (PI_BETA / k_exp)
            fac = min(FAC_MAX, max(FAC_MIN, fac))
            err_prev = max(en, 1e-4)
            t = t1 if h == abs(t1 - t) else t + hs
            y, f = y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            fs.append(f.copy())
            steps += 1
            h = h * fac
            if stop is not None and stop(t, y):
                status = "stopped"
                break
        else:
            nrej += 1
            fac = max(FAC_MIN, SAFETY * en ** (-1.0 / k_exp))
            h = h * fac
    return Solution(
        t=np.array(ts),
        y=np.array(ys),
        f=np.array(fs),
        status=status,
        nfev=nfev,
        njev=njev,
        nrejected=nrej,
    )
