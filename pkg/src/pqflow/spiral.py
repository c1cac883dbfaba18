"""Closed-form spiral potentials and their derivatives.

The basic profile on R x S^1 is

    G(s, t) = exp(1/s) (sin(1/s + t) - c)   for s < 0,   0 for s >= 0,

with c in (1, sqrt 2).  It is glued to the linear function s by a smooth
monotone cutoff eta that vanishes for s <= -delta and equals one for
s >= -delta/2:

    F(s, t) = (1 - eta(s)) s + eta(s) G(s, t).

Every function here accepts scalars or numpy arrays (broadcasting).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.optimize

SQRT2 = math.sqrt(2.0)
# below this |s| exp(1/s) underflows to zero in double precision
UNDERFLOW_S = 1.0 / 745.0


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class SpiralParams:
    delta: float = 1.0
    c: float = 1.25
    sharpness: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 1.0 < self.c < SQRT2:
            raise ValueError("c must lie in (1, sqrt 2)")
        if not self.sharpness > 0:
            raise ValueError("sharpness must be positive")

    @property
    def sandwich(self) -> tuple[float, float]:
        """Constants (c - 1/8, c + 1/8) bracketing the normalized z' equation."""
        return self.c - 0.125, self.c + 0.125


@dataclass(frozen=True)
class AnnulusParams:
    r_minus: float = 1.0
    r_plus: float = 2.0

    def __post_init__(self):
        if not self.r_plus > self.r_minus > 0:
            raise ValueError("need r_plus > r_minus > 0")

    @property
    def log_ratio(self) -> float:
        return math.log(self.r_plus / self.r_minus)


@dataclass(frozen=True)
class PlaneParams:
    r0: float = 1.0
    n: int = 1

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if self.n < 1:
            raise ValueError("n must be at least 1")


# ------------------------------------------------------------------ cutoff

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def _psi(u, sharp):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = (u > 0) & (u < 1)
    um = u[m]
    out[m] = np.exp(-sharp / (um * (1.0 - um)))
    return out


def _dpsi(u, sharp):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = (u > 0) & (u < 1)
    um = u[m]
    q = um * (1.0 - um)
    out[m] = np.exp(-sharp / q) * sharp * (1.0 - 2.0 * um) / q**2
    return out


def _psi_integral(x, sharp):
    """int_0^x psi for x in [0, 1/2] by 48-point Gauss-Legendre."""
    x = np.asarray(x, dtype=float)[..., None]
    u = 0.5 * x * (1.0 + _GL_X)
    return 0.5 * x[..., 0] * (_psi(u, sharp) @ _GL_W)


@lru_cache(maxsize=32)
def _bump_norm(sharp: float) -> float:
    return 2.0 * float(_psi_integral(0.5, sharp))


def bump(x, sharpness: float = 1.0):
    """Normalized bump integral B(x), clamped to [0, 1]."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    z = _bump_norm(sharpness)
    lo = x <= 0.5
    out = np.where(lo, _psi_integral(np.where(lo, x, 0.0), sharpness) / z, 0.0)
    hi_val = 1.0 - _psi_integral(np.where(lo, 0.0, 1.0 - x), sharpness) / z
    out = np.where(lo, out, hi_val)
    return out[()] if out.ndim == 0 else out


def eta(s, params: SpiralParams = SpiralParams()):
    d = params.delta
    return bump(2.0 * (np.asarray(s, dtype=float) + d) / d, params.sharpness)


def eta_derivs(s, params: SpiralParams = SpiralParams()):
    """(eta, eta', eta'') at s."""
    d = params.delta
    x = 2.0 * (np.asarray(s, dtype=float) + d) / d
    z = _bump_norm(params.sharpness)
    e0 = bump(x, params.sharpness)
    e1 = (2.0 / d) * _psi(x, params.sharpness) / z
    e2 = (2.0 / d) ** 2 * _dpsi(x, params.sharpness) / z
    return e0, e1[()] if np.ndim(e1) == 0 else e1, e2[()] if np.ndim(e2) == 0 else e2


# ----------------------------------------------------------------- profile G


def _safe(s):
    s = np.asarray(s, dtype=float)
    neg = s < 0
    # live branch only where exp(1/s) is representable
    live = neg & (s <= -UNDERFLOW_S)
    ss = np.where(live, s, -1.0)
    return s, live, ss


def _out(a):
    return a[()] if np.ndim(a) == 0 else a


def eval_G(s, t, c: float = 1.25):
    s, live, ss = _safe(s)
    e = np.exp(1.0 / ss)
    val = e * (np.sin(1.0 / ss + t) - c)
    return _out(np.where(live, val, 0.0) + 0.0 * np.asarray(t, dtype=float))


def grad_G(s, t, c: float = 1.25, strict: bool = True):
    """Closed-form (G_s, G_t).  Raises for s >= 0 unless ``strict=False``."""
    s_arr = np.asarray(s, dtype=float)
    if strict and np.any(s_arr >= 0):
        raise DomainError("grad_G needs s < 0")
    s, live, ss = _safe(s)
    e = np.exp(1.0 / ss)
    ph = 1.0 / ss + t
    gs = -(e / ss**2) * (np.sin(ph) + np.cos(ph) - c)
    gt = e * np.cos(ph)
    return _out(np.where(live, gs, 0.0)), _out(np.where(live, gt, 0.0))


def hessian_G(s, t, c: float = 1.25):
    """(G_ss, G_st, G_tt); zero where s >= 0 or exp(1/s) underflows."""
    s, live, ss = _safe(s)
    e = np.exp(1.0 / ss)
    ph = 1.0 / ss + t
    sn, cs = np.sin(ph), np.cos(ph)
    q = sn + cs - c
    gss = e / ss**4 * ((1.0 + 2.0 * ss) * q + cs - sn)
    gst = e / ss**2 * (sn - cs)
    gtt = -e * sn
    z = lambda a: _out(np.where(live, a, 0.0))
    return z(gss), z(gst), z(gtt)


# ---------------------------------------------------------------- F_delta


def eval_F(s, t, params: SpiralParams = SpiralParams()):
    s = np.asarray(s, dtype=float)
    e = eta(s, params)
    val = (1.0 - e) * s + e * eval_G(s, t, params.c)
    return _out(np.where(s >= 0, 0.0, val))


def dF(s, t, params: SpiralParams = SpiralParams()):
    """Closed-form (F_s, F_t)."""
    s = np.asarray(s, dtype=float)
    e0, e1, e2 = eta_derivs(s, params)
    g = eval_G(s, t, params.c)
    gs, gt = grad_G(s, t, params.c, strict=False)
    fs = (1.0 - e0) + e1 * (g - s) + e0 * gs
    ft = e0 * gt
    return _out(np.where(s >= 0, 0.0, fs)), _out(np.where(s >= 0, 0.0, ft))


def hessian_F(s, t, params: SpiralParams = SpiralParams()):
    """Closed-form (F_ss, F_st, F_tt)."""
    s = np.asarray(s, dtype=float)
    e0, e1, e2 = eta_derivs(s, params)
    g = eval_G(s, t, params.c)
    gs, gt = grad_G(s, t, params.c, strict=False)
    gss, gst, gtt = hessian_G(s, t, params.c)
    fss = e2 * (g - s) + 2.0 * e1 * (gs - 1.0) + e0 * gss
    fst = e1 * gt + e0 * gst
    ftt = e0 * gtt
    z = lambda a: _out(np.where(s >= 0, 0.0, a))
    return z(fss), z(fst), z(ftt)


def critical_bound(s, t, params: SpiralParams = SpiralParams()):
    """dF(s^2 d_s + d_t), positive wherever s < 0."""
    s = np.asarray(s, dtype=float)
    fs, ft = dF(s, t, params)
    return _out(s**2 * fs + ft)


def critical_bound_scaled(s, t, params: SpiralParams = SpiralParams()):
    """exp(-1/s) dF(s^2 d_s + d_t): same sign as critical_bound, no underflow near 0.

    Expanding F = (1 - eta) s + eta G and using s^2 G_s + G_t = -G,

        dF(s^2 d_s + d_t) = s^2 (1 - eta) - s^3 eta' + G (s^2 eta' - eta),

    and G exp(-1/s) = sin(1/s + t) - c.  The first two terms vanish where
    eta = 1, so exp(-1/s) is only formed where it is moderate.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s >= 0):
        raise DomainError("critical_bound_scaled needs s < 0")
    e0, e1, _ = eta_derivs(s, params)
    lin = s**2 * (1.0 - e0) - s**3 * e1
    active = lin != 0.0
    lin = np.where(active, lin * np.exp(-1.0 / np.where(active, s, -1.0)), 0.0)
    return _out(lin + (np.sin(1.0 / s + t) - params.c) * (s**2 * e1 - e0))


# -------------------------------------------------------- annulus profile

ANNULUS_PARAMS = SpiralParams(delta=0.25)


def annulus_profile(rho, phi):
    """Two-ended profile: F_{1/4} near rho = 0, mirrored copy near rho = -1."""
    rho = np.asarray(rho, dtype=float)
    upper = eval_F(rho, phi, ANNULUS_PARAMS)
    lower = -eval_F(-rho - 1.0, phi, ANNULUS_PARAMS) - 1.0
    return _out(np.where(rho >= -0.5, upper, lower))


def annulus_profile_d(rho, phi):
    rho = np.asarray(rho, dtype=float)
    us, ut = dF(rho, phi, ANNULUS_PARAMS)
    ls, lt = dF(-rho - 1.0, phi, ANNULUS_PARAMS)
    up = rho >= -0.5
    return _out(np.where(up, us, ls)), _out(np.where(up, ut, -lt))


def annulus_map_p(rho, phi, params: AnnulusParams):
    r = params.r_plus * np.exp(params.log_ratio * np.asarray(rho, dtype=float))
    return _out(r * np.cos(phi)), _out(r * np.sin(phi))


def annulus_map_p_inv(x, y, params: AnnulusParams):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    if np.any(r == 0):
        raise DomainError("p^{-1} is undefined at the origin")
    rho = np.log(r / params.r_plus) / params.log_ratio
    phi = np.mod(np.arctan2(y, x), 2 * math.pi)
    return _out(rho), _out(phi)


def ambient_F(x, params: AnnulusParams) -> float:
    """Annulus profile in the last complex coordinate of R^{2n}."""
    x = np.asarray(x, dtype=float)
    xn, yn = x[-2], x[-1]
    r = math.hypot(xn, yn)
    if r < params.r_minus:  # profile is constant -1 inside the inner circle
        return -1.0
    rho, phi = annulus_map_p_inv(xn, yn, params)
    return float(annulus_profile(rho, phi))


def ambient_F_d(x, params: AnnulusParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.size)
    xn, yn = x[-2], x[-1]
    r2 = xn * xn + yn * yn
    if r2 < params.r_minus**2:
        return out
    rho, phi = annulus_map_p_inv(xn, yn, params)
    gr, gp = annulus_profile_d(rho, phi)
    lk = params.log_ratio
    out[-2] = gr * xn / (r2 * lk) - gp * yn / r2
    out[-1] = gr * yn / (r2 * lk) + gp * xn / r2
    return out


# ---------------------------------------------------------- plane profile

PLANE_PARAMS = SpiralParams(delta=1.0)


def plane_profile(theta, p, rho, params: PlaneParams):
    """2 (F_1(rho - log r0, theta) + log r0); independent of p."""
    l0 = math.log(params.r0)
    return _out(2.0 * (eval_F(np.asarray(rho) - l0, theta, PLANE_PARAMS) + l0))


def plane_profile_d(theta, rho, params: PlaneParams):
    """(G_theta, G_rho)."""
    fs, ft = dF(np.asarray(rho) - math.log(params.r0), theta, PLANE_PARAMS)
    return _out(2.0 * np.asarray(ft)), _out(2.0 * np.asarray(fs))


# ------------------------------------------------------- two-sided profile


def two_sided_profile(s, t, eps: float):
    prm = SpiralParams(delta=eps / 2.0)
    s = np.asarray(s, dtype=float)
    return _out(eval_F(s, t, prm) + eval_F(-s, np.asarray(t) + math.pi, prm))


# -------------------------------------------------------- (9/4) t e^t + 1 bound


def te_bound_minimum(lo: float = -10.0, hi: float = 0.0, tol: float = 1e-12):
    """Golden-section minimum of (9/4) t e^t + 1 on [lo, hi]."""
    fn = lambda t: 2.25 * t * math.exp(t) + 1.0
    tmin = scipy.optimize.golden(fn, brack=(lo, 0.5 * (lo + hi), hi), tol=tol)
    return float(tmin), fn(tmin)
