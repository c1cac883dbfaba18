"""Cylinders and planes near the standard transverse knot.

Ambient model: S^1 x R^{2n} with coordinates (theta, x1, y1, ..., xn, yn)
and lambda_0 = d theta + alpha_n.  The plane construction works on
S^1 x W, W = S^1 x R^{2(n-1)} x R with coordinates (phi; theta, p, rho),
and is pushed to the ambient model by
Phi(phi, theta, p, rho) = (theta, p, e^rho cos phi, e^rho sin phi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from . import kernels, spiral
from .diffgeo import (
    TWO_PI, AlmostComplexStructure, ContactData, ContractViolation, OneForm, ScalarField,
    alpha_covector, alpha_form, as_array, compatibility_metric, contact_volume, lifted_structure,
    standard_contact_form, standard_j, standard_omega,
)
from .flow import FlowTrajectory, LimitSetReport, detect_omega_limit, mark_swept_bins
from .integrators import integrate
from .lift import LiftedCylinder, MapEvaluator, PrequantSpace, build_cylinder

__all__ = [
    "KnotModel", "WSpace", "PhiMap", "LiftedPlane", "AnnulusCylinder", "ConstructionError",
    "RemovabilityReport", "random_compatible_j0", "build_annulus_cylinder", "build_W_structures",
    "phi_pullback_check", "extended_J", "grad_plane_profile", "plane_space", "build_plane",
    "removable_singularity_check", "plane_contact", "holomorphy_residual_plane",
]


class ConstructionError(RuntimeError):
    """A structural identity failed during construction."""


def random_compatible_j0(m: int, rng: np.random.Generator, scale: float = 0.3) -> np.ndarray:
    """Constant j0 = A j_std A^{-1} with A = exp(J_std S) symplectic for d alpha."""
    if m == 0:
        return np.zeros((0, 0))
    S = rng.normal(scale=scale, size=(2 * m, 2 * m))
    S = 0.5 * (S + S.T)
    A = scipy.linalg.expm(standard_omega(m) @ S)
    return A @ standard_j(m) @ np.linalg.inv(A)


def _block(j0: np.ndarray, last: np.ndarray) -> np.ndarray:
    m = j0.shape[0]
    out = np.zeros((m + 2, m + 2))
    out[:m, :m] = j0
    out[m:, m:] = last
    return out


# ------------------------------------------------------------ knot model


@dataclass(frozen=True)
class KnotModel:
    n: int
    j0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 1:
            raise ContractViolation("n must be at least 1")
        j0 = standard_j(self.n - 1) if self.j0 is None else np.asarray(self.j0, dtype=float)
        object.__setattr__(self, "j0", j0)

    @property
    def lambda0(self) -> OneForm:
        return standard_contact_form(self.n)

    @property
    def j_base(self) -> np.ndarray:
        return _block(self.j0, standard_j(1))

    @property
    def J0(self) -> AlmostComplexStructure:
        jb = self.j_base
        return lifted_structure(alpha_form(self.n), AlmostComplexStructure(lambda w: jb))

    def volume_check(self, points) -> float:
        """Largest deviation of lambda0 ^ (d lambda0)^n from 2^n n!."""
        target = 2.0**self.n * math.factorial(self.n)
        return max(abs(contact_volume(self.lambda0, p, self.n) - target) for p in points)


def extended_J(model: KnotModel, p) -> np.ndarray:
    """Complex structure on xi_0 at p in S^1 x R^{2n}, smooth across x_n = y_n = 0.

    On the frame e_v = -alpha_n(v) d_theta + v it sends e_v to e_{j v}
    with j = j0 on the first 2(n-1) directions and d_x -> d_y on the last
    pair.  The d_theta column is zero; callers apply it to xi_0 only.
    """
    return model.J0(as_array(p))


def _xi0_frame(x: np.ndarray) -> np.ndarray:
    """Columns -alpha_n(e_k) d_theta + e_k, k over R^{2n}."""
    m = x.size - 1
    fr = np.zeros((m + 1, m))
    fr[0] = -alpha_covector(x[1:])
    fr[1:] = np.eye(m)
    return fr


# ----------------------------------------------------------------- annulus


def annulus_space(model: KnotModel, params: spiral.AnnulusParams) -> PrequantSpace:
    m = 2 * model.n
    jb = model.j_base

    def grad(w):
        out = np.zeros(m)
        out[-2:] = 0.5 * spiral.ambient_F_d(w, params)[-2:]
        return out

    f = ScalarField(lambda w: spiral.ambient_F(w, params), lambda w: spiral.ambient_F_d(w, params))
    return PrequantSpace(alpha_form(model.n), AlmostComplexStructure(lambda w: jb), f, m,
                         gradient=grad, f_limit=0.0, name="annulus")


@dataclass
class AnnulusCylinder:
    cylinder: Optional[LiftedCylinder]
    forward: Optional[LimitSetReport]
    backward: Optional[LimitSetReport]
    space: PrequantSpace
    rho0: float
    phi0: float
    stationary: bool = False
    flows: dict = field(default_factory=dict)


def _annulus_metric(params: spiral.AnnulusParams, side: str):
    lk = params.log_ratio
    if side == "upper":
        r = params.r_plus
        return [2 * r * r * lk * lk, 2 * lk, 2 * r * r, 2 * lk]
    r = params.r_minus
    return [2 * r * r * lk * lk, -2 * lk, 2 * r * r, -2 * lk]


def _annulus_limit(params, rho0, phi0, side, band, bins, rtol, atol, s_stop):
    """Unit-speed orbit toward one boundary torus, in the chart of that end."""
    mp = np.array(_annulus_metric(params, side))
    sp = spiral.ANNULUS_PARAMS
    s0 = rho0 if side == "upper" else -rho0 - 1.0
    if s0 < -0.75:  # the start sits in the other piece of the profile; cross the middle first
        def rhs(y):
            if side == "upper":
                d = np.array(spiral.annulus_profile_d(y[0], y[1]))
            else:
                pr, pp = spiral.annulus_profile_d(-y[0] - 1.0, y[1])
                d = np.array([pr, -pp])
            g = np.array([mp[0] * math.exp(mp[1] * y[0]), mp[2] * math.exp(mp[3] * y[0])])
            v = d / g
            return v / math.sqrt(float(d @ v))

        sol = integrate(rhs, [s0, phi0], (0.0, 50.0), method="rodas4", rtol=rtol, atol=atol,
                        stop=lambda _t, y: y[0] >= -0.7)
        s0, phi0 = sol.y[-1]
    sig, s, t, F, code, _ = kernels.unit_speed_flow(
        0, mp, sp.delta, sp.c, sp.sharpness, float(s0), float(phi0), s_stop, rtol, atol, 1e4, 1_000_000)
    traj = FlowTrajectory(sig, s, t, F, sig.copy(), "unit-speed", kernels.STATUS_NAMES[code],
                          {"side": side})
    return traj, detect_omega_limit(traj, band, bins)


def build_annulus_cylinder(
    model: KnotModel,
    params: spiral.AnnulusParams,
    start,
    s_range=(-1000.0, 1000.0),
    band: float = 0.05,
    bins: int = 36,
    rtol: float = 1e-11,
    atol: float = 1e-12,
    flow_rtol: float = 1e-8,
    s_stop: float = 1e-2,
) -> AnnulusCylinder:
    """Cylinder over the gradient flow of the annulus profile, with both limit tori.

    ``start`` is a point of R^{2n}; the limit-set reports come from
    unit-speed orbits in the charts of the outer (forward) and inner
    (backward) boundary circles.
    """
    w0 = as_array(start)
    if w0.size != 2 * model.n:
        raise ContractViolation(f"start must lie in R^{2 * model.n}")
    space = annulus_space(model, params)
    r = math.hypot(w0[-2], w0[-1])
    if r <= params.r_minus or r >= params.r_plus:
        cyl = build_cylinder(space, w0, (0.0, 1.0))
        return AnnulusCylinder(cyl, None, None, space, math.nan, math.nan, stationary=True)
    rho0, phi0 = (float(v) for v in spiral.annulus_map_p_inv(w0[-2], w0[-1], params))
    cyl = build_cylinder(space, w0, s_range, rtol=rtol, atol=atol,
                         hmax=lambda s: 0.02 if abs(s) < 2 else np.inf)
    fwd_traj, fwd = _annulus_limit(params, rho0, phi0, "upper", band, bins, flow_rtol, flow_rtol * 1e-2, s_stop)
    bwd_traj, bwd = _annulus_limit(params, rho0, phi0, "lower", band, bins, flow_rtol, flow_rtol * 1e-2, s_stop)
    return AnnulusCylinder(cyl, fwd, bwd, space, rho0, phi0, flows={"forward": fwd_traj, "backward": bwd_traj})


# ----------------------------------------------------------------- W space


@dataclass(frozen=True)
class WSpace:
    """W = S^1 x R^{2(n-1)} x R, coordinates (theta, p, rho), beta = e^{-2 rho}(d theta + alpha_{n-1})."""

    n: int
    j0: np.ndarray
    r0: float = 1.0

    @property
    def dim(self) -> int:
        return 2 * self.n

    def split(self, w):
        w = as_array(w)
        return w[0], w[1:-1], w[-1]

    def _c(self, w):
        _, p, _ = self.split(w)
        return np.concatenate(([1.0], alpha_covector(p), [0.0]))

    def beta_cov(self, w):
        return math.exp(-2.0 * self.split(w)[2]) * self._c(w)

    def dbeta(self, w):
        _, _, rho = self.split(w)
        m = self.dim
        c = self._c(w)
        drho = np.zeros(m)
        drho[-1] = 1.0
        out = -2.0 * (np.outer(drho, c) - np.outer(c, drho))
        out[1:-1, 1:-1] += standard_omega(self.n - 1, 2.0)
        return math.exp(-2.0 * rho) * out

    @property
    def beta(self) -> OneForm:
        return OneForm(self.beta_cov, self.dbeta)

    def j1(self, w) -> np.ndarray:
        _, p, rho = self.split(w)
        m = self.dim
        a = alpha_covector(p)
        out = np.zeros((m, m))
        out[-1, 0] = math.exp(-2.0 * rho)
        out[0, -1] = -math.exp(2.0 * rho)
        out[1:-1, 1:-1] = self.j0
        out[0, 1:-1] = -(a @ self.j0)
        out[-1, 1:-1] = a * math.exp(-2.0 * rho)
        return out

    @property
    def j1_structure(self) -> AlmostComplexStructure:
        return AlmostComplexStructure(self.j1)

    def g0(self) -> np.ndarray:
        return standard_omega(self.n - 1, 2.0) @ self.j0

    def g_closed(self, w) -> np.ndarray:
        """2 d rho^2 + 2 e^{-4 rho} (d theta + alpha)^2 + e^{-2 rho} d alpha(., j0 .)."""
        _, _, rho = self.split(w)
        c = self._c(w)
        out = 2.0 * math.exp(-4.0 * rho) * np.outer(c, c)
        out[-1, -1] += 2.0
        out[1:-1, 1:-1] += math.exp(-2.0 * rho) * self.g0()
        return out

    def volume_closed(self, w) -> float:
        """det d beta = (2^n e^{-2 n rho})^2.

        d beta^n = -2n e^{-2n rho} d rho ^ d theta ^ (d alpha)^{n-1}, whose
        Pfaffian in the coordinate order (theta, p, rho) is 2^n e^{-2n rho}.
        """
        rho = self.split(w)[2]
        return (2.0**self.n * math.exp(-2.0 * self.n * rho)) ** 2

    def identity_residuals(self, w) -> dict:
        j = self.j1(w)
        om = self.dbeta(w)
        rep = compatibility_metric(om, j)
        g = self.g_closed(w)
        det = np.linalg.det(om)
        return {
            "j1_squared": float(np.max(np.abs(j @ j + np.eye(self.dim)))),
            "metric_closed_form": float(np.max(np.abs(rep.g - g)) / max(1.0, np.max(np.abs(g)))),
            "asymmetry": rep.asymmetry,
            "min_eigenvalue": rep.min_eigenvalue,
            "volume": abs(det - self.volume_closed(w)) / self.volume_closed(w),
        }


def _sample_w(n: int, rng: np.random.Generator, count: int):
    pts = []
    for _ in range(count):
        theta = rng.uniform(0, TWO_PI)
        p = rng.uniform(-1.5, 1.5, 2 * (n - 1))
        rho = rng.uniform(-2.0, 1.0)
        pts.append(np.concatenate(([theta], p, [rho])))
    return pts


def build_W_structures(n: int, j0: Optional[np.ndarray] = None, r0: float = 1.0,
                       seed: int = 0, n_points: int = 100, tol: float = 1e-9) -> WSpace:
    j0 = standard_j(n - 1) if j0 is None else np.asarray(j0, dtype=float)
    if j0.size:
        rep = compatibility_metric(standard_omega(n - 1, 2.0), j0)
        if not rep.compatible or np.max(np.abs(j0 @ j0 + np.eye(j0.shape[0]))) > 1e-12:
            raise ContractViolation("j0 is not compatible with d alpha")
    w = WSpace(n, j0, r0)
    rng = np.random.default_rng(seed)
    for pt in _sample_w(n, rng, n_points):
        res = w.identity_residuals(pt)
        if res["j1_squared"] > 1e-12 * max(1.0, math.exp(4 * abs(pt[-1]))):
            raise ConstructionError(f"j1^2 != -I at {pt}: {res['j1_squared']:.3g}")
        if res["metric_closed_form"] > tol:
            raise ConstructionError(f"d beta(., j1 .) differs from closed form at {pt}")
        if res["asymmetry"] > 1e-10 * max(1.0, math.exp(4 * abs(pt[-1]))) or res["min_eigenvalue"] <= 0:
            raise ConstructionError(f"j1 not compatible with d beta at {pt}")
        if res["volume"] > 1e-9:
            raise ConstructionError(f"d beta^n differs from closed form at {pt}")
    return w


# --------------------------------------------------------------------- Phi


@dataclass(frozen=True)
class PhiMap:
    """(phi, theta, p, rho) -> (theta, p, e^rho cos phi, e^rho sin phi)."""

    n: int

    def forward(self, q) -> np.ndarray:
        q = as_array(q)
        phi, rho = q[0], q[-1]
        r = math.exp(rho)
        return np.concatenate((q[1:-1], [r * math.cos(phi), r * math.sin(phi)]))

    def inverse(self, x) -> np.ndarray:
        x = as_array(x)
        X, Y = x[-2], x[-1]
        r = math.hypot(X, Y)
        if r == 0.0:
            raise ContractViolation("Phi^{-1} undefined on x_n = y_n = 0")
        return np.concatenate(([math.atan2(Y, X)], x[:-2], [math.log(r)]))

    def jacobian(self, q) -> np.ndarray:
        q = as_array(q)
        phi, rho = q[0], q[-1]
        r = math.exp(rho)
        m = q.size
        D = np.zeros((m, m))
        D[: m - 2, 1 : m - 1] = np.eye(m - 2)
        D[m - 2, 0] = -r * math.sin(phi)
        D[m - 2, m - 1] = r * math.cos(phi)
        D[m - 1, 0] = r * math.cos(phi)
        D[m - 1, m - 1] = r * math.sin(phi)
        return D


def phi_pullback_check(w: WSpace, q) -> dict:
    """Residuals of Phi^* lambda_0 = e^{2 rho} lambda and the two polar identities."""
    q = as_array(q)
    phi = PhiMap(w.n)
    x = phi.forward(q)
    D = phi.jacobian(q)
    rho = q[-1]
    lam0 = standard_contact_form(w.n)(x)
    lhs = D.T @ lam0
    rhs = math.exp(2 * rho) * np.concatenate(([1.0], w.beta_cov(q[1:])))
    X, Y = x[-2], x[-1]
    m = x.size
    ang = np.zeros(m)
    ang[-2], ang[-1] = -Y, X
    rad = np.zeros(m)
    rad[-2], rad[-1] = X, Y
    e_phi = np.zeros(m)
    e_phi[0] = math.exp(2 * rho)
    e_rho = np.zeros(m)
    e_rho[-1] = math.exp(2 * rho)
    return {
        "lambda": float(np.max(np.abs(lhs - rhs))),
        "angular": float(np.max(np.abs(D.T @ ang - e_phi))),
        "radial": float(np.max(np.abs(D.T @ rad - e_rho))),
        "round_trip": float(np.max(np.abs(phi.forward(phi.inverse(x)) - x))),
    }


def conjugated_J(model: KnotModel, w: WSpace, x) -> np.ndarray:
    """d Phi o j1-tilde o d Phi^{-1} on the xi_0 frame at x (off the locus)."""
    x = as_array(x)
    phi = PhiMap(model.n)
    q = phi.inverse(x)
    D = phi.jacobian(q)
    jt = lifted_structure(w.beta, w.j1_structure)(q)
    fr = _xi0_frame(x)
    return D @ jt @ np.linalg.solve(D, fr)


def extended_J_check(model: KnotModel, w: WSpace, x) -> dict:
    x = as_array(x)
    J = extended_J(model, x)
    fr = _xi0_frame(x)
    out = {"squared": float(np.max(np.abs(J @ J @ fr + fr))),
           "finite": bool(np.all(np.isfinite(J)))}
    lam0 = model.lambda0
    dl = lam0.d(x)
    gram = fr.T @ dl @ J @ fr
    out["tame_min_eig"] = float(np.linalg.eigvalsh(0.5 * (gram + gram.T)).min())
    out["symmetric"] = float(np.max(np.abs(gram - gram.T)))
    if math.hypot(x[-2], x[-1]) > 0:
        out["conjugation"] = float(np.max(np.abs(J @ fr - conjugated_J(model, w, x))))
    return out


# ------------------------------------------------------------------- plane


def grad_plane_profile(w: WSpace, theta, p, rho, r0: Optional[float] = None) -> np.ndarray:
    """g_{j1}-gradient of G(theta, p, rho) = 2(F_1(rho - log r0, theta) + log r0).

    Closed form: 1/2 (G_rho d_rho + e^{2 rho} G_theta (e^{2 rho} + |p|^2/2) d_theta
    - e^{2 rho} G_theta j0 p), with |p| the g_{j0} norm.
    """
    r0 = w.r0 if r0 is None else r0
    p = np.asarray(p, dtype=float)
    g_t, g_r = spiral.plane_profile_d(theta, rho, spiral.PlaneParams(r0=r0, n=w.n))
    e2 = math.exp(2.0 * rho)
    p2 = float(p @ w.g0() @ p) if p.size else 0.0
    out = np.zeros(w.dim)
    out[-1] = 0.5 * g_r
    out[0] = 0.5 * e2 * g_t * (e2 + 0.5 * p2)
    if p.size:
        out[1:-1] = -0.5 * e2 * g_t * (w.j0 @ p)
    return out


def plane_space(w: WSpace) -> PrequantSpace:
    prm = spiral.PlaneParams(r0=w.r0, n=w.n)

    def G(x):
        return float(spiral.plane_profile(x[0], x[1:-1], x[-1], prm))

    def dG(x):
        g_t, g_r = spiral.plane_profile_d(x[0], x[-1], prm)
        out = np.zeros(x.size)
        out[0], out[-1] = g_t, g_r
        return out

    return PrequantSpace(w.beta, w.j1_structure, ScalarField(G, dG), w.dim,
                         gradient=lambda x: grad_plane_profile(w, x[0], x[1:-1], x[-1]),
                         f_limit=2.0 * math.log(w.r0), name="plane")


def ambient_plane_F(x, w: WSpace) -> float:
    """(G - 2 rho) o Phi^{-1}; zero where |z_n| < r0 / e."""
    x = as_array(x)
    r = math.hypot(x[-2], x[-1])
    l0 = math.log(w.r0)
    if r == 0.0 or math.log(r) < l0 - 1.0:
        return 0.0
    rho = math.log(r)
    G = float(spiral.plane_profile(x[0], None, rho, spiral.PlaneParams(r0=w.r0, n=w.n)))
    return G - 2.0 * rho


def ambient_plane_F_d(x, w: WSpace) -> np.ndarray:
    x = as_array(x)
    out = np.zeros(x.size)
    X, Y = x[-2], x[-1]
    r2 = X * X + Y * Y
    l0 = math.log(w.r0)
    if r2 == 0.0 or 0.5 * math.log(r2) < l0 - 1.0:
        return out
    rho = 0.5 * math.log(r2)
    g_t, g_r = spiral.plane_profile_d(x[0], rho, spiral.PlaneParams(r0=w.r0, n=w.n))
    out[0] = g_t
    out[-2] = (g_r - 2.0) * X / r2
    out[-1] = (g_r - 2.0) * Y / r2
    return out


def plane_contact(model: KnotModel, w: WSpace, flip_last: bool = False) -> ContactData:
    """(e^{F~} lambda_0, extended J) on S^1 x R^{2n}."""
    F = ScalarField(lambda x: ambient_plane_F(x, w), lambda x: ambient_plane_F_d(x, w))
    lam = standard_contact_form(model.n).scaled(F)
    if flip_last:
        jb = _block(model.j0, -standard_j(1))
        J = lifted_structure(alpha_form(model.n), AlmostComplexStructure(lambda _w: jb))
    else:
        J = model.J0
    return ContactData.from_form(lam, J)


class PushedMap(MapEvaluator):
    """(a, Phi o u) for a cylinder u in R x S^1 x W."""

    def __init__(self, cyl: LiftedCylinder, phi: PhiMap):
        self.cyl = cyl
        self.phi = phi
        self.dim = cyl.dim

    def _push(self, row):
        return np.concatenate(([row[0]], self.phi.forward(row[1:])))

    def point(self, s, t):
        return self._push(self.cyl.point(s, t))

    def stencil(self, s, t, h):
        return np.array([self._push(r) for r in self.cyl.stencil(s, t, h)])

    def derivatives(self, s, t, h=None):
        p = self.cyl.point(s, t)
        us, ut = self.cyl.derivatives(s, t)
        D = self.phi.jacobian(p[1:])
        return (np.concatenate(([us[0]], D @ us[1:])), np.concatenate(([ut[0]], D @ ut[1:])))


@dataclass
class LiftedPlane:
    cylinder: LiftedCylinder
    space: PrequantSpace
    w: WSpace
    model: KnotModel
    pushed: PushedMap
    tail: dict
    limit_report: dict
    orbit: Optional[FlowTrajectory] = None

    @staticmethod
    def psi(z: complex):
        return math.log(abs(z)) / TWO_PI, (math.atan2(z.imag, z.real) / TWO_PI) % 1.0


def _fit_tail(cyl: LiftedCylinder, w: WSpace, margin: float = 0.1) -> dict:
    m = cyl.m
    s = cyl.s_nodes
    Y = cyl.y_nodes
    rho = Y[:, m - 1]
    cut = math.log(w.r0) - 1.0 - margin
    below = rho < cut
    if not below[0]:
        raise ConstructionError("cylinder does not reach the linear region of the profile")
    end = int(np.argmin(below)) if not below.all() else below.size
    s_t, Y_t = s[:end], Y[:end]
    if s_t.size < 4:
        raise ConstructionError("too few nodes in the linear tail")
    s1_all = Y_t[:, m - 1] - TWO_PI * s_t
    s1 = float(np.mean(s1_all))
    A = np.column_stack((np.exp(2 * TWO_PI * s_t), np.ones_like(s_t)))
    a = Y_t[:, m + 1]
    (C, a1), *_ = np.linalg.lstsq(A, a, rcond=None)
    resid = a - A @ np.array([C, a1])
    scale = np.max(np.abs(C * A[:, 0]))
    return {
        "s1": s1, "s1_spread": float(np.ptp(s1_all)),
        "theta1": float(np.mean(Y_t[:, 0])), "theta1_spread": float(np.ptp(Y_t[:, 0])),
        "t1": float(np.mean(Y_t[:, m])), "t1_spread": float(np.ptp(Y_t[:, m])),
        "p_max": float(np.max(np.abs(Y_t[:, 1 : m - 1]))) if m > 2 else 0.0,
        "a1": float(a1), "C": float(C), "C_expected": math.exp(2 * s1) / 2,
        "fit_rel_residual": float(np.max(np.abs(resid)) / scale),
        "window": (float(s_t[0]), float(s_t[-1])), "nodes": int(s_t.size),
    }


def two_angle_coverage(traj: FlowTrajectory, band: float, bins: int) -> dict:
    """(fiber angle, base angle) histogram on the limit torus.

    The fiber angle of u(s, t) is phi(s) + 2 pi t, so every fiber bin is
    met at every s; base bins come from the winding of the orbit.
    """
    inside = np.abs(traj.s) < band
    pairs = inside[:-1] & inside[1:]
    base = mark_swept_bins(traj.t_lift, bins, pairs)
    fiber = np.ones(bins, dtype=bool) if inside.any() else np.zeros(bins, dtype=bool)
    hist = np.outer(fiber, base)
    return {"coverage": float(hist.mean()), "fiber_coverage": float(fiber.mean()),
            "base_coverage": float(base.mean()), "bins": bins, "band": band}


def build_plane(
    model: KnotModel,
    params: spiral.PlaneParams,
    start=(0.0, None, -3.0),
    s_range=(-2.0, 1000.0),
    w: Optional[WSpace] = None,
    rtol: float = 1e-11,
    atol: float = 1e-13,
    band: float = 0.05,
    bins: int = 36,
    flow_rtol: float = 1e-8,
) -> LiftedPlane:
    """Plane through (theta0, p0, rho0) with rho0 < log r0, pushed to the ambient model."""
    if params.n != model.n:
        raise ContractViolation("plane parameters and knot model disagree on n")
    theta0, p0, rho0 = start
    p0 = np.zeros(2 * (model.n - 1)) if p0 is None else np.asarray(p0, dtype=float)
    l0 = math.log(params.r0)
    if rho0 >= l0:
        raise ContractViolation(f"start rho0={rho0} must be below log r0={l0}")
    w = build_W_structures(model.n, model.j0, params.r0) if w is None else w
    space = plane_space(w)
    w0 = np.concatenate(([theta0], p0, [rho0]))
    cyl = build_cylinder(space, w0, s_range, rtol=rtol, atol=atol,
                         hmax=lambda s: 0.01 if abs(s) < 3 else np.inf)
    tail = _fit_tail(cyl, w) if not np.any(p0) else {}
    sp = spiral.PLANE_PARAMS
    mp = np.array([1.0, 0.0, params.r0**-4, -4.0])
    sig, s, t, F, code, _ = kernels.unit_speed_flow(
        0, mp, sp.delta, sp.c, sp.sharpness, rho0 - l0, float(theta0), 1e-2, flow_rtol,
        flow_rtol * 1e-2, 1e4, 1_000_000)
    orbit = FlowTrajectory(sig, s, t, F, sig.copy(), "unit-speed", kernels.STATUS_NAMES[code], {})
    limit = two_angle_coverage(orbit, band, bins)
    return LiftedPlane(cyl, space, w, model, PushedMap(cyl, PhiMap(model.n)), tail, limit, orbit)


@dataclass
class RemovabilityReport:
    passed: bool
    radii: np.ndarray
    a_coefficient: float
    a_coefficient_expected: float
    a_fit_rel_residual: float
    linear_scalar: complex
    linear_residual: np.ndarray
    taylor_remainder: np.ndarray
    decay_factor: float
    constant_spread: float
    mass: np.ndarray
    details: dict = field(default_factory=dict)


def removable_singularity_check(plane: LiftedPlane, radii=None, n_t: int = 16,
                                fit_tol: float = 1e-6, decay_band=(80.0, 120.0),
                                mass_tol: float = 1e-5) -> RemovabilityReport:
    """Sample v o psi(z) on circles |z| = r and test smooth extension over z = 0.

    (i) a = k |z|^2 + a1 with one fitted k; (ii) last two coordinates
    equal c z for one complex c, so the first-order model (a1, theta1, 0, c z)
    leaves a remainder of order |z|^2; (iii) theta and p are constant;
    and the loop action of lambda_0 shrinks to 0.
    """
    if radii is None:
        radii = np.array([1e-2, 1e-3] + [2.0**-k for k in range(4, 13)])
    radii = np.asarray(radii, dtype=float)
    ev = plane.pushed
    ts = np.arange(n_t) / n_t
    rows = []
    for r in radii:
        s = math.log(r) / TWO_PI
        for t in ts:
            rows.append((r, t, ev.point(s, t)))
    R = np.array([row[0] for row in rows])
    T = np.array([row[1] for row in rows])
    V = np.array([row[2] for row in rows])
    z = R * np.exp(1j * TWO_PI * T)
    a = V[:, 0]
    A = np.column_stack((R**2, np.ones_like(R)))
    (k, a1), *_ = np.linalg.lstsq(A, a, rcond=None)
    a_rel = float(np.max(np.abs(a - A @ np.array([k, a1]))) / np.max(np.abs(k * R**2)))
    wz = V[:, -2] + 1j * V[:, -1]
    small = R == R.min()
    c = complex(np.mean(wz[small] / z[small]))
    middle = V[:, 1:-2]
    spread = float(np.max(np.ptp(middle, axis=0)))
    const = np.mean(middle, axis=0)
    lin_res = np.zeros(radii.size)
    remainder = np.zeros(radii.size)
    for i, r in enumerate(radii):
        m = R == r
        lin_res[i] = np.max(np.abs(wz[m] - c * z[m])) / r
        model = np.column_stack((np.full(m.sum(), a1), np.tile(const, (m.sum(), 1)),
                                 (c * z[m]).real, (c * z[m]).imag))
        remainder[i] = np.max(np.linalg.norm(V[m] - model, axis=1))
    i2 = int(np.argmin(np.abs(radii - 1e-2)))
    i3 = int(np.argmin(np.abs(radii - 1e-3)))
    decay = float(remainder[i2] / remainder[i3])
    lam = plane_contact(plane.model, plane.w).lam
    mass = np.array([_loop(ev, lam, math.log(r) / TWO_PI, n_t) for r in radii])
    tail = plane.tail or {}
    expected = tail.get("C_expected", math.nan)
    ok = (a_rel <= fit_tol and decay_band[0] <= decay <= decay_band[1]
          and spread <= 1e-10 and float(mass[i3]) <= mass_tol)
    return RemovabilityReport(ok, radii, float(k), expected, a_rel, c, lin_res, remainder, decay,
                              spread, mass, {"a1": float(a1), "pi_coefficient": math.pi})


def _loop(ev, lam, s, n_t):
    total = 0.0
    for t in np.arange(n_t) / n_t:
        p = ev.point(s, t)
        _, ut = ev.derivatives(s, t)
        total += float(lam(p[1:]) @ ut[1:])
    return total / n_t


def holomorphy_residual_plane(plane: LiftedPlane, grid, h: float = 1e-4, flip_last: bool = False):
    """Residual of the pushed map for (e^{F~} lambda_0, extended J)."""
    from .lift import holomorphy_residual

    contact = plane_contact(plane.model, plane.w, flip_last)
    s_vals = np.asarray(grid[0], dtype=float)
    for s in s_vals:
        x = plane.pushed.point(float(s), 0.0)
        if math.hypot(x[-2], x[-1]) < 10 * h:
            raise ContractViolation(f"grid point s={s} too close to the puncture for h={h}")
    return holomorphy_residual(plane.pushed, contact, grid, h)


def s_for_radius(plane: LiftedPlane, radius: float) -> float:
    """Cylinder parameter where the pushed orbit has |z_n| = radius."""
    rho = plane.cylinder.y_nodes[:, plane.cylinder.m - 1]
    return float(np.interp(math.log(radius), rho, plane.cylinder.s_nodes))
