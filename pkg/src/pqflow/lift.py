"""Lifting gradient flows on a symplectic base to pseudoholomorphic cylinders.

A PrequantSpace is S^1 x W with lambda = d theta + beta and ker lambda
carrying the S^1-invariant lift of a compatible j on W.  Given f on W,
the ODE system

    gamma' = 2 pi grad f,   theta' = -2 pi beta(grad f),   a' = 2 pi e^f

yields u(s, t) = (a(s), theta(s) + 2 pi t, gamma(s)) in R x S^1 x W,
pseudoholomorphic for (e^f lambda, lifted j).
"""
from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.integrate
import scipy.special

from .diffgeo import (
    TWO_PI, AlmostComplexStructure, ContactData, ContractViolation, EvaluationDomainError,
    MetricField, OneForm, ScalarField, as_array, compatibility_metric, exterior_derivative_fd,
    prequant_contact, prequant_form, standard_j, standard_omega,
)
from .integrators import EvaluationError, dopri5_step, integrate

__all__ = [
    "PrequantSpace", "LiftedCylinder", "MapEvaluator", "PerturbedMap", "EnergyReport",
    "MassReport", "ResidualReport", "ResolutionError", "lift_ode_rhs", "build_cylinder",
    "hofer_energy_formula", "hofer_energy_quadrature", "sigmoid_family", "puncture_mass",
    "holomorphy_residual", "residual_refinement", "write_residual_json", "plane_space_r2",
    "trivial_space", "arctan_space",
]


class ResolutionError(RuntimeError):
    """Quadrature did not converge under refinement."""


# ------------------------------------------------------------------ space


@dataclass(frozen=True)
class PrequantSpace:
    """S^1 x W with lambda = d theta + beta, f on W and j on W.

    ``gradient`` may supply a closed-form g_j gradient of f; otherwise it
    is solved from g_j = d beta(., j .).  ``f_limit`` is the known limit
    of f along the flows of interest, used when f has not converged at
    the end of a finite integration.
    """

    beta: OneForm
    j: AlmostComplexStructure
    f: ScalarField
    base_dim: int
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    f_limit: Optional[float] = None
    name: str = "prequant"

    def omega(self, w) -> np.ndarray:
        return self.beta.d(w)

    def metric(self, w) -> np.ndarray:
        return self.omega(w) @ self.j(w)

    @property
    def metric_field(self) -> MetricField:
        return MetricField(self.metric)

    def grad_f(self, w) -> np.ndarray:
        w = as_array(w)
        if self.gradient is not None:
            return np.asarray(self.gradient(w), dtype=float)
        return np.linalg.solve(self.metric(w), self.f.d(w))

    @property
    def lam(self) -> OneForm:
        return prequant_form(self.beta)

    @property
    def lam_f(self) -> OneForm:
        return self.contact().lam

    def f_on_M(self) -> ScalarField:
        f = self.f
        return ScalarField(lambda x: f(x[1:]), lambda x: np.concatenate(([0.0], f.d(x[1:]))))

    def contact(self) -> ContactData:
        return prequant_contact(self.beta, self.j, self.f)

    def lift_rhs(self, y: np.ndarray) -> np.ndarray:
        """Flat right-hand side on y = (w, theta, a)."""
        m = self.base_dim
        w = y[:m]
        v = self.grad_f(w)
        fw = self.f(w)
        out = np.empty(m + 2)
        out[:m] = TWO_PI * v
        out[m] = -TWO_PI * float(self.beta(w) @ v)
        out[m + 1] = TWO_PI * math.exp(fw)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"non-finite lift field at w={w}", None, y)
        return out

    def verify(self, points: Sequence, tol: float = 1e-6) -> dict:
        """Compatibility and d beta checks at sample points of W."""
        worst_asym = 0.0
        min_eig = math.inf
        worst_d = 0.0
        for w in points:
            w = as_array(w)
            rep = compatibility_metric(self.omega(w), self.j(w))
            worst_asym = max(worst_asym, rep.asymmetry)
            min_eig = min(min_eig, rep.min_eigenvalue)
            if self.beta.d_closed_form is not None:
                fd = exterior_derivative_fd(OneForm(self.beta.eval), w)
                worst_d = max(worst_d, float(np.max(np.abs(fd - self.beta.d(w)))))
        ok = worst_asym <= 1e-10 and min_eig > 0 and worst_d <= tol
        return {"passed": ok, "asymmetry": worst_asym, "min_eigenvalue": min_eig, "dbeta_fd_error": worst_d}


def lift_ode_rhs(space: PrequantSpace, state):
    """(gamma', theta', a') at state = (gamma, theta, a)."""
    gamma, theta, a = state
    y = np.concatenate((as_array(gamma), [float(theta), float(a)]))
    d = space.lift_rhs(y)
    m = space.base_dim
    return d[:m], float(d[m]), float(d[m + 1])


# -------------------------------------------------------------- evaluators


class MapEvaluator:
    """A map (s, t) -> (a, x) into R x M with t in R/Z."""

    dim: int

    def point(self, s: float, t: float) -> np.ndarray:
        raise NotImplementedError

    def stencil(self, s: float, t: float, h: float) -> np.ndarray:
        """Rows: centre, s+h, s-h, t+h, t-h."""
        return np.array([self.point(s, t), self.point(s + h, t), self.point(s - h, t),
                         self.point(s, t + h), self.point(s, t - h)])

    def derivatives(self, s: float, t: float, h: float = 1e-5):
        st = self.stencil(s, t, h)
        return (st[1] - st[2]) / (2 * h), (st[3] - st[4]) / (2 * h)


class PerturbedMap(MapEvaluator):
    """base map plus delta(s, t) added to its coordinates."""

    def __init__(self, base: MapEvaluator, delta: Callable[[float, float], np.ndarray]):
        self.base = base
        self.delta = delta
        self.dim = base.dim

    def point(self, s, t):
        return self.base.point(s, t) + self.delta(s, t)

    def stencil(self, s, t, h):
        st = self.base.stencil(s, t, h)
        at = [(s, t), (s + h, t), (s - h, t), (s, t + h), (s, t - h)]
        return st + np.array([self.delta(*p) for p in at])


@dataclass
class LiftedCylinder(MapEvaluator):
    """u(s, t) = (a(s), theta(s) + 2 pi t, gamma(s)) from stored integrator nodes.

    Off-node states come from a single DOPRI5 step from the nearest node;
    finite-difference stencils reuse one base node so that they
    differentiate a smooth function.  ``tails`` may hold exact solutions
    beyond either end: callables s -> y keyed by "lower" / "upper".
    """

    space: PrequantSpace
    s_nodes: np.ndarray
    y_nodes: np.ndarray
    f_nodes: np.ndarray
    tails: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dim = self.space.base_dim + 2
        self._s_list = list(self.s_nodes)

    @property
    def s_range(self):
        return float(self.s_nodes[0]), float(self.s_nodes[-1])

    @property
    def m(self):
        return self.space.base_dim

    def _nearest(self, s):
        i = bisect.bisect_left(self._s_list, s)
        if i == 0:
            return 0
        if i >= len(self._s_list):
            return len(self._s_list) - 1
        return i if self._s_list[i] - s < s - self._s_list[i - 1] else i - 1

    def _tail(self, s):
        lo, hi = self.s_range
        if s < lo and "lower" in self.tails:
            return np.asarray(self.tails["lower"](s), dtype=float)
        if s > hi and "upper" in self.tails:
            return np.asarray(self.tails["upper"](s), dtype=float)
        raise EvaluationDomainError(f"s={s} outside cylinder range [{lo}, {hi}]")

    def _from_base(self, k, s):
        ds = s - self.s_nodes[k]
        if ds == 0.0:
            return self.y_nodes[k].copy()
        return dopri5_step(self.space.lift_rhs, self.y_nodes[k], self.f_nodes[k], ds)[0]

    def state(self, s: float) -> np.ndarray:
        memo = self.__dict__.get("_memo")
        if memo is not None and memo[0] == s:
            return memo[1].copy()
        lo, hi = self.s_range
        y = self._tail(s) if (s < lo or s > hi) else self._from_base(self._nearest(s), s)
        self._memo = (s, y)
        return y.copy()

    def rate(self, s: float) -> np.ndarray:
        return self.space.lift_rhs(self.state(s))

    def _to_target(self, y, t):
        m = self.m
        return np.concatenate(([y[m + 1], y[m] + TWO_PI * t], y[:m]))

    def point(self, s, t):
        return self._to_target(self.state(s), t)

    def stencil(self, s, t, h):
        lo, hi = self.s_range
        if s - h < lo or s + h > hi:
            if self.tails:
                return super().stencil(s, t, h)
            raise EvaluationDomainError(f"stencil at s={s}, h={h} leaves [{lo}, {hi}]")
        k = self._nearest(s)
        yc, yp, ym = (self._from_base(k, x) for x in (s, s + h, s - h))
        return np.array([self._to_target(yc, t), self._to_target(yp, t), self._to_target(ym, t),
                         self._to_target(yc, t + h), self._to_target(yc, t - h)])

    def derivatives(self, s, t, h=None):
        """Exact (u_s, u_t) from the ODE right-hand side."""
        y = self.state(s)
        d = self.space.lift_rhs(y)
        m = self.m
        us = np.concatenate(([d[m + 1], d[m]], d[:m]))
        ut = np.zeros(self.dim)
        ut[1] = TWO_PI
        return us, ut

    def a(self, s):
        return float(self.state(s)[self.m + 1])

    def theta(self, s):
        return float(self.state(s)[self.m])

    def gamma(self, s):
        return self.state(s)[: self.m]

    @property
    def f_along(self) -> np.ndarray:
        return np.array([self.space.f(y[: self.m]) for y in self.y_nodes])

    def check_invariants(self) -> dict:
        m = self.m
        adot = self.f_nodes[:, m + 1]
        fv = self.f_along
        f_monotone = bool(np.all(np.diff(fv) >= -1e-10))
        convex = bool(np.all(np.diff(adot) >= -1e-9 * np.abs(adot[1:]))) if f_monotone else None
        lam_s = [float(self.space.lam(np.concatenate(([y[m]], y[:m]))) @ np.concatenate(([d[m]], d[:m])))
                 for y, d in zip(self.y_nodes, self.f_nodes)]
        return {"adot_positive": bool(np.all(adot > 0)), "f_nondecreasing": f_monotone,
                "a_convex": convex, "max_lambda_us": float(np.max(np.abs(lam_s)))}

    def write_csv(self, path) -> None:
        m = self.m
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "a", "theta_lift"] + [f"gamma_{i}" for i in range(m)])
            for s, y in zip(self.s_nodes, self.y_nodes):
                w.writerow([repr(float(s)), repr(float(y[m + 1])), repr(float(y[m]))]
                           + [repr(float(v)) for v in y[:m]])


def build_cylinder(
    space: PrequantSpace,
    x0,
    s_range=(-5.0, 5.0),
    theta0: float = 0.0,
    a0: float = 0.0,
    rtol: float = 1e-11,
    atol: float = 1e-12,
    hmax=np.inf,
    max_steps: int = 200_000,
    tails: Optional[dict] = None,
) -> LiftedCylinder:
    """Integrate the lift system from s = 0 in both directions over s_range."""
    lo, hi = float(s_range[0]), float(s_range[1])
    if not lo <= 0.0 <= hi:
        raise ContractViolation("s_range must contain 0, where the initial data sit")
    y0 = np.concatenate((as_array(x0), [theta0, a0]))
    parts = []
    statuses = {}
    for end in (lo, hi):
        if end == 0.0:
            continue
        sol = integrate(space.lift_rhs, y0, (0.0, end), method="dopri5", rtol=rtol, atol=atol,
                        hmax=hmax, max_steps=max_steps)
        statuses["lower" if end < 0 else "upper"] = sol.status
        if sol.status != "done":
            raise EvaluationError(f"lift integration ended with status {sol.status} toward s={end}",
                                  sol.t[-1], sol.y[-1])
        parts.append(sol)
    if not parts:
        f0 = space.lift_rhs(y0)
        s_nodes, y_nodes, f_nodes = np.zeros(1), y0[None, :], f0[None, :]
    elif len(parts) == 1:
        s_nodes, y_nodes, f_nodes = parts[0].t, parts[0].y, parts[0].f
        if s_nodes[0] > s_nodes[-1]:
            s_nodes, y_nodes, f_nodes = s_nodes[::-1], y_nodes[::-1], f_nodes[::-1]
    else:
        back, fwd = parts
        s_nodes = np.concatenate((back.t[::-1], fwd.t[1:]))
        y_nodes = np.concatenate((back.y[::-1], fwd.y[1:]))
        f_nodes = np.concatenate((back.f[::-1], fwd.f[1:]))
    info = {"rtol": rtol, "atol": atol, "status": statuses, "nodes": int(s_nodes.size)}
    return LiftedCylinder(space, s_nodes, y_nodes, f_nodes, dict(tails or {}), info)


# ------------------------------------------------------------------ energy


@dataclass
class EnergyReport:
    formula_value: float
    quadrature_values: list
    boundary_values: list
    truncation: tuple
    family: list
    stokes_rel_error: float

    @property
    def supremum(self) -> float:
        return max(self.quadrature_values)


def hofer_energy_formula(space: PrequantSpace, cyl: LiftedCylinder, rel_tol: float = 1e-6):
    """2 pi lim e^{f(gamma(s))}, with a flag describing how the limit was obtained.

    Flags: "converged" (e^f changes by < rel_tol over the last decade of
    s), "monotone-bounded" (not converged, known limit used), "infinite"
    (f still growing and no limit known), "unconverged".
    """
    s_hi = cyl.s_range[1]
    e_end = math.exp(space.f(cyl.gamma(s_hi)))
    s_ref = s_hi / 10.0 if s_hi > 0 else s_hi - 1.0
    s_ref = max(s_ref, cyl.s_range[0])
    e_ref = math.exp(space.f(cyl.gamma(s_ref)))
    change = abs(e_end - e_ref) / e_end
    if change < rel_tol:
        return TWO_PI * e_end, "converged"
    if space.f_limit is not None:
        return TWO_PI * math.exp(space.f_limit), "monotone-bounded"
    if e_end > 10 * e_ref:
        return math.inf, "infinite"
    return TWO_PI * e_end, "unconverged"


def sigmoid_family(a_mid: float, ks=(1, 2, 4, 8, 16), scale: float = 1.0):
    """phi_k(a) = logistic(k (a - a_mid) / scale) with derivatives."""
    fam = []
    for k in ks:
        kk = k / scale

        def phi(a, kk=kk):
            return scipy.special.expit(kk * (np.asarray(a) - a_mid))

        def dphi(a, kk=kk):
            p = scipy.special.expit(kk * (np.asarray(a) - a_mid))
            return kk * p * (1 - p)

        fam.append((k, phi, dphi))
    return fam


def _check_family(family, a_lo, a_hi):
    grid = np.linspace(a_lo, a_hi, 64)
    for k, phi, dphi in family:
        if np.any(dphi(grid) < 0) or np.any(np.diff(phi(grid)) < -1e-15):
            raise ContractViolation(f"family member k={k} is not monotone")


def hofer_energy_quadrature(space: PrequantSpace, cyl: LiftedCylinder, phi_family=None,
                            s0: Optional[float] = None, s1: Optional[float] = None,
                            n_t: int = 4, epsrel: float = 1e-9) -> EnergyReport:
    """Integral of u* d(phi lambda_f) over [s0, s1] x S^1 for each phi.

    Two evaluations: the boundary expression 2 pi [phi(a) e^f] from s0 to
    s1, and a 2-D quadrature of phi'(a) da ^ u*lambda_f + phi(a) u* d lambda_f
    (adaptive in s, periodic trapezoid in t).
    """
    lo, hi = cyl.s_range
    s0 = lo if s0 is None else s0
    s1 = hi if s1 is None else s1
    if not lo <= s0 < s1 <= hi:
        raise ContractViolation("truncation must lie inside the cylinder range")
    a0, a1 = cyl.a(s0), cyl.a(s1)
    a_mid = 0.5 * (a0 + a1)
    if phi_family is None:
        phi_family = sigmoid_family(a_mid)
    _check_family(phi_family, a0, a1)
    lam_f = space.lam_f
    ts = np.arange(n_t) / n_t

    def integrand(s):
        out = np.zeros(len(phi_family))
        for t in ts:
            p = cyl.point(s, t)
            us, ut = cyl.derivatives(s, t)
            x = p[1:]
            l = lam_f(x)
            dl = lam_f.d(x)
            pair = us[0] * float(l @ ut[1:]) - ut[0] * float(l @ us[1:])
            area = float(us[1:] @ dl @ ut[1:])
            for i, (_, phi, dphi) in enumerate(phi_family):
                out[i] += float(dphi(p[0])) * pair + float(phi(p[0])) * area
        return out / n_t

    s_nodes, a_nodes = cyl.s_nodes, cyl.y_nodes[:, cyl.m + 1]
    s_mid = float(np.interp(a_mid, a_nodes, s_nodes))
    slope = cyl.rate(s_mid)[cyl.m + 1]
    pts = sorted({min(max(s_mid + d / slope, s0), s1) for d in (-64, -16, -4, -1, 0, 1, 4, 16, 64)}
                 - {s0, s1})
    quad, _ = scipy.integrate.quad_vec(integrand, s0, s1, points=pts or None, epsrel=epsrel,
                                       epsabs=1e-12, limit=4000)
    e0 = math.exp(space.f(cyl.gamma(s0)))
    e1 = math.exp(space.f(cyl.gamma(s1)))
    bnd = [TWO_PI * (float(phi(a1)) * e1 - float(phi(a0)) * e0) for _, phi, _ in phi_family]
    rel = max(abs(q - b) / max(abs(b), 1e-300) for q, b in zip(quad, bnd))
    formula, _ = hofer_energy_formula(space, cyl)
    return EnergyReport(formula, [float(q) for q in quad], bnd, (s0, s1),
                        [k for k, _, _ in phi_family], float(rel))


# -------------------------------------------------------------------- mass


@dataclass
class MassReport:
    s_grid: np.ndarray
    mass_curve: np.ndarray
    limit_estimate: float
    richardson_gap: float

    @property
    def min_increment(self) -> float:
        if self.mass_curve.size < 2:
            return 0.0
        return float(np.min(np.diff(self.mass_curve)))


def _loop_action(ev: MapEvaluator, lam: OneForm, s: float, n_t: int) -> float:
    total = 0.0
    for t in np.arange(n_t) / n_t:
        p = ev.point(s, t)
        _, ut = ev.derivatives(s, t)
        total += float(lam(p[1:]) @ ut[1:])
    return total / n_t


def puncture_mass(ev: MapEvaluator, lam: OneForm, s_grid, n_t: int = 16, tol: float = 1e-9) -> MassReport:
    """Loop actions of lambda over s -> u(s, .) with a resolution check in t."""
    s_grid = np.asarray(s_grid, dtype=float)
    curve = np.array([_loop_action(ev, lam, s, n_t) for s in s_grid])
    fine = _loop_action(ev, lam, float(s_grid[-1]), 2 * n_t)
    gap = abs(fine - curve[-1])
    if gap > tol * max(1.0, abs(fine)):
        raise ResolutionError(f"loop action at s={s_grid[-1]} changed by {gap:.3g} under t-refinement")
    return MassReport(s_grid, curve, float(fine), float(gap))


# --------------------------------------------------------------- residuals


@dataclass
class ResidualReport:
    R1: np.ndarray
    R2: np.ndarray
    h: float
    grid: tuple

    @property
    def max_R1(self) -> float:
        return float(np.max(self.R1))

    @property
    def max_R2(self) -> float:
        return float(np.max(self.R2))

    @property
    def max_residual(self) -> float:
        """max over the grid of |R1| + |R2|."""
        return float(np.max(self.R1 + self.R2))


def _point_residual(st: np.ndarray, h: float, contact: ContactData):
    us = (st[1] - st[2]) / (2 * h)
    ut = (st[3] - st[4]) / (2 * h)
    x = st[0, 1:]
    lam = contact.lam(x)
    P = contact.xi_projection(x)
    J = contact.J_xi(x)
    ps, pt = P @ us[1:], P @ ut[1:]
    # R1 evaluated on d_s and d_t, Frobenius norm of the two columns
    r1 = math.hypot(np.linalg.norm(pt - J @ ps), np.linalg.norm(-ps - J @ pt))
    r2 = np.array([float(lam @ ut[1:]) - us[0], -float(lam @ us[1:]) - ut[0]])
    return float(r1), float(np.linalg.norm(r2))


def holomorphy_residual(ev: MapEvaluator, contact: ContactData, grid, h: float = 1e-4) -> ResidualReport:
    """Cauchy-Riemann defects of (a, u) for j d_s = d_t, by central differences.

    R1 collects pi du j - J pi du on d_s and d_t; R2 collects
    u*lambda o j - da.  ``grid`` is (s_values, t_values).
    """
    s_vals, t_vals = (np.asarray(g, dtype=float) for g in grid)
    R1 = np.zeros((s_vals.size, t_vals.size))
    R2 = np.zeros_like(R1)
    for i, s in enumerate(s_vals):
        for k, t in enumerate(t_vals):
            R1[i, k], R2[i, k] = _point_residual(ev.stencil(float(s), float(t), h), h, contact)
    return ResidualReport(R1, R2, h, (s_vals, t_vals))


def residual_refinement(ev: MapEvaluator, contact: ContactData, grid, h: float = 1e-4):
    """Residuals at h and h/2 with the observed ratio and order."""
    r_h = holomorphy_residual(ev, contact, grid, h)
    r_h2 = holomorphy_residual(ev, contact, grid, h / 2)
    ratio = r_h.max_residual / r_h2.max_residual if r_h2.max_residual > 0 else math.inf
    order = math.log2(ratio) if 0 < ratio < math.inf else math.nan
    return r_h, r_h2, ratio, order


def write_residual_json(path, report: ResidualReport, order_estimate: float) -> None:
    s_vals, t_vals = report.grid
    doc = {"max_R1": report.max_R1, "max_R2": report.max_R2, "max_residual": report.max_residual, "h": report.h,
           "grid": {"s": [float(v) for v in s_vals], "t": [float(v) for v in t_vals]},
           "order_estimate": order_estimate}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


# ------------------------------------------------------------ model spaces


def plane_space_r2(f: ScalarField, f_limit: Optional[float] = None, name: str = "r2") -> PrequantSpace:
    """W = R^2 with beta = x dy (d beta = dx ^ dy) and the standard j."""
    beta = OneForm(lambda w: np.array([0.0, w[0]]), lambda w, _o=standard_omega(1): _o)
    jw = standard_j(1)
    return PrequantSpace(beta, AlmostComplexStructure(lambda w: jw), f, 2, f_limit=f_limit, name=name)


def trivial_space() -> PrequantSpace:
    """f = 0: the lift is the trivial cylinder over a Reeb orbit."""
    return plane_space_r2(ScalarField(lambda w: 0.0, lambda w: np.zeros(2)), f_limit=0.0, name="trivial")


def arctan_space() -> PrequantSpace:
    """f = arctan x: gamma solves x + x^3/3 = 2 pi s and e^f tends to e^{pi/2}."""
    return plane_space_r2(ScalarField(lambda w: math.atan(w[0]), lambda w: np.array([1.0 / (1.0 + w[0] ** 2), 0.0])),
                          f_limit=math.pi / 2, name="arctan")
