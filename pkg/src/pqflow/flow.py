"""Riemannian gradient flows of the spiral potentials on R x S^1.

Trajectories keep the angle as a continuous lift.  Unit-speed runs of a
spiral potential under a kernel-known metric go through the compiled
Rosenbrock kernel; anything else falls back to the generic integrators.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, spiral
from .diffgeo import TWO_PI, ChartPoint, ContractViolation, MetricField, ScalarField, as_array
from .integrators import EvaluationError, StiffnessError, integrate

__all__ = [
    "SpiralPotential", "KernelMetric", "RandomMetricSpec", "MetricSpecRejected",
    "FlowTrajectory", "StopCriteria", "LimitSetReport", "ZBarrierReport",
    "InsufficientIntegrationError", "euclidean_metric", "diag_exp_metric", "random_metric",
    "riemannian_gradient", "integrate_flow", "track_z", "verify_z_barrier",
    "detect_omega_limit", "write_trajectory_csv",
]


class MetricSpecRejected(ValueError):
    """Generated metric violates its declared eigenvalue bounds."""


class InsufficientIntegrationError(RuntimeError):
    """Trajectory never reached the band around the limit circle."""


# ------------------------------------------------------------- potentials


class SpiralPotential(ScalarField):
    """F_delta as a ScalarField on (s, t) with closed-form differential."""

    def __init__(self, params: spiral.SpiralParams = spiral.SpiralParams()):
        self.params = params
        super().__init__(
            lambda x: float(spiral.eval_F(x[0], x[1], params)),
            lambda x: np.array(spiral.dF(x[0], x[1], params), dtype=float),
        )

    def hessian(self, x):
        x = as_array(x)
        a, b, c = spiral.hessian_F(x[0], x[1], self.params)
        return np.array([[a, b], [b, c]])


# ---------------------------------------------------------------- metrics


class KernelMetric(MetricField):
    """A metric field the compiled kernel can evaluate.

    kind 0: diag(c1 e^{k1 s}, c2 e^{k2 s}); kind 1: random Fourier
    L^T L + mu I.  ``params`` is the flat array the kernel consumes.
    """

    def __init__(self, kind: int, params, label: str = ""):
        self.kind = int(kind)
        self.params = np.asarray(params, dtype=float)
        self.label = label
        super().__init__(self._g, None)

    def _g(self, x):
        g, _, _ = kernels.python_backend.metric(self.kind, list(self.params), float(x[0]), float(x[1]))
        return np.array([[g[0], g[1]], [g[1], g[2]]])

    def derivatives(self, x):
        """(g, d_s g, d_t g) as 2x2 arrays."""
        g, gs, gt = kernels.python_backend.metric(self.kind, list(self.params), float(x[0]), float(x[1]))
        m = lambda v: np.array([[v[0], v[1]], [v[1], v[2]]])
        return m(g), m(gs), m(gt)

    def grid(self, s, t):
        """Metric entries (g00, g01, g11) on arrays, vectorized."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == 0:
            a = p[0] * np.exp(p[1] * s)
            b = p[2] * np.exp(p[3] * s)
            return a + 0 * t, np.zeros(np.broadcast(s, t).shape), b + 0 * t
        amp, mu, M = p[0], p[1], int(p[2])
        coef = p[3:].reshape(4, M, 5)
        L = []
        for e in range(4):
            v = 0.0
            for k in range(M):
                w, psi, nu, om, chi = coef[e, k]
                v = v + w * np.cos(k * t + psi + nu * np.sin(om * s + chi))
            L.append(amp * v)
        return L[0] ** 2 + L[2] ** 2 + mu, L[0] * L[1] + L[2] * L[3], L[1] ** 2 + L[3] ** 2 + mu


def euclidean_metric() -> KernelMetric:
    return KernelMetric(0, [1.0, 0.0, 1.0, 0.0], "euclidean")


def diag_exp_metric(c1, k1, c2, k2, label="diag-exp") -> KernelMetric:
    return KernelMetric(0, [c1, k1, c2, k2], label)


@dataclass(frozen=True)
class RandomMetricSpec:
    seed: int
    fourier_modes: int = 3
    mu: float = 0.2
    amplitude: float = 1.0
    s_range: tuple = (-1.5, 0.0)

    def __post_init__(self):
        if not 0 < self.mu <= 1:
            raise ContractViolation("mu must lie in (0, 1]")
        if self.fourier_modes < 1:
            raise ContractViolation("need at least one Fourier mode")


def random_metric(spec: RandomMetricSpec, grid: int = 40) -> KernelMetric:
    """Seeded L^T L + mu I with bounded Fourier entries.

    Each entry of L is amp * sum_k w_k cos(k t + psi_k + nu_k sin(om_k s + chi_k))
    with sum |w_k| = 1, so |L_ij| <= amp and the spectrum lies in
    [mu, mu + 4 amp^2].  The bounds [mu, 1/mu] are then checked on a grid.
    """
    rng = np.random.default_rng(spec.seed)
    M = spec.fourier_modes
    coef = np.empty((4, M, 5))
    for e in range(4):
        w = rng.normal(size=M)
        coef[e, :, 0] = w / np.abs(w).sum()
        coef[e, :, 1] = rng.uniform(0, TWO_PI, M)
        coef[e, :, 2] = rng.uniform(0, 1, M)
        coef[e, :, 3] = rng.uniform(0.5, 3.0, M)
        coef[e, :, 4] = rng.uniform(0, TWO_PI, M)
    params = np.concatenate(([spec.amplitude, spec.mu, M], coef.ravel()))
    metric = KernelMetric(1, params, f"fourier-seed{spec.seed}")
    lo, hi = metric_eigen_range(metric, spec.s_range, grid)
    if lo < spec.mu * (1 - 1e-12) or hi > 1.0 / spec.mu * (1 + 1e-12):
        raise MetricSpecRejected(
            f"seed {spec.seed}: eigenvalues in [{lo:.4g}, {hi:.4g}], need [{spec.mu}, {1 / spec.mu}]"
        )
    return metric


def metric_eigen_range(metric: KernelMetric, s_range=(-1.5, 0.0), grid: int = 40):
    s, t = np.meshgrid(np.linspace(*s_range, grid), np.linspace(0, TWO_PI, grid, endpoint=False))
    a, b, c = metric.grid(s, t)
    mean = 0.5 * (a + c)
    rad = np.sqrt(0.25 * (a - c) ** 2 + b**2)
    return float((mean - rad).min()), float((mean + rad).max())


def riemannian_gradient(F: ScalarField, g: MetricField, p) -> np.ndarray:
    """g^{-1} dF at p."""
    x = as_array(p)
    gm = g(x)
    if np.max(np.abs(gm - gm.T)) > 1e-12 or np.linalg.eigvalsh(gm).min() <= 0:
        raise ContractViolation(f"metric not SPD at {x}")
    return np.linalg.solve(gm, F.d(x))


# ------------------------------------------------------------ trajectories


@dataclass(frozen=True)
class StopCriteria:
    s_stop: float = 1e-2
    max_arclen: float = 1e4
    max_steps: int = 1_000_000
    tau_max: float = 1e3


@dataclass
class FlowTrajectory:
    tau: np.ndarray
    s: np.ndarray
    t_lift: np.ndarray
    F: np.ndarray
    arclen: np.ndarray
    mode: str
    status: str
    info: dict = field(default_factory=dict)

    def __len__(self):
        return self.tau.size

    @property
    def t_canonical(self) -> np.ndarray:
        return np.mod(self.t_lift, TWO_PI)

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.s < 0, 1.0 / self.s + self.t_lift, np.nan)

    def states(self):
        return [ChartPoint([a, b], (1,)) for a, b in zip(self.s, self.t_lift)]

    def window(self, mask) -> "FlowTrajectory":
        m = mask if isinstance(mask, slice) else np.asarray(mask)
        return FlowTrajectory(self.tau[m], self.s[m], self.t_lift[m], self.F[m], self.arclen[m],
                              self.mode, self.status, dict(self.info))


def integrate_flow(
    F: ScalarField,
    g: MetricField,
    x0,
    mode: str = "unit-speed",
    stop: StopCriteria = StopCriteria(),
    rtol: float = 1e-8,
    atol: float = 1e-10,
    direction: float = 1.0,
) -> FlowTrajectory:
    """Gradient flow of F under g from x0 = (s0, t0)."""
    if mode not in ("unit-speed", "raw"):
        raise ValueError(f"unknown mode {mode!r}")
    x0 = as_array(x0)
    if mode == "unit-speed" and isinstance(F, SpiralPotential) and isinstance(g, KernelMetric):
        return _kernel_flow(F, g, x0, stop, rtol, atol, direction)
    return _generic_flow(F, g, x0, mode, stop, rtol, atol, direction)


def _kernel_flow(F, g, x0, stop, rtol, atol, direction):
    p = F.params
    sig, s, t, Fv, code, nrej = kernels.unit_speed_flow(
        g.kind, g.params, p.delta, p.c, p.sharpness, float(x0[0]), float(x0[1]),
        stop.s_stop, rtol, atol, stop.max_arclen, stop.max_steps, float(direction),
    )
    status = kernels.STATUS_NAMES[code]
    if status == "underflow":
        raise StiffnessError("step size underflow in unit-speed kernel", sig[-1], (s[-1], t[-1]))
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(t))):
        raise EvaluationError("non-finite state in unit-speed kernel")
    info = {"backend": kernels.BACKEND, "rejected": int(nrej), "rtol": rtol, "atol": atol}
    return FlowTrajectory(sig, s, t, Fv, sig.copy(), "unit-speed", status, info)


def _generic_flow(F, g, x0, mode, stop, rtol, atol, direction):
    def grad(y):
        v = np.linalg.solve(g(y), F.d(y))
        return v

    def rhs(y):
        v = grad(y)
        if mode == "raw":
            return direction * v
        n = math.sqrt(max(float(F.d(y) @ v), 0.0))
        if n == 0.0:
            raise EvaluationError("stationary point: |dF| = 0", None, y)
        return direction * v / n

    def halt(_tau, y):
        return y[0] >= -stop.s_stop

    span = stop.tau_max if mode == "raw" else stop.max_arclen
    if x0[0] >= 0:
        info = {"backend": "python"}
        one = lambda v: np.array([v])
        return FlowTrajectory(one(0.0), one(x0[0]), one(x0[1]), one(F(x0)), one(0.0), mode,
                              "stationary", info)
    method = "dopri5" if mode == "raw" else "rodas4"
    sol = integrate(rhs, x0, (0.0, span), method=method, rtol=rtol, atol=atol,
                    max_steps=stop.max_steps, stop=halt)
    Fv = np.array([F(y) for y in sol.y])
    if mode == "raw":
        speed = np.array([math.sqrt(max(float(f @ g(y) @ f), 0.0)) for f, y in zip(sol.f, sol.y)])
        arclen = np.concatenate(([0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(sol.t))))
    else:
        arclen = sol.t.copy()
    status = {"stopped": "done", "done": "arclen" if mode != "raw" else "tau_max"}.get(sol.status, sol.status)
    return FlowTrajectory(sol.t, sol.y[:, 0], sol.y[:, 1], Fv, arclen, mode, status,
                          {"backend": "python", "rejected": sol.nrejected, "rtol": rtol, "atol": atol})


def write_trajectory_csv(traj: FlowTrajectory, path) -> None:
    cols = (traj.tau, traj.s, traj.t_canonical, traj.t_lift, traj.z, traj.F, traj.arclen)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "s", "t_canonical", "t_lift", "z", "F", "arclen"])
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


# ------------------------------------------------------------ diagnostics


def track_z(traj: FlowTrajectory) -> float:
    if np.any(traj.s >= 0):
        raise ContractViolation("track_z needs s < 0 along the trajectory")
    return float(np.max(np.abs(traj.z)))


@dataclass
class LimitSetReport:
    band_epsilon: float
    angular_bins: int
    coverage: float
    windings: float
    z_sup: float
    samples_in_band: int
    bins_hit: np.ndarray = field(repr=False, default=None)


def angle_bin(t, bins: int):
    """Bin of canonical angle; exact edges go to the lower bin."""
    w = TWO_PI / bins
    return (np.ceil(np.asarray(t) / w).astype(np.int64) - 1) % bins


def mark_swept_bins(t_lift: np.ndarray, bins: int, pair_mask=None) -> np.ndarray:
    """Boolean bin occupancy from the angular segments between samples."""
    hit = np.zeros(bins, dtype=bool)
    w = TWO_PI / bins
    ta, tb = t_lift[:-1], t_lift[1:]
    if pair_mask is not None:
        ta, tb = ta[pair_mask], tb[pair_mask]
    lo, hi = np.minimum(ta, tb), np.maximum(ta, tb)
    ia = np.ceil(lo / w).astype(np.int64) - 1
    ib = np.ceil(hi / w).astype(np.int64) - 1
    if ia.size and np.any(ib - ia >= bins - 1):
        hit[:] = True
        return hit
    for a, b in zip(ia, ib):
        hit[np.arange(a, b + 1) % bins] = True
    return hit


def detect_omega_limit(traj: FlowTrajectory, band_epsilon: float = 0.05, bins: int = 36,
                       target: float = 0.0) -> LimitSetReport:
    """Angular coverage of the circle s = target by the part of the orbit inside the band."""
    inside = np.abs(traj.s - target) < band_epsilon
    if not inside.any():
        raise InsufficientIntegrationError(
            f"trajectory never enters |s - {target}| < {band_epsilon}"
        )
    pairs = inside[:-1] & inside[1:]
    hit = mark_swept_bins(traj.t_lift, bins, pairs)
    if not pairs.any():  # single sample in band
        hit[angle_bin(traj.t_canonical[inside], bins)] = True
    tl = traj.t_lift[inside]
    neg = traj.s < 0
    z_sup = float(np.max(np.abs(traj.z[neg]))) if neg.any() else float("nan")
    return LimitSetReport(band_epsilon, bins, float(hit.mean()), float((tl[-1] - tl[0]) / TWO_PI),
                          z_sup, int(inside.sum()), hit)


@dataclass
class ZBarrierReport:
    passed: bool
    violations: list
    kappa: float
    s_star: float
    samples_checked: int
    active_samples: int
    max_sandwich_excess: float
    calibration_samples: int


def normalized_z_rate(traj: FlowTrajectory, g: KernelMetric, params: spiral.SpiralParams):
    """z'/(s^-4 e^{1/s} A) along the raw-time flow, evaluated pointwise."""
    s, t = traj.s, traj.t_lift
    fs, ft = spiral.dF(s, t, params)
    g00, g01, g11 = g.grid(s, t)
    det = g00 * g11 - g01**2
    A, B, C = g11 / det, -g01 / det, g00 / det
    sdot = A * fs + B * ft
    tdot = B * fs + C * ft
    zdot = -sdot / s**2 + tdot
    return zdot / (s**-4 * np.exp(1.0 / s) * A)


def verify_z_barrier(traj: FlowTrajectory, g: KernelMetric, params: spiral.SpiralParams = spiral.SpiralParams(),
                     s_star: float = -0.3, calibration=(-0.3, -0.15)) -> ZBarrierReport:
    """Check that z never crosses an active barrier interval in the forbidden direction.

    Upward barriers are centred at z = -3pi/4 + 2pi k, where
    sqrt2 sin(z + pi/4) < c - 1/8; downward ones at z = pi/4 + 2pi k, where
    sqrt2 sin(z + pi/4) > c + 1/8.  A barrier counts as active at s while
    its interval survives the shrink by kappa s^2.
    """
    c = params.c
    lo_c, hi_c = params.sandwich
    m = (traj.s > s_star) & (traj.s < 0) & (traj.s >= -params.delta / 2)
    sub = traj.window(m)
    cal = (traj.s > calibration[0]) & (traj.s < calibration[1]) & (traj.s >= -params.delta / 2)
    if cal.sum() >= 2:
        ct = traj.window(cal)
        dev = normalized_z_rate(ct, g, params) - (math.sqrt(2) * np.sin(ct.z + math.pi / 4) - c)
        kappa = 2.0 * float(np.max(np.abs(dev) / ct.s**2))
    else:
        kappa = float("inf")
    violations = []
    active = 0
    excess = 0.0
    if len(sub) >= 2:
        z = sub.z
        s = sub.s
        shrink = kappa * s**2
        up_active = lo_c - shrink > -math.sqrt(2)
        down_active = hi_c + shrink < math.sqrt(2)
        active = int(np.sum(up_active | down_active))
        rate = normalized_z_rate(sub, g, params)
        base = math.sqrt(2) * np.sin(z + math.pi / 4)
        ex = np.maximum(rate - (base - lo_c) - shrink, (base - hi_c) - shrink - rate)
        excess = float(np.max(np.maximum(ex, 0.0)))
        u0 = -3 * math.pi / 4
        d0 = math.pi / 4
        for i in range(len(z) - 1):
            za, zb = z[i], z[i + 1]
            if zb > za and up_active[i] and up_active[i + 1]:
                k = math.ceil((za - u0) / TWO_PI)
                if u0 + TWO_PI * k <= zb and u0 + TWO_PI * k > za:
                    violations.append({"kind": "upward", "index": int(i), "s": float(s[i]),
                                       "z": [float(za), float(zb)]})
            if zb < za and down_active[i] and down_active[i + 1]:
                k = math.floor((za - d0) / TWO_PI)
                if d0 + TWO_PI * k >= zb and d0 + TWO_PI * k < za:
                    violations.append({"kind": "downward", "index": int(i), "s": float(s[i]),
                                       "z": [float(za), float(zb)]})
    return ZBarrierReport(not violations, violations, kappa, s_star, len(sub), active, excess,
                          int(cal.sum()))
