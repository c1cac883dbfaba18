"""Reproducible experiment runners and suite aggregation.

Each experiment is described by an ExperimentConfig (parsed from JSON),
draws all randomness from one generator keyed on its seed and name, writes
its artifacts under ``output_dir/name`` and returns an ExperimentResult
holding named checks.  A check may carry the number of the acceptance
criterion it certifies; SuiteReport.criteria folds them into one verdict
per criterion.
"""
from __future__ import annotations

import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import flow, knot, lift, spiral
from .diffgeo import (
    TWO_PI, contact_volume, reeb_solve, standard_contact_form, standard_j,
)
from .integrators import integrate

KINDS = ("flow", "annulus-cylinder", "plane", "identities", "energy")
DEFAULT_TOLERANCES = {"rtol": 1e-8, "atol": 1e-10, "h": 1e-4, "band": 0.05, "bins": 36}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class OutputExistsError(FileExistsError):
    pass


# ------------------------------------------------------------------ config

_PARAM_DEFAULTS = {
    "flow": {"delta": 1.0, "c": 1.25, "n_metrics": 20, "metric": "random", "mu": 0.2,
             "fourier_modes": 3, "starts": [[-0.4, 0.0], [-0.6, 1.0], [-0.8, 2.5], [-0.3, 4.0], [-0.5, 5.5]],
             "s_star": -0.3, "write_trajectories": "first", "max_seconds": None},
    "annulus-cylinder": {"n": 1, "r_minus": 1.0, "r_plus": 2.0, "start": None, "s_max": 1000.0,
                         "residual_s": [-1.0, 1.0], "residual_points": 41, "max_seconds": None},
    "plane": {"n": 1, "r0": 1.0, "start": [0.0, None, -3.0], "s_max": 1000.0, "residual": True,
              "max_seconds": None},
    "identities": {"n": [1, 2, 3], "n_points": 100, "critical_grid": 400, "spiral_points": 10000,
                   "conservation": True, "max_seconds": None},
    "energy": {"case": "arctan", "s_max": 4.3e5, "residual": True, "max_seconds": None},
}


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    seed: int = 0
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output_dir: str = "pqflow-out"

    @classmethod
    def from_dict(cls, data: dict, defaults: Optional[dict] = None) -> "ExperimentConfig":
        data = {**(defaults or {}), **data}
        kind = data.get("kind")
        if kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
        unknown = set(data) - {"kind", "name", "seed", "params", "tolerances", "output_dir"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        params = dict(_PARAM_DEFAULTS[kind])
        given = data.get("params", {}) or {}
        if not isinstance(given, dict):
            raise ConfigError("params", "must be an object")
        extra = set(given) - set(params)
        if extra:
            raise ConfigError(f"params.{sorted(extra)[0]}", f"not a parameter of kind {kind}")
        params.update(given)
        tol = dict(DEFAULT_TOLERANCES)
        tol_given = data.get("tolerances", {}) or {}
        extra = set(tol_given) - set(tol)
        if extra:
            raise ConfigError(f"tolerances.{sorted(extra)[0]}", "unknown tolerance")
        tol.update(tol_given)
        for k, v in tol.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"tolerances.{k}", "must be positive")
        tol["bins"] = int(tol["bins"])
        cfg = cls(kind, str(data.get("name") or f"{kind}-{seed}"), seed, params, tol,
                  str(data.get("output_dir", "pqflow-out")))
        cfg._validate()
        return cfg

    def _validate(self):
        p = self.params
        if self.kind == "flow":
            if p["metric"] not in ("random", "euclidean"):
                raise ConfigError("params.metric", "must be 'random' or 'euclidean'")
            if int(p["n_metrics"]) < 1:
                raise ConfigError("params.n_metrics", "must be at least 1")
            for st in p["starts"]:
                if len(st) != 2 or not st[0] < 0:
                    raise ConfigError("params.starts", "each start is [s, t] with s < 0")
            if p["write_trajectories"] not in ("none", "first", "all"):
                raise ConfigError("params.write_trajectories", "must be none, first or all")
        elif self.kind == "annulus-cylinder":
            if not p["r_plus"] > p["r_minus"] > 0:
                raise ConfigError("params.r_plus", "need r_plus > r_minus > 0")
            if p["start"] is not None and len(p["start"]) != 2 * p["n"]:
                raise ConfigError("params.start", f"must have {2 * p['n']} coordinates")
        elif self.kind == "plane":
            if not p["r0"] > 0:
                raise ConfigError("params.r0", "must be positive")
            st = p["start"]
            if len(st) != 3:
                raise ConfigError("params.start", "must be [theta, p, rho]")
            if st[1] is not None and np.any(np.asarray(st[1], dtype=float)):
                raise ConfigError("params.start", "off-axis planes are not constructed (p must be zero)")
            if not st[2] < math.log(p["r0"]):
                raise ConfigError("params.start", "rho must be below log r0")
        elif self.kind == "identities":
            ns = p["n"] if isinstance(p["n"], list) else [p["n"]]
            if not ns or any(int(n) not in (1, 2, 3) for n in ns):
                raise ConfigError("params.n", "each n must be 1, 2 or 3")
            p["n"] = [int(n) for n in ns]
        elif self.kind == "energy":
            if p["case"] not in ("trivial", "arctan"):
                raise ConfigError("params.case", "must be 'trivial' or 'arctan'")
            if not p["s_max"] > 0:
                raise ConfigError("params.s_max", "must be positive")

    def rng(self) -> np.random.Generator:
        """The experiment's single stream, split by name so entries never share draws."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(zlib.crc32(self.name.encode()),))
        return np.random.default_rng(ss)

    @property
    def out(self) -> Path:
        return Path(self.output_dir) / self.name


# ----------------------------------------------------------------- results


@dataclass
class Check:
    value: object
    threshold: object
    relation: str
    passed: bool
    criterion: Optional[int] = None


def _check(value, relation, threshold, criterion=None) -> Check:
    v = float(value) if isinstance(value, (int, float, np.floating, np.integer)) else value
    ops = {
        "<=": lambda a, b: a <= b,
        ">=": lambda a, b: a >= b,
        ">": lambda a, b: a > b,
        "==": lambda a, b: a == b,
        "in": lambda a, b: b[0] <= a <= b[1],
    }
    ok = bool(ops[relation](v, threshold)) if not (isinstance(v, float) and math.isnan(v)) else False
    return Check(v, threshold, relation, ok, criterion)


@dataclass
class ExperimentResult:
    name: str
    kind: str
    seed: int
    status: str
    checks: dict = field(default_factory=dict)
    numbers: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    wall_clock: float = 0.0
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


@dataclass
class SuiteReport:
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def criteria(self) -> dict:
        """One verdict per acceptance criterion touched by the suite."""
        out: dict = {}
        for r in self.results:
            for name, c in r.checks.items():
                if c.criterion is None:
                    continue
                key = str(c.criterion)
                entry = out.setdefault(key, {"passed": True, "checks": []})
                entry["passed"] = entry["passed"] and c.passed
                entry["checks"].append(f"{r.name}:{name}")
        return dict(sorted(out.items(), key=lambda kv: int(kv[0])))

    def to_json(self) -> str:
        body = {"passed": self.passed, "criteria": self.criteria(),
                "experiments": [r.to_dict() for r in self.results]}
        return json.dumps(body, indent=2, default=_json_default)

    def table(self) -> str:
        rows = [("experiment", "kind", "status", "failed checks", "seconds")]
        for r in self.results:
            failed = [k for k, c in r.checks.items() if not c.passed]
            note = ", ".join(failed) if failed else (r.error or "")
            rows.append((r.name, r.kind, r.status.upper(), note, f"{r.wall_clock:.1f}"))
        widths = [max(len(row[i]) for row in rows) for i in range(5)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append(f"{sum(r.passed for r in self.results)}/{len(self.results)} experiments passed")
        return "\n".join(lines)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ----------------------------------------------------------------- runners


def _prepare_output(cfg: ExperimentConfig, force: bool) -> Path:
    out = cfg.out
    if out.exists() and any(out.iterdir()) and not force:
        raise OutputExistsError(f"{out} exists; pass --force-overwrite to replace its contents")
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_experiment(cfg: ExperimentConfig, force_overwrite: bool = False) -> ExperimentResult:
    """Run one experiment; failures inside the experiment are captured in the result."""
    out = _prepare_output(cfg, force_overwrite)
    res = ExperimentResult(cfg.name, cfg.kind, cfg.seed, "pass")
    t0 = time.perf_counter()
    try:
        _RUNNERS[cfg.kind](cfg, out, res)
    except Exception as exc:  # reported, not raised: a suite keeps going
        res.status = "error"
        res.error = f"{type(exc).__name__}: {exc}"
    res.wall_clock = time.perf_counter() - t0
    limit = cfg.params.get("max_seconds")
    if limit is not None:
        res.checks["runtime"] = _check(res.wall_clock, "<=", float(limit))
    if res.status != "error" and not all(c.passed for c in res.checks.values()):
        res.status = "fail"
    report = out / "report.json"
    report.write_text(json.dumps(res.to_dict(), indent=2, default=_json_default) + "\n", encoding="utf-8")
    res.outputs.append(str(report))
    return res


def _run_flow(cfg, out, res):
    p, tol = cfg.params, cfg.tolerances
    sp = spiral.SpiralParams(delta=float(p["delta"]), c=float(p["c"]))
    F = flow.SpiralPotential(sp)
    rng = cfg.rng()
    rtol, atol = tol["rtol"], tol["atol"]
    rows = []
    worst_cov, min_wind, worst_dz, barrier_fail, rejected = 1.0, math.inf, 0.0, 0, 0
    k = 0
    while k < int(p["n_metrics"]):
        if p["metric"] == "euclidean":
            g, mseed = flow.euclidean_metric(), -1
        else:
            mseed = int(rng.integers(0, 2**31))
            try:
                g = flow.random_metric(flow.RandomMetricSpec(mseed, int(p["fourier_modes"]), float(p["mu"])))
            except flow.MetricSpecRejected:
                rejected += 1
                if rejected > 100:
                    raise
                continue
        last = None
        for j, x0 in enumerate(p["starts"]):
            tr = flow.integrate_flow(F, g, x0, rtol=rtol, atol=atol)
            half = flow.integrate_flow(F, g, x0, rtol=rtol / 2, atol=atol / 2)
            rep = flow.detect_omega_limit(tr, tol["band"], tol["bins"])
            rep2 = flow.detect_omega_limit(half, tol["band"], tol["bins"])
            dz = abs(rep.z_sup - rep2.z_sup)
            worst_cov = min(worst_cov, rep.coverage)
            min_wind = min(min_wind, rep.windings)
            worst_dz = max(worst_dz, dz)
            rows.append({"metric": k, "metric_seed": mseed, "start": list(x0), "coverage": rep.coverage,
                         "windings": rep.windings, "z_sup": rep.z_sup, "z_sup_half": rep2.z_sup,
                         "steps": len(tr), "status": tr.status})
            if p["write_trajectories"] == "all" or (p["write_trajectories"] == "first" and k == 0):
                path = out / f"trajectory_m{k:02d}_s{j}.csv"
                flow.write_trajectory_csv(tr, path)
                res.outputs.append(str(path))
            last = tr
        bar = flow.verify_z_barrier(last, g, sp, s_star=float(p["s_star"]))
        rows[-1]["barrier_kappa"] = bar.kappa
        rows[-1]["barrier_violations"] = len(bar.violations)
        barrier_fail += 0 if bar.passed else 1
        k += 1
    (out / "runs.json").write_text(json.dumps(rows, indent=1, default=_json_default), encoding="utf-8")
    res.outputs.append(str(out / "runs.json"))
    res.numbers.update({"runs": len(rows), "rejected_metrics": rejected, "min_coverage": worst_cov,
                        "min_windings": min_wind, "max_z_sup_delta": worst_dz,
                        "z_sup": [r["z_sup"] for r in rows]})
    res.checks["coverage"] = _check(worst_cov, ">=", 1.0, 1)
    res.checks["windings"] = _check(min_wind, ">=", 3.0, 1)
    res.checks["z_sup_stability"] = _check(worst_dz, "<=", 1e-3, 1)
    res.checks["z_barrier_failures"] = _check(barrier_fail, "==", 0, 3)


def _negative_control(ev):
    return lift.PerturbedMap(ev, lambda s, t: np.array([0.0, 0.1 * math.sin(TWO_PI * t)]
                                                         + [0.0] * (ev.point(s, t).size - 2)))


def _mass_checks(res, prefix, mass: lift.MassReport):
    res.numbers[f"{prefix}_mass_ends"] = [float(mass.mass_curve[0]), float(mass.mass_curve[-1])]
    res.checks[f"{prefix}_mass_monotone"] = _check(mass.min_increment, ">=", -1e-8, 6)


def _energy_checks(res, prefix, space, cyl, target=None, criterion=5):
    formula, flag = lift.hofer_energy_formula(space, cyl)
    rep = lift.hofer_energy_quadrature(space, cyl)
    gap = abs(rep.supremum - formula) / formula
    res.numbers[f"{prefix}_energy"] = {"formula": formula, "flag": flag, "quadrature": rep.quadrature_values,
                                       "boundary": rep.boundary_values, "stokes_rel_error": rep.stokes_rel_error,
                                       "target": target}
    res.checks[f"{prefix}_energy_gap"] = _check(gap, "<=", 0.01, criterion)
    if target is not None:
        res.checks[f"{prefix}_energy_target"] = _check(abs(formula - target) / target, "<=", 0.01, criterion)
    return rep


def _residual_checks(res, prefix, ev, contact, grid, h, criterion=4):
    r1, r2, ratio, order = lift.residual_refinement(ev, contact, grid, h)
    neg = lift.holomorphy_residual(_negative_control(ev), contact, grid, h)
    res.numbers[f"{prefix}_residual"] = {"max_R1": r1.max_R1, "max_R2": r1.max_R2, "h": h,
                                         "ratio": ratio, "order": order, "negative_control": neg.max_residual}
    res.checks[f"{prefix}_residual_max"] = _check(r1.max_residual, "<=", 1e-6, criterion)
    res.checks[f"{prefix}_residual_ratio"] = _check(ratio, "in", (3.5, 4.5), criterion)
    res.checks[f"{prefix}_negative_control"] = _check(neg.max_residual, ">", 0.05, criterion)
    return r1, order


def _run_energy(cfg, out, res):
    p, h = cfg.params, cfg.tolerances["h"]
    S = float(p["s_max"])
    if p["case"] == "trivial":
        space = lift.trivial_space()
        cyl = lift.build_cylinder(space, [0.0, 0.0], (-S, S))
        target = TWO_PI
    else:
        space = lift.arctan_space()
        cyl = lift.build_cylinder(space, [0.0, 0.0], (-S, S), hmax=lambda s: 0.05 if abs(s) < 5 else np.inf)
        target = TWO_PI * math.exp(space.f_limit)
        x = cyl.gamma(S)[0]
        res.numbers["x_end"] = float(x)
        res.numbers["closed_form_error"] = float(abs(x + x**3 / 3 - TWO_PI * S) / (TWO_PI * S))
    cyl.write_csv(out / "cylinder.csv")
    res.outputs.append(str(out / "cylinder.csv"))
    _energy_checks(res, p["case"], space, cyl, target)
    sg = np.concatenate((-np.geomspace(S, 1.0, 12), [0.0], np.geomspace(1.0, S, 12)))
    _mass_checks(res, p["case"], lift.puncture_mass(cyl, space.lam_f, sg))
    if p["residual"]:
        grid = (np.linspace(-2.0, 2.0, 9), np.array([0.0, 0.37]))
        r, order = _residual_checks(res, p["case"], cyl, space.contact(), grid, h)
        lift.write_residual_json(out / "residual.json", r, order)
        res.outputs.append(str(out / "residual.json"))


def _default_annulus_start(n, params: spiral.AnnulusParams, rng):
    r = math.sqrt(params.r_minus * params.r_plus)
    ang = rng.uniform(0, TWO_PI)
    rest = list(rng.uniform(-0.5, 0.5, 2 * (n - 1)))
    return rest + [r * math.cos(ang), r * math.sin(ang)]


def _run_annulus(cfg, out, res):
    p, tol = cfg.params, cfg.tolerances
    n = int(p["n"])
    rng = cfg.rng()
    j0 = standard_j(n - 1) if n > 1 else np.zeros((0, 0))
    model = knot.KnotModel(n, j0)
    ap = spiral.AnnulusParams(float(p["r_minus"]), float(p["r_plus"]))
    start = p["start"] if p["start"] is not None else _default_annulus_start(n, ap, rng)
    S = float(p["s_max"])
    an = knot.build_annulus_cylinder(model, ap, start, (-S, S), band=tol["band"], bins=tol["bins"],
                                     flow_rtol=tol["rtol"])
    res.numbers["start"] = list(map(float, start))
    if an.stationary:
        res.numbers["stationary"] = True
        return
    cyl, space = an.cylinder, an.space
    cyl.write_csv(out / "cylinder.csv")
    for side, traj in an.flows.items():
        flow.write_trajectory_csv(traj, out / f"limit_{side}.csv")
    res.outputs += [str(out / "cylinder.csv")] + [str(out / f"limit_{s}.csv") for s in an.flows]
    res.numbers.update({"rho0": an.rho0, "forward_windings": an.forward.windings,
                        "backward_windings": an.backward.windings})
    res.checks["forward_coverage"] = _check(an.forward.coverage, ">=", 1.0)
    res.checks["backward_coverage"] = _check(an.backward.coverage, ">=", 1.0)
    _energy_checks(res, "annulus", space, cyl, TWO_PI)
    sg = np.linspace(-S, S, 41)
    mass = lift.puncture_mass(cyl, space.lam_f, sg)
    _mass_checks(res, "annulus", mass)
    res.checks["mass_lower_end"] = _check(abs(mass.mass_curve[0] - TWO_PI * math.exp(-1.0)), "<=", 1e-4)
    res.checks["mass_upper_end"] = _check(abs(mass.mass_curve[-1] - TWO_PI), "<=", 1e-4)
    grid = (np.linspace(*p["residual_s"], int(p["residual_points"])), np.array([0.0, 0.41]))
    r, order = _residual_checks(res, "annulus", cyl, space.contact(), grid, tol["h"])
    lift.write_residual_json(out / "residual.json", r, order)
    res.outputs.append(str(out / "residual.json"))
    worst = int(np.argmax(np.max(np.maximum(r.R1, r.R2), axis=1)))
    res.numbers["annulus_residual"]["worst_s"] = float(grid[0][worst])


def _run_plane(cfg, out, res):
    p, tol = cfg.params, cfg.tolerances
    n = int(p["n"])
    model = knot.KnotModel(n, standard_j(n - 1) if n > 1 else np.zeros((0, 0)))
    pp = spiral.PlaneParams(r0=float(p["r0"]), n=n)
    theta0, _, rho0 = p["start"]
    pl = knot.build_plane(model, pp, (float(theta0), None, float(rho0)), (-2.0, float(p["s_max"])),
                          band=tol["band"], bins=tol["bins"], flow_rtol=tol["rtol"])
    pl.cylinder.write_csv(out / "cylinder.csv")
    flow.write_trajectory_csv(pl.orbit, out / "limit_orbit.csv")
    res.outputs += [str(out / "cylinder.csv"), str(out / "limit_orbit.csv")]
    target = TWO_PI * pp.r0**2
    _energy_checks(res, "plane", pl.space, pl.cylinder, target)
    rr = knot.removable_singularity_check(pl)
    res.numbers["tail"] = pl.tail
    res.numbers["removability"] = {
        "a_coefficient": rr.a_coefficient, "a_coefficient_expected": rr.a_coefficient_expected,
        "pi_coefficient": math.pi, "a_fit_rel_residual": rr.a_fit_rel_residual,
        "decay_factor": rr.decay_factor, "constant_spread": rr.constant_spread,
        "linear_scalar": rr.linear_scalar, "radii": rr.radii, "mass": rr.mass}
    i3 = int(np.argmin(np.abs(rr.radii - 1e-3)))
    res.checks["a_fit"] = _check(rr.a_fit_rel_residual, "<=", 1e-6, 8)
    res.checks["linear_decay"] = _check(rr.decay_factor, "in", (80.0, 120.0), 8)
    res.checks["torus_coverage"] = _check(pl.limit_report["coverage"], ">=", 1.0, 8)
    res.checks["puncture_mass"] = _check(float(rr.mass[i3]), "<=", 1e-5, 6)
    order = np.argsort(rr.radii)
    res.checks["removability_mass_monotone"] = _check(float(np.min(np.diff(rr.mass[order]))), ">=", -1e-8, 6)
    lam0 = knot.plane_contact(model, pl.w).lam
    mass = lift.puncture_mass(pl.pushed, lam0, np.linspace(-1.5, min(60.0, float(p["s_max"])), 20))
    _mass_checks(res, "plane", mass)
    if p["residual"]:
        ss = [knot.s_for_radius(pl, r) for r in np.geomspace(0.1, 0.8 * pp.r0, 21)]
        grid = (np.array(ss), np.array([0.0, 0.3]))
        r1 = knot.holomorphy_residual_plane(pl, grid, tol["h"])
        r2 = knot.holomorphy_residual_plane(pl, grid, tol["h"] / 2)
        neg = knot.holomorphy_residual_plane(pl, grid, tol["h"], flip_last=True)
        res.numbers["plane_residual"] = {"max_R1": r1.max_R1, "max_R2": r1.max_R2,
                                         "ratio": r1.max_residual / r2.max_residual,
                                         "negative_control": neg.max_residual}
        res.checks["plane_residual_ratio"] = _check(r1.max_residual / r2.max_residual, "in", (3.5, 4.5))
        res.checks["plane_negative_control"] = _check(neg.max_residual, ">=", 0.1)


def _run_identities(cfg, out, res):
    p = cfg.params
    rng = cfg.rng()
    worst: dict = {}

    def note(key, value, mode=max):
        worst[key] = value if key not in worst else mode(worst[key], value)

    for n in p["n"]:
        j0 = knot.random_compatible_j0(n - 1, rng) if n > 1 else np.zeros((0, 0))
        w = knot.build_W_structures(n, j0, seed=int(rng.integers(0, 2**31)), n_points=int(p["n_points"]))
        model = knot.KnotModel(n, j0)
        lam0 = standard_contact_form(n)
        for _ in range(int(p["n_points"])):
            q = np.concatenate(([rng.uniform(0, TWO_PI), rng.uniform(0, TWO_PI)],
                                rng.uniform(-1.5, 1.5, 2 * (n - 1)), [rng.uniform(-2.0, 1.0)]))
            ph = knot.phi_pullback_check(w, q)
            note("phi_pullback", max(ph["lambda"], ph["angular"], ph["radial"]))
            note("phi_round_trip", ph["round_trip"])
            ir = w.identity_residuals(q[1:])
            note("j1_squared", ir["j1_squared"] / math.exp(4 * abs(q[-1])))
            note("metric_closed_form", ir["metric_closed_form"])
            note("volume_closed_form", ir["volume"])
            x = np.concatenate(([rng.uniform(0, TWO_PI)], rng.uniform(-1.5, 1.5, 2 * n)))
            ej = knot.extended_J_check(model, w, x)
            note("extended_J_conjugation", ej["conjugation"])
            note("extended_J_squared", ej["squared"])
            note("extended_J_tame", ej["tame_min_eig"], min)
            xl = x.copy()
            xl[-2:] = 0.0
            el = knot.extended_J_check(model, w, xl)
            note("locus_squared", el["squared"])
            note("locus_finite", float(el["finite"]), min)
            reeb = reeb_solve(lam0, x)
            note("reeb", max(abs(float(lam0(x) @ reeb) - 1.0), float(np.max(np.abs(reeb @ lam0.d(x))))))
            if n <= 3:
                note("contact_volume", abs(contact_volume(lam0, x, n)), min)
        if p["conservation"] and n >= 2:
            sp = knot.plane_space(w)
            g0 = w.g0()
            for _ in range(3):
                w0 = np.concatenate(([rng.uniform(0, TWO_PI)], rng.uniform(-0.5, 0.5, 2 * (n - 1)),
                                     [rng.uniform(-0.8, -0.2)]))
                sol = integrate(sp.grad_f, w0, (0.0, 30.0), rtol=1e-12, atol=1e-14)
                pn = np.array([math.sqrt(y[1:-1] @ g0 @ y[1:-1]) for y in sol.y])
                note("conservation", float(np.ptp(pn)))
                note("conservation_p_motion", float(np.max(np.ptp(sol.y[:, 1:-1], axis=0))), min)
    prm = spiral.SpiralParams()
    m = int(p["critical_grid"])
    S, T = np.meshgrid(np.linspace(-prm.delta, -1e-3, m), np.linspace(0, TWO_PI, m, endpoint=False),
                       indexing="ij")
    crit = float(np.min(spiral.critical_bound_scaled(S, T, prm)))
    worst["critical_min_unscaled"] = float(np.min(spiral.critical_bound(S, T, prm)))
    sv = rng.uniform(-prm.delta, -1e-3, int(p["spiral_points"]))
    tv = rng.uniform(0, TWO_PI, sv.size)
    gs, gt = spiral.grad_G(sv, tv, prm.c)
    G = spiral.eval_G(sv, tv, prm.c)
    ident = float(np.max(np.abs(sv**2 * gs + gt + G)))
    tmin, vmin = spiral.te_bound_minimum()
    worst.update({"critical_min": crit, "G_identity": ident, "te_bound_t": tmin, "te_bound_value": vmin})
    res.numbers.update(worst)
    c = res.checks
    c["phi_pullback"] = _check(worst["phi_pullback"], "<=", 1e-10, 7)
    c["phi_round_trip"] = _check(worst["phi_round_trip"], "<=", 1e-10, 7)
    c["j1_squared"] = _check(worst["j1_squared"], "<=", 1e-12, 7)
    c["metric_closed_form"] = _check(worst["metric_closed_form"], "<=", 1e-9, 7)
    c["extended_J_conjugation"] = _check(worst["extended_J_conjugation"], "<=", 1e-9, 7)
    c["extended_J_squared"] = _check(max(worst["extended_J_squared"], worst["locus_squared"]), "<=", 1e-9, 7)
    c["extended_J_finite_on_locus"] = _check(worst["locus_finite"], "==", 1.0, 7)
    c["extended_J_tame"] = _check(worst["extended_J_tame"], ">", 0.0)
    c["volume_closed_form"] = _check(worst["volume_closed_form"], "<=", 1e-9)
    c["reeb"] = _check(worst["reeb"], "<=", 1e-10)
    c["contact_volume"] = _check(worst["contact_volume"], ">", 0.0)
    if "conservation" in worst:
        c["conservation"] = _check(worst["conservation"], "<=", 1e-8, 9)
        c["conservation_nontrivial"] = _check(worst["conservation_p_motion"], ">", 1e-6, 9)
    c["critical_min"] = _check(crit, ">", 0.0, 2)
    c["G_identity"] = _check(ident, "<=", 1e-10, 2)
    c["te_bound_location"] = _check(abs(tmin + 1.0), "<=", 1e-6, 10)
    c["te_bound_value"] = _check(vmin, ">", 0.17, 10)
    res.numbers["te_bound_closed_form"] = 1.0 - 9.0 / (4.0 * math.e)


_RUNNERS = {"flow": _run_flow, "annulus-cylinder": _run_annulus, "plane": _run_plane,
            "identities": _run_identities, "energy": _run_energy}


# ------------------------------------------------------------------- suite


def load_manifest(path, overrides: Optional[dict] = None) -> list:
    """Parse a manifest: a list of configs, or {"defaults": {...}, "experiments": [...]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    defaults = {}
    if isinstance(data, dict):
        defaults = data.get("defaults", {})
        data = data.get("experiments", [])
    if not isinstance(data, list):
        raise ConfigError("experiments", "must be a list")
    cfgs = [apply_overrides(ExperimentConfig.from_dict(d, defaults), overrides or {}) for d in data]
    names = [c.name for c in cfgs]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError("name", f"duplicate experiment name {sorted(dup)[0]!r}")
    return cfgs


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Command-line flags win over file values."""
    for key in ("rtol", "band", "bins"):
        if overrides.get(key) is not None:
            v = overrides[key]
            if not v > 0:
                raise ConfigError(key, "must be positive")
            cfg.tolerances[key] = int(v) if key == "bins" else float(v)
    if overrides.get("seed") is not None:
        cfg.seed = int(overrides["seed"])
    if overrides.get("out") is not None:
        cfg.output_dir = str(overrides["out"])
    return cfg


def run_suite(configs, force_overwrite: bool = False, jobs: int = 1) -> SuiteReport:
    configs = list(configs)
    for cfg in configs:  # refuse before doing any work
        if cfg.out.exists() and any(cfg.out.iterdir()) and not force_overwrite:
            raise OutputExistsError(f"{cfg.out} exists; pass --force-overwrite to replace its contents")
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_experiment, configs, [force_overwrite] * len(configs)))
    else:
        results = [run_experiment(c, force_overwrite) for c in configs]
    return SuiteReport(results)
