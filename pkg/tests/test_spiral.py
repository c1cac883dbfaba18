import math

import numpy as np
import pytest

from pqflow import spiral
from pqflow.diffgeo import differential_fd

P = spiral.SpiralParams()


def test_eta_plateaus_and_monotone():
    d = P.delta
    assert spiral.eta(-2 * d) == 0.0
    assert spiral.eta(0.0) == 1.0
    mid = spiral.eta(-0.75 * d)
    assert 0 < mid < 1
    assert spiral.eta(-0.75 * d + d / 100) > spiral.eta(-0.75 * d - d / 100)
    s = np.linspace(-1.5, 0.5, 2001)
    assert np.all(np.diff(spiral.eta(s)) >= 0)
    e0, e1, e2 = spiral.eta_derivs(s)
    assert np.all(e1 >= 0)
    h = 1e-5
    for x in (-0.9, -0.75, -0.6):
        fd = (spiral.eta(x + h) - spiral.eta(x - h)) / (2 * h)
        assert abs(fd - spiral.eta_derivs(x)[1]) < 1e-7
        fd2 = (spiral.eta_derivs(x + h)[1] - spiral.eta_derivs(x - h)[1]) / (2 * h)
        assert abs(fd2 - spiral.eta_derivs(x)[2]) < 1e-5


def test_G_values_and_bounds():
    assert spiral.eval_G(0.5, 1.3) == 0.0
    assert spiral.eval_G(-0.25, 0.0) == pytest.approx(math.exp(-4) * (math.sin(-4) - 1.25), abs=1e-12)
    assert spiral.eval_G(-0.25, 0.0) == pytest.approx(-0.0090333, abs=1e-6)
    g = spiral.eval_G(-1.0, 0.0)
    # e^{-1}(sin(-1) - 5/4) evaluates to -0.7694092
    assert g == pytest.approx(-0.7694092, abs=1e-6)
    assert -0.8276 <= g <= -0.0920


def test_grad_G_examples():
    gs, gt = spiral.grad_G(-1.0, 0.0)
    assert gs == pytest.approx(0.5707, abs=1e-3) and gt == pytest.approx(0.1988, abs=1e-3)
    assert (-1.0) ** 2 * gs + gt == pytest.approx(-spiral.eval_G(-1.0, 0.0), abs=1e-12)
    assert (-1.0) ** 2 * gs + gt == pytest.approx(0.7695, abs=1e-4)
    fd = differential_fd(lambda x: spiral.eval_G(x[0], x[1]), [-0.5, math.pi], 1e-6)
    assert np.allclose(fd, spiral.grad_G(-0.5, math.pi), atol=1e-6)
    with pytest.raises(spiral.DomainError):
        spiral.grad_G(0.1, 0.0)


def test_directional_identity(rng):
    s = rng.uniform(-5, -1e-2, 10_000)
    t = rng.uniform(0, 2 * math.pi, s.size)
    gs, gt = spiral.grad_G(s, t)
    assert np.max(np.abs(s**2 * gs + gt + spiral.eval_G(s, t))) <= 1e-10


def test_F_branches_and_bounds(rng):
    d = P.delta
    assert spiral.eval_F(-2 * d, 0.4) == -2 * d
    assert spiral.eval_F(1.0, 0.4) == 0.0
    assert spiral.eval_F(-0.25, 0.0) == pytest.approx(spiral.eval_G(-0.25, 0.0), abs=1e-15)
    s = rng.uniform(-5, -1e-3, 10_000)
    t = rng.uniform(0, 2 * math.pi, s.size)
    F = spiral.eval_F(s, t)
    assert np.all(s <= F) and np.all(F <= -0.25 * np.exp(1 / s))
    assert np.all(F < 0)


def test_F_derivatives_match_fd(rng):
    for s, t in zip(rng.uniform(-1.3, -0.1, 20), rng.uniform(0, 6.28, 20)):
        fd = differential_fd(lambda x: spiral.eval_F(x[0], x[1]), [s, t], 1e-6)
        assert np.allclose(fd, spiral.dF(s, t), atol=1e-6, rtol=1e-6)
        fss, fst, ftt = spiral.hessian_F(s, t)
        fd_s = differential_fd(lambda x: spiral.dF(x[0], x[1])[0], [s, t], 1e-6)
        fd_t = differential_fd(lambda x: spiral.dF(x[0], x[1])[1], [s, t], 1e-6)
        scale = max(1.0, abs(fss))
        assert abs(fd_s[0] - fss) < 1e-5 * scale and abs(fd_s[1] - fst) < 1e-5 * scale
        assert abs(fd_t[1] - ftt) < 1e-5 * scale


def test_critical_bound():
    d = P.delta
    assert spiral.critical_bound(-2 * d, 1.0) == pytest.approx(4 * d * d)
    assert spiral.critical_bound(-0.25, 0.0) == pytest.approx(-spiral.eval_G(-0.25, 0.0), abs=1e-12)
    assert spiral.critical_bound(-0.25, 0.0) == pytest.approx(0.0090333, abs=1e-6)
    S, T = np.meshgrid(np.linspace(-d, -1e-3, 200), np.linspace(0, 2 * np.pi, 200, endpoint=False))
    assert np.min(spiral.critical_bound_scaled(S, T)) > 0
    live = S < -0.01
    raw = spiral.critical_bound(S[live], T[live])
    assert np.allclose(raw * np.exp(-1 / S[live]), spiral.critical_bound_scaled(S[live], T[live]), rtol=1e-12)


def test_annulus_profile_and_map(rng):
    for phi in (0.0, 2.0):
        assert spiral.annulus_profile(-0.5, phi) == pytest.approx(-0.5, abs=1e-15)
    assert spiral.annulus_profile(0.2, 1.0) == 0.0
    assert spiral.annulus_profile(-1.2, 1.0) == -1.0
    ap = spiral.AnnulusParams(1.0, 2.0)
    assert np.allclose(spiral.annulus_map_p(-1.0, 0.0, ap), (1.0, 0.0))
    assert np.allclose(spiral.annulus_map_p(0.0, math.pi / 2, ap), (0.0, 2.0), atol=1e-15)
    rho = rng.uniform(-3, 2, 100)
    phi = rng.uniform(0, 2 * math.pi, 100)
    x, y = spiral.annulus_map_p(rho, phi, ap)
    r2, p2 = spiral.annulus_map_p_inv(x, y, ap)
    assert np.max(np.abs(r2 - rho)) < 1e-12
    assert np.max(np.abs(np.angle(np.exp(1j * (p2 - phi))))) < 1e-12
    with pytest.raises(spiral.DomainError):
        spiral.annulus_map_p_inv(0.0, 0.0, ap)


def test_ambient_F():
    ap = spiral.AnnulusParams(1.0, 2.0)
    assert spiral.ambient_F(np.zeros(4), ap) == -1.0
    assert spiral.ambient_F(np.array([0.3, -0.2, 0.0, 2.0]), ap) == pytest.approx(0.0, abs=1e-15)
    assert spiral.ambient_F(np.array([0.5, 0.0]), ap) == -1.0
    x = np.array([0.7, 1.1])
    fd = differential_fd(lambda v: spiral.ambient_F(v, ap), x, 1e-6)
    assert np.allclose(fd, spiral.ambient_F_d(x, ap), atol=1e-6)


def test_plane_profile():
    pp = spiral.PlaneParams(r0=1.7)
    l0 = math.log(1.7)
    assert spiral.plane_profile(0.3, None, l0 + 0.5, pp) == pytest.approx(2 * l0)
    assert spiral.plane_profile(0.3, None, l0 - 2, pp) == pytest.approx(2 * (l0 - 2))
    one = spiral.PlaneParams(r0=1.0)
    assert spiral.plane_profile(0.0, None, -0.25, one) == pytest.approx(-0.0180666, abs=1e-5)


def test_two_sided_profile():
    eps = 0.4
    for t in (0.0, 1.0):
        assert spiral.two_sided_profile(0.75 * eps, t, eps) == pytest.approx(-0.75 * eps)
        assert spiral.two_sided_profile(-0.75 * eps, t, eps) == pytest.approx(-0.75 * eps)
    s, t = 0.13, 0.7
    assert spiral.two_sided_profile(s, t, eps) == spiral.two_sided_profile(-s, t + math.pi, eps)
    prm = spiral.SpiralParams(delta=eps / 2)
    assert spiral.two_sided_profile(-eps / 8, 0.0, eps) == spiral.eval_F(-eps / 8, 0.0, prm)


def test_te_bound_minimum():
    t, v = spiral.te_bound_minimum()
    assert abs(t + 1) <= 1e-6
    assert v == pytest.approx(1 - 9 / (4 * math.e), abs=1e-12)
    assert v > 0.17


def test_params_validation():
    with pytest.raises(ValueError):
        spiral.SpiralParams(delta=0)
    with pytest.raises(ValueError):
        spiral.SpiralParams(c=1.5)
    with pytest.raises(ValueError):
        spiral.AnnulusParams(2.0, 1.0)
    with pytest.raises(ValueError):
        spiral.PlaneParams(r0=-1)
    assert P.sandwich == (1.125, 1.375)
