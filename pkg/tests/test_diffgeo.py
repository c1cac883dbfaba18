import math

import numpy as np
import pytest

from pqflow.diffgeo import (
    TWO_PI, AlmostComplexStructure, ChartPoint, ContactData, ContractViolation, NotContactError,
    OneForm, ScalarField, alpha_form, canonical_angle, compatibility_metric, contact_volume,
    differential_fd, exterior_derivative_fd, prequant_contact, prequant_form, reeb_rescaled,
    reeb_solve, rinvariant_extension, standard_contact_form, standard_j, standard_omega,
)


def test_chart_point_lift_and_canonical():
    p = ChartPoint([1.0, -0.5 - 4 * math.pi, 7.0], angular=[1])
    assert 0 <= p.coords[1] < TWO_PI
    assert p.winding(1) == -3
    assert p.coords[0] == 1.0 and p.coords[2] == 7.0
    q = p.moved([0.0, 2 * TWO_PI, 0.0])
    assert q.winding(1) == -1
    assert canonical_angle(TWO_PI * (1 - 1e-17)) == 0.0
    with pytest.raises(ContractViolation):
        ChartPoint([0.0], angular=[3])


def test_exterior_derivative_examples():
    xdy = OneForm(lambda p: np.array([0.0, p[0]]))
    d = exterior_derivative_fd(xdy, [0.4, -1.2], 1e-4)
    assert abs(d[0, 1] - 1.0) < 1e-7 and abs(d[1, 0] + 1.0) < 1e-7
    dtheta = OneForm(lambda p: np.array([1.0, 0.0, 0.0]))
    assert np.max(np.abs(exterior_derivative_fd(dtheta, [0.3, 1.0, 2.0], 1e-4))) < 1e-7
    a1 = alpha_form(1)
    assert abs(exterior_derivative_fd(a1, [0.3, -0.7], 1e-4)[0, 1] - 2.0) < 1e-6


def test_closed_form_d_matches_fd_at_second_order(rng):
    # beta = sin(x) y^2 dx + x^3 cos(y) dy
    ev = lambda p: np.array([math.sin(p[0]) * p[1] ** 2, p[0] ** 3 * math.cos(p[1])])

    def dd(p):
        v = 3 * p[0] ** 2 * math.cos(p[1]) - 2 * math.sin(p[0]) * p[1]
        return np.array([[0.0, v], [-v, 0.0]])

    beta = OneForm(ev, dd)
    pts = rng.uniform(-1.5, 1.5, (100, 2))
    errs = []
    for h in (2e-2, 1e-2):
        errs.append(max(np.max(np.abs(exterior_derivative_fd(beta, p, h) - beta.d(p))) for p in pts))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_scalar_differential_second_order():
    f = lambda x: math.exp(x[0]) * math.sin(3 * x[1])
    exact = np.array([math.exp(0.2) * math.sin(-0.9), 3 * math.exp(0.2) * math.cos(-0.9)])
    e1 = np.max(np.abs(differential_fd(f, [0.2, -0.3], 1e-2) - exact))
    e2 = np.max(np.abs(differential_fd(f, [0.2, -0.3], 5e-3) - exact))
    assert 3.5 <= e1 / e2 <= 4.5


@pytest.mark.parametrize("n, vol", [(1, 2.0), (2, 8.0), (3, 48.0)])
def test_contact_volume_standard(n, vol, rng):
    lam = standard_contact_form(n)
    for _ in range(5):
        assert contact_volume(lam, rng.uniform(-2, 2, 2 * n + 1), n) == pytest.approx(vol, rel=1e-12)


def test_contact_volume_degenerate_and_dimension():
    dtheta = OneForm(lambda p: np.array([1.0, 0.0, 0.0]), lambda p: np.zeros((3, 3)))
    assert contact_volume(dtheta, [0.1, 0.2, 0.3], 1) == 0.0
    with pytest.raises(ContractViolation):
        contact_volume(dtheta, [0.1, 0.2], 1)
    with pytest.raises(NotContactError):
        reeb_solve(dtheta, [0.1, 0.2, 0.3])


def test_reeb_examples(rng):
    beta = alpha_form(1)
    lam = prequant_form(beta)
    for p in rng.uniform(-2, 2, (5, 3)):
        X = reeb_solve(lam, p)
        assert np.allclose(X, [1.0, 0.0, 0.0], atol=1e-12)
    two = OneForm(lambda p: np.array([2.0, 0.0, 0.0]), lambda p: np.zeros((3, 3)))
    # 2 d theta alone is not contact in dimension 3, so use 2 lambda_0
    two_l0 = OneForm(lambda p: 2 * lam(p), lambda p: 2 * lam.d(p))
    assert np.allclose(reeb_solve(two_l0, [0.0, 0.0, 0.0]), [0.5, 0.0, 0.0])
    assert two(np.zeros(3))[0] == 2.0


def _random_f(rng):
    a = rng.normal(size=3)
    k = rng.normal(size=3)
    ev = lambda x: 0.3 * math.sin(a @ x) + 0.2 * math.cos(k @ x)
    df = lambda x: 0.3 * math.cos(a @ x) * a - 0.2 * math.sin(k @ x) * k
    return ScalarField(ev, df)


def test_reeb_rescaled_matches_direct_solve(rng):
    jstd = AlmostComplexStructure(lambda w: standard_j(1))
    contact = prequant_contact(alpha_form(1), jstd)
    worst = 0.0
    for _ in range(20):
        f = _random_f(rng)
        p = rng.uniform(-1.5, 1.5, 3)
        direct = reeb_solve(contact.lam.scaled(f), p)
        worst = max(worst, np.max(np.abs(reeb_rescaled(contact, f, p) - direct)))
    assert worst <= 1e-8


def test_reeb_rescaled_constant_and_pullback(rng):
    jstd = AlmostComplexStructure(lambda w: standard_j(1))
    contact = prequant_contact(alpha_form(1), jstd)
    c = ScalarField(lambda x: 0.7, lambda x: np.zeros(3))
    p = np.array([0.2, 0.5, -0.4])
    assert np.allclose(reeb_rescaled(contact, c, p), math.exp(-0.7) * reeb_solve(contact.lam, p), atol=1e-12)
    # f pulled back from W: X = e^{-f}(d_theta - lift of X_f), whose d_theta part is
    # e^{-f}(1 + beta(X_f)) and base part -e^{-f} X_f with i_{X_f} d beta = -df
    fw = ScalarField(lambda w: w[0] * w[1] + 0.3 * w[0], lambda w: np.array([w[1] + 0.3, w[0]]))
    f = ScalarField(lambda x: fw(x[1:]), lambda x: np.concatenate(([0.0], fw.d(x[1:]))))
    X = reeb_rescaled(contact, f, p)
    w = p[1:]
    om = standard_omega(1, 2.0)
    Xf = np.linalg.solve(om.T, -fw.d(w))  # om(Xf, .) = -df
    lift_base = Xf
    lift_theta = -float(alpha_form(1)(w) @ Xf)
    expect = math.exp(-fw(w)) * (np.array([1.0, 0.0, 0.0]) - np.concatenate(([lift_theta], lift_base)))
    assert np.allclose(X, expect, atol=1e-9)


def test_contact_data_invariants(rng):
    jstd = AlmostComplexStructure(lambda w: standard_j(1))
    f = ScalarField(lambda w: math.atan(w[0]), lambda w: np.array([1 / (1 + w[0] ** 2), 0.0]))
    con = prequant_contact(alpha_form(1), jstd, f)
    for p in rng.uniform(-2, 2, (10, 3)):
        X = con.reeb(p)
        assert abs(con.lam(p) @ X - 1.0) <= 1e-10
        assert np.max(np.abs(X @ con.lam.d(p))) <= 1e-10
        P = con.xi_projection(p)
        assert np.allclose(P @ P, P, atol=1e-12) and np.allclose(P @ X, 0, atol=1e-12)


def test_rinvariant_extension(rng):
    lam0 = standard_contact_form(1)
    jlift = prequant_contact(alpha_form(1), AlmostComplexStructure(lambda w: standard_j(1)))
    for p in rng.uniform(-2, 2, (10, 3)):
        Jt = rinvariant_extension(jlift, p)
        Xl = reeb_solve(lam0, p)
        assert np.allclose(Jt @ Jt, -np.eye(4), atol=1e-12)
        assert np.array_equal(Jt[1:, 0], Xl)
        # restricted to xi_0 it is the lifted J
        P = jlift.xi_projection(p)
        Jxi = jlift.J_xi(p) @ P
        v = P @ rng.normal(size=3)
        assert np.allclose(Jt[1:, 1:] @ v, Jxi @ v, atol=1e-12)


def test_compatibility_examples():
    rep = compatibility_metric(standard_omega(1), standard_j(1))
    assert np.allclose(rep.g, np.eye(2)) and rep.compatible
    rep2 = compatibility_metric(standard_omega(1, 2.0), standard_j(1))
    assert np.allclose(rep2.g, 2 * np.eye(2))
    bad = compatibility_metric(standard_omega(1), -standard_j(1))
    assert not bad.compatible and bad.min_eigenvalue < 0
    A = np.eye(4)
    A[0, 2] = 1.0  # not symplectic, so A j A^-1 is not omega-compatible
    skew = compatibility_metric(standard_omega(2), A @ standard_j(2) @ np.linalg.inv(A))
    assert skew.asymmetry > 1e-10 and not skew.symmetric
    with pytest.raises(ContractViolation):
        compatibility_metric(np.eye(2), standard_j(1))


def test_contact_data_from_form_standard():
    con = ContactData.from_form(standard_contact_form(2), AlmostComplexStructure(lambda x: np.eye(5)))
    x = np.array([0.1, 0.2, -0.3, 0.4, 0.5])
    assert np.allclose(con.reeb(x), [1, 0, 0, 0, 0])
