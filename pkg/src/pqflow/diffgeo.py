"""Chart-level differential geometry: points, fields, forms, contact data.

Everything works in a single coordinate chart.  Covectors and vectors are
plain 1-D arrays in the coordinate basis; 2-forms are antisymmetric
matrices with ``w[i, j] = w(e_i, e_j)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

TWO_PI = 2.0 * math.pi
FD_STEP = 1e-5


class ContractViolation(ValueError):
    """An operation was called outside its precondition."""


class EvaluationDomainError(ValueError):
    """A field returned non-finite values near the requested point."""


class NotContactError(ValueError):
    """The 1-form is not contact at the requested point."""


# ---------------------------------------------------------------- points


@dataclass(frozen=True)
class ChartPoint:
    """Chart coordinates where some entries are angles mod 2*pi.

    ``lift`` holds continuous values (the ones integrators update);
    ``coords`` holds the canonical representatives in [0, 2*pi) for the
    angular entries and equals ``lift`` elsewhere.
    """

    lift: np.ndarray
    angular: tuple = ()

    def __post_init__(self):
        arr = np.array(self.lift, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "lift", arr)
        object.__setattr__(self, "angular", tuple(sorted(set(int(i) for i in self.angular))))
        for i in self.angular:
            if not 0 <= i < arr.size:
                raise ContractViolation(f"angular index {i} out of range")

    @property
    def coords(self) -> np.ndarray:
        out = np.array(self.lift)
        for i in self.angular:
            out[i] = canonical_angle(out[i])
        return out

    @property
    def dim(self) -> int:
        return self.lift.size

    def winding(self, i: int) -> int:
        """Integer k with lift[i] = coords[i] + 2*pi*k."""
        return int(round((self.lift[i] - self.coords[i]) / TWO_PI))

    def moved(self, delta) -> "ChartPoint":
        return ChartPoint(self.lift + np.asarray(delta, dtype=float), self.angular)


def canonical_angle(x: float) -> float:
    r = math.fmod(x, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    # fmod of a value just below a multiple of 2*pi can round up to 2*pi
    return 0.0 if r >= TWO_PI else r


def as_array(p) -> np.ndarray:
    """Continuous coordinates of a ChartPoint or array-like."""
    if isinstance(p, ChartPoint):
        return np.array(p.lift)
    return np.asarray(p, dtype=float)


# ---------------------------------------------------------------- fields


@dataclass(frozen=True)
class ScalarField:
    eval: Callable[[np.ndarray], float]
    differential: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, p):
        return float(self.eval(as_array(p)))

    def d(self, p) -> np.ndarray:
        x = as_array(p)
        if self.differential is None:
            return differential_fd(self.eval, x)
        return np.asarray(self.differential(x), dtype=float)


@dataclass(frozen=True)
class OneForm:
    eval: Callable[[np.ndarray], np.ndarray]
    d_closed_form: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, p) -> np.ndarray:
        return np.asarray(self.eval(as_array(p)), dtype=float)

    def d(self, p, h: float = FD_STEP) -> np.ndarray:
        if self.d_closed_form is not None:
            return np.asarray(self.d_closed_form(as_array(p)), dtype=float)
        return exterior_derivative_fd(self, p, h)

    def scaled(self, f: ScalarField) -> "OneForm":
        """The form e^f * self, with d(e^f l) = e^f (df ^ l + dl)."""

        def ev(x):
            return math.exp(f(x)) * self(x)

        def dd(x):
            lam = self(x)
            df = f.d(x)
            return math.exp(f(x)) * (np.outer(df, lam) - np.outer(lam, df) + self.d(x))

        return OneForm(ev, dd)


@dataclass(frozen=True)
class MetricField:
    g: Callable[[np.ndarray], np.ndarray]
    g_inv: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, p) -> np.ndarray:
        return np.asarray(self.g(as_array(p)), dtype=float)

    def inverse(self, p) -> np.ndarray:
        x = as_array(p)
        if self.g_inv is None:
            return np.linalg.inv(self.g(x))
        return np.asarray(self.g_inv(x), dtype=float)


@dataclass(frozen=True)
class AlmostComplexStructure:
    J: Callable[[np.ndarray], np.ndarray]

    def __call__(self, p) -> np.ndarray:
        return np.asarray(self.J(as_array(p)), dtype=float)


@dataclass(frozen=True)
class ContactData:
    """Contact form with Reeb field, projection onto xi, and J on xi.

    ``J_xi`` returns a matrix on the full tangent space whose action on
    vectors of xi is the complex structure; its value on the Reeb
    direction is irrelevant (callers always project first).
    """

    lam: OneForm
    reeb: Callable[[np.ndarray], np.ndarray]
    xi_projection: Callable[[np.ndarray], np.ndarray]
    J_xi: AlmostComplexStructure

    @classmethod
    def from_form(cls, lam: OneForm, J_xi: AlmostComplexStructure) -> "ContactData":
        def reeb(x):
            return reeb_solve(lam, x)

        def proj(x):
            return np.eye(len(x)) - np.outer(reeb_solve(lam, x), lam(x))

        return cls(lam, reeb, proj, J_xi)


# ------------------------------------------------------- finite differences


def _steps(x: np.ndarray, h: float) -> np.ndarray:
    return h * np.maximum(1.0, np.abs(x))


def differential_fd(fn: Callable[[np.ndarray], float], x, h: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    hs = _steps(x, h)
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = hs[i]
        out[i] = (fn(x + e) - fn(x - e)) / (2 * hs[i])
    if not np.all(np.isfinite(out)):
        raise EvaluationDomainError(f"non-finite differential near {x}")
    return out


def exterior_derivative_fd(form: OneForm, p, h: float = FD_STEP) -> np.ndarray:
    """Central-difference d(form) at p: ``(dw)_ij = d_i w_j - d_j w_i``."""
    x = as_array(p)
    hs = _steps(x, h)
    n = x.size
    jac = np.empty((n, n))  # jac[i, j] = d_i w_j
    for i in range(n):
        e = np.zeros(n)
        e[i] = hs[i]
        jac[i] = (form(x + e) - form(x - e)) / (2 * hs[i])
    if not np.all(np.isfinite(jac)):
        raise EvaluationDomainError(f"non-finite form values near {x}")
    return jac - jac.T


# ------------------------------------------------------------ wedge powers


@lru_cache(maxsize=None)
def _perm_tables(n: int):
    perms = np.array(list(itertools.permutations(range(2 * n + 1))), dtype=np.intp)
    # parity via cycle count
    signs = np.empty(len(perms))
    for k, p in enumerate(perms):
        seen = np.zeros(p.size, dtype=bool)
        parity = 0
        for i in range(p.size):
            if not seen[i]:
                j, length = i, 0
                while not seen[j]:
                    seen[j] = True
                    j = p[j]
                    length += 1
                parity += length - 1
        signs[k] = -1.0 if parity % 2 else 1.0
    return perms, signs


def contact_volume(lam: OneForm, p, n: int) -> float:
    """Value of lam ^ (d lam)^n on the coordinate basis at p."""
    x = as_array(p)
    if x.size != 2 * n + 1:
        raise ContractViolation(f"point has dimension {x.size}, expected {2 * n + 1}")
    if not 1 <= n <= 3:
        raise ContractViolation("contact_volume supports n = 1, 2, 3")
    return wedge_one_two(lam(x), lam.d(x), n)


def wedge_one_two(l: np.ndarray, w: np.ndarray, n: int) -> float:
    """(l ^ w^n)(e_0, ..., e_2n) by antisymmetrized expansion."""
    perms, signs = _perm_tables(n)
    terms = l[perms[:, 0]] * signs
    for k in range(n):
        terms = terms * w[perms[:, 2 * k + 1], perms[:, 2 * k + 2]]
    return float(terms.sum()) / 2.0**n


# ------------------------------------------------------------------ Reeb


def _augmented(omega: np.ndarray, l: np.ndarray) -> np.ndarray:
    m = l.size
    a = np.zeros((m + 1, m + 1))
    a[:m, :m] = omega.T
    a[:m, m] = l
    a[m, :m] = l
    return a


def _solve(a, b, x):
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NotContactError(f"degenerate contact data at {x}") from exc
    if np.linalg.cond(a) > 1e13:
        raise NotContactError(f"degenerate contact data at {x}")
    return sol


def reeb_solve(lam: OneForm, p) -> np.ndarray:
    """Reeb field: i_X d lam = 0 and lam(X) = 1."""
    x = as_array(p)
    l = lam(x)
    rhs = np.zeros(l.size + 1)
    rhs[-1] = 1.0
    return _solve(_augmented(lam.d(x), l), rhs, x)[:-1]


def hamiltonian_in_xi(lam: OneForm, f: ScalarField, p, reeb=None) -> np.ndarray:
    """The section X_f of xi with i_{X_f} d lam = -df + df(X_lam) lam."""
    x = as_array(p)
    l = lam(x)
    xl = reeb_solve(lam, x) if reeb is None else reeb
    df = f.d(x)
    rhs = np.append(-df + float(df @ xl) * l, 0.0)
    try:
        sol = np.linalg.solve(_augmented(lam.d(x), l), rhs)
    except np.linalg.LinAlgError as exc:
        raise ContractViolation(f"d lam degenerate on xi at {x}") from exc
    return sol[:-1]


def reeb_rescaled(contact: ContactData, f: ScalarField, p) -> np.ndarray:
    """Reeb field of e^f lam as e^{-f}(X_lam - X_f)."""
    x = as_array(p)
    xl = np.asarray(contact.reeb(x), dtype=float)
    xf = hamiltonian_in_xi(contact.lam, f, x, xl)
    return math.exp(-f(x)) * (xl - xf)


def rinvariant_extension(contact: ContactData, p) -> np.ndarray:
    """R-invariant J on R x M in the basis (d_a, coordinate basis)."""
    x = as_array(p)
    l = contact.lam(x)
    xl = np.asarray(contact.reeb(x), dtype=float)
    jbar = contact.J_xi(x) @ contact.xi_projection(x)
    m = l.size
    out = np.zeros((m + 1, m + 1))
    out[0, 1:] = -l
    out[1:, 0] = xl
    out[1:, 1:] = jbar
    return out


# --------------------------------------------------------- compatibility


@dataclass(frozen=True)
class CompatibilityReport:
    g: np.ndarray
    asymmetry: float
    min_eigenvalue: float
    symmetric: bool = field(init=False)
    positive_definite: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "symmetric", self.asymmetry <= 1e-10)
        object.__setattr__(self, "positive_definite", self.symmetric and self.min_eigenvalue > 0)

    @property
    def compatible(self) -> bool:
        return self.positive_definite


def compatibility_metric(omega: np.ndarray, J: np.ndarray) -> CompatibilityReport:
    """g = omega(., J .), i.e. g_ij = omega(e_i, J e_j)."""
    omega = np.asarray(omega, dtype=float)
    J = np.asarray(J, dtype=float)
    if np.max(np.abs(omega + omega.T), initial=0.0) > 1e-10:
        raise ContractViolation("omega is not antisymmetric")
    g = omega @ J
    asym = float(np.max(np.abs(g - g.T), initial=0.0))
    sym = 0.5 * (g + g.T)
    return CompatibilityReport(g, asym, float(np.linalg.eigvalsh(sym).min()))


# -------------------------------------------------------- standard forms


def alpha_covector(xy: np.ndarray) -> np.ndarray:
    """alpha_n = sum x_i dy_i - y_i dx_i on R^{2n}, coordinates (x1, y1, x2, y2, ...)."""
    xy = np.asarray(xy, dtype=float)
    out = np.empty_like(xy)
    out[0::2] = -xy[1::2]
    out[1::2] = xy[0::2]
    return out


def standard_omega(m: int, scale: float = 1.0) -> np.ndarray:
    """scale * sum dx_i ^ dy_i as a (2m x 2m) antisymmetric matrix."""
    w = np.zeros((2 * m, 2 * m))
    for i in range(m):
        w[2 * i, 2 * i + 1] = scale
        w[2 * i + 1, 2 * i] = -scale
    return w


def standard_j(m: int) -> np.ndarray:
    """j0 with j0 d_x = d_y and j0 d_y = -d_x in each pair."""
    j = np.zeros((2 * m, 2 * m))
    for i in range(m):
        j[2 * i + 1, 2 * i] = 1.0
        j[2 * i, 2 * i + 1] = -1.0
    return j


def alpha_form(n: int) -> OneForm:
    return OneForm(alpha_covector, lambda x, _w=standard_omega(n, 2.0): _w)


def prequant_form(beta: OneForm) -> OneForm:
    """lam = d theta + beta on S^1 x W with theta the first coordinate."""

    def ev(x):
        return np.concatenate(([1.0], beta(x[1:])))

    def dd(x):
        m = x.size
        out = np.zeros((m, m))
        out[1:, 1:] = beta.d(x[1:])
        return out

    return OneForm(ev, dd)


def standard_contact_form(n: int) -> OneForm:
    """lambda_0 = d theta + alpha_n on S^1 x R^{2n}."""
    return prequant_form(alpha_form(n))


def lifted_structure(beta: OneForm, j: AlmostComplexStructure) -> AlmostComplexStructure:
    """S^1-invariant lift of j to xi = ker(d theta + beta) on S^1 x W.

    For v in xi with base part w the image is -beta(jw) d_theta + jw.
    """

    def J(x):
        jw = j(x[1:])
        b = beta(x[1:])
        m = x.size
        out = np.zeros((m, m))
        out[1:, 1:] = jw
        out[0, 1:] = -(b @ jw)
        return out

    return AlmostComplexStructure(J)


def prequant_contact(beta: OneForm, j: AlmostComplexStructure, f: ScalarField | None = None) -> ContactData:
    """Contact data for e^f (d theta + beta) with the lifted structure.

    f is a function on W; the Reeb field uses the closed form
    e^{-f}(d_theta - lift(X_f)) only as a cross-check elsewhere, here it
    is solved directly.
    """
    lam = prequant_form(beta)
    if f is not None:
        ff = ScalarField(lambda x: f(x[1:]), lambda x: np.concatenate(([0.0], f.d(x[1:]))))
        lam = lam.scaled(ff)
    return ContactData.from_form(lam, lifted_structure(beta, j))
