"""Bivariate copula families used by the joint survival model.

Three families are supported: independence (``"N"``), Clayton (``"C0"``) and
Plackett (``"PL"``). Every family exposes the CDF, the density, the
h-functions (partial derivatives of the CDF) and their derivatives with
respect to ``u``, ``v`` and the dependence parameter ``theta``. The
derivative kernels (``cdf_derivs``, ``hfunc_derivs``, ``logpdf_derivs``) are
what the likelihood uses; the plain evaluators are convenience wrappers.

All functions broadcast over numpy arrays.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import DomainError, NumericalError, UnsupportedFamilyError

U_EPS = 1e-12
THETA_MIN = 1e-8
THETA_MAX = 1e8
ETA3_MIN = float(np.log(THETA_MIN))
ETA3_MAX = float(np.log(THETA_MAX))


class CopulaFamily(str, Enum):
    INDEPENDENCE = "N"
    CLAYTON = "C0"
    PLACKETT = "PL"

    @classmethod
    def parse(cls, value: "CopulaFamily | str") -> "CopulaFamily":
        if isinstance(value, cls):
            return value
        key = str(value).strip()
        for member in cls:
            if key == member.value or key.upper() == member.name:
                return member
        raise DomainError(f"unknown copula family {value!r}; expected one of N, C0, PL")

    @property
    def has_parameter(self) -> bool:
        return self is not CopulaFamily.INDEPENDENCE


def _check_theta(theta, family: CopulaFamily) -> None:
    if family is CopulaFamily.INDEPENDENCE:
        return
    th = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(th)) or np.any(th <= 0):
        raise DomainError(
            f"{family.name.title()} copula requires theta in (0, inf); got {theta!r}"
        )


def _scalarize(x, scalar: bool):
    return float(x) if scalar else x


def _is_scalar(*args) -> bool:
    return all(np.ndim(a) == 0 for a in args)


# --------------------------------------------------------------------------
# family kernels on interior points (u, v already clamped away from 0 and 1)
# --------------------------------------------------------------------------

def _clayton_core(u, v, theta):
    lu = np.log(u)
    lv = np.log(v)
    a = -theta * lu
    b = -theta * lv
    with np.errstate(over="ignore", invalid="ignore"):
        m = np.maximum(a, b)
        small = np.log1p(np.expm1(np.minimum(a, 1.0)) + np.expm1(np.minimum(b, 1.0)))
        big = m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))
        log_a = np.where(m < 1.0, small, big)
    ru = np.exp(a - log_a)
    rv = np.exp(b - log_a)
    return lu, lv, log_a, ru, rv


def _clayton_cdf(u, v, theta):
    lu, lv, log_a, ru, rv = _clayton_core(u, v, theta)
    c = np.exp(-log_a / theta)
    cu = c * ru / u
    cv = c * rv / v
    ct = c * (log_a / theta**2 + (ru * lu + rv * lv) / theta)
    return c, cu, cv, ct


def _clayton_hfunc(u, v, theta):
    lu, lv, log_a, ru, rv = _clayton_core(u, v, theta)
    h = np.exp(-(theta + 1.0) * lu - (1.0 / theta + 1.0) * log_a)
    hu = h * (theta + 1.0) * (ru - 1.0) / u
    hv = h * (theta + 1.0) * rv / v
    ht = h * (-lu + log_a / theta**2 + (1.0 / theta + 1.0) * (ru * lu + rv * lv))
    return h, hu, hv, ht


def _clayton_logpdf(u, v, theta):
    lu, lv, log_a, ru, rv = _clayton_core(u, v, theta)
    lc = np.log1p(theta) - (theta + 1.0) * (lu + lv) - (2.0 + 1.0 / theta) * log_a
    lcu = ((2.0 * theta + 1.0) * ru - (theta + 1.0)) / u
    lcv = ((2.0 * theta + 1.0) * rv - (theta + 1.0)) / v
    lct = (1.0 / (1.0 + theta) - lu - lv + log_a / theta**2
           + (2.0 + 1.0 / theta) * (ru * lu + rv * lv))
    return lc, lcu, lcv, lct


def _plackett_core(u, v, theta):
    eta = theta - 1.0
    s = u + v
    p = 1.0 + eta * s
    d = p * p - 4.0 * u * v * theta * eta
    sd = np.sqrt(d)
    return eta, s, p, d, sd


def _plackett_cdf(u, v, theta):
    eta, s, p, d, sd = _plackett_core(u, v, theta)
    # rationalised form 2uv*theta/(P + sqrt(D)) has no 1/(theta-1) singularity
    q = p + sd
    c = 2.0 * u * v * theta / q
    cu = 0.5 - (p - 2.0 * theta * v) / (2.0 * sd)
    cv = 0.5 - (p - 2.0 * theta * u) / (2.0 * sd)
    dd_dt = 2.0 * p * s - 4.0 * u * v * (2.0 * theta - 1.0)
    dq_dt = s + dd_dt / (2.0 * sd)
    ct = 2.0 * u * v / q - c * dq_dt / q
    return c, cu, cv, ct


def _plackett_hfunc(u, v, theta):
    eta, s, p, d, sd = _plackett_core(u, v, theta)
    n = p - 2.0 * theta * v
    h = 0.5 - n / (2.0 * sd)
    dd_du = 2.0 * p * eta - 4.0 * v * theta * eta
    dd_dv = 2.0 * p * eta - 4.0 * u * theta * eta
    dd_dt = 2.0 * p * s - 4.0 * u * v * (2.0 * theta - 1.0)
    denom = 2.0 * d * sd
    hu = -(eta * d - 0.5 * n * dd_du) / denom
    hv = -((eta - 2.0 * theta) * d - 0.5 * n * dd_dv) / denom
    ht = -((s - 2.0 * v) * d - 0.5 * n * dd_dt) / denom
    return h, hu, hv, ht


def _plackett_logpdf(u, v, theta):
    eta, s, p, d, sd = _plackett_core(u, v, theta)
    w = s - 2.0 * u * v
    num = 1.0 + eta * w
    lc = np.log(theta) + np.log(num) - 1.5 * np.log(d)
    dd_du = 2.0 * p * eta - 4.0 * v * theta * eta
    dd_dv = 2.0 * p * eta - 4.0 * u * theta * eta
    dd_dt = 2.0 * p * s - 4.0 * u * v * (2.0 * theta - 1.0)
    lcu = eta * (1.0 - 2.0 * v) / num - 1.5 * dd_du / d
    lcv = eta * (1.0 - 2.0 * u) / num - 1.5 * dd_dv / d
    lct = 1.0 / theta + w / num - 1.5 * dd_dt / d
    return lc, lcu, lcv, lct


def _indep_cdf(u, v, theta):
    z = np.zeros(np.broadcast(u, v, theta).shape)
    return u * v + z, v + z, u + z, z


def _indep_hfunc(u, v, theta):
    z = np.zeros(np.broadcast(u, v, theta).shape)
    return v + z, z, 1.0 + z, z


def _indep_logpdf(u, v, theta):
    z = np.zeros(np.broadcast(u, v, theta).shape)
    return z, z, z, z


_KERNELS = {
    CopulaFamily.INDEPENDENCE: (_indep_cdf, _indep_hfunc, _indep_logpdf),
    CopulaFamily.CLAYTON: (_clayton_cdf, _clayton_hfunc, _clayton_logpdf),
    CopulaFamily.PLACKETT: (_plackett_cdf, _plackett_hfunc, _plackett_logpdf),
}


def _clamp(x):
    return np.clip(x, U_EPS, 1.0 - U_EPS)


def _theta_arg(theta, family):
    if family is CopulaFamily.INDEPENDENCE:
        return np.asarray(1.0 if theta is None else theta, dtype=float)
    return np.asarray(theta, dtype=float)


# --------------------------------------------------------------------------
# derivative kernels with exact boundary handling
# --------------------------------------------------------------------------

def cdf_derivs(u, v, theta, family: CopulaFamily):
    """C(u, v) and its partials (dC/du, dC/dv, dC/dtheta).

    Arguments equal to exactly 0 or 1 are treated as boundaries: the copula
    boundary conditions give the value, and derivatives with respect to a
    boundary argument are returned as 0 (the caller never varies them).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    th = _theta_arg(theta, family)
    c, cu, cv, ct = _KERNELS[family][0](_clamp(u), _clamp(v), th)
    zero = (u <= 0.0) | (v <= 0.0)
    v_one = (v >= 1.0) & ~zero
    u_one = (u >= 1.0) & ~zero & ~v_one
    if np.any(zero | v_one | u_one):
        c = np.where(zero, 0.0, np.where(v_one, u, np.where(u_one, v, c)))
        cu = np.where(zero | u_one, 0.0, np.where(v_one, 1.0, cu))
        cv = np.where(zero | v_one, 0.0, np.where(u_one, 1.0, cv))
        ct = np.where(zero | v_one | u_one, 0.0, ct)
    return c, cu, cv, ct


def hfunc_derivs(u, v, theta, family: CopulaFamily):
    """h(u, v) = dC/du and its partials (dh/du, dh/dv, dh/dtheta).

    ``v`` exactly 0 or 1 gives h = 0 or 1 with zero derivatives; ``u`` is
    always clamped to the interior.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    th = _theta_arg(theta, family)
    h, hu, hv, ht = _KERNELS[family][1](_clamp(u), _clamp(v), th)
    lo = v <= 0.0
    hi = v >= 1.0
    if np.any(lo | hi):
        edge = lo | hi
        h = np.where(lo, 0.0, np.where(hi, 1.0, h))
        hu = np.where(edge, 0.0, hu)
        hv = np.where(edge, 0.0, hv)
        ht = np.where(edge, 0.0, ht)
    return h, hu, hv, ht


def hfunc_v_derivs(u, v, theta, family: CopulaFamily):
    """dC/dv and its partials (d/du, d/dv, d/dtheta); all families here are exchangeable."""
    h, hv, hu, ht = hfunc_derivs(v, u, theta, family)
    return h, hu, hv, ht


def logpdf_derivs(u, v, theta, family: CopulaFamily):
    """log c(u, v) and its partials, with u and v clamped to the interior."""
    u = _clamp(np.asarray(u, dtype=float))
    v = _clamp(np.asarray(v, dtype=float))
    return _KERNELS[family][2](u, v, _theta_arg(theta, family))


# --------------------------------------------------------------------------
# public evaluators
# --------------------------------------------------------------------------

def copula_cdf(u, v, theta, family):
    """Copula distribution function C(u, v; theta)."""
    family = CopulaFamily.parse(family)
    _check_theta(theta, family)
    scalar = _is_scalar(u, v, theta)
    return _scalarize(cdf_derivs(u, v, theta, family)[0], scalar)


def copula_density(u, v, theta, family):
    """Copula density c(u, v; theta); boundary arguments are clamped."""
    family = CopulaFamily.parse(family)
    _check_theta(theta, family)
    scalar = _is_scalar(u, v, theta)
    return _scalarize(np.exp(logpdf_derivs(u, v, theta, family)[0]), scalar)


def copula_partial_u(u, v, theta, family):
    """h-function dC/du, the conditional distribution of V given U = u."""
    family = CopulaFamily.parse(family)
    _check_theta(theta, family)
    scalar = _is_scalar(u, v, theta)
    return _scalarize(hfunc_derivs(u, v, theta, family)[0], scalar)


def copula_partial_v(u, v, theta, family):
    """h-function dC/dv, the conditional distribution of U given V = v."""
    family = CopulaFamily.parse(family)
    _check_theta(theta, family)
    scalar = _is_scalar(u, v, theta)
    return _scalarize(hfunc_v_derivs(u, v, theta, family)[0], scalar)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre_unit(n: int):
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[n]


def _plackett_tau_quad(theta: float, nodes: int) -> float:
    x, w = _gauss_legendre_unit(nodes)
    uu, vv = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w)
    c = _plackett_cdf(uu, vv, theta)[0]
    dens = np.exp(_plackett_logpdf(uu, vv, theta)[0])
    return 4.0 * float(np.sum(ww * c * dens)) - 1.0


def kendall_tau(theta, family, nodes: int = 64, tol: float = 1e-4) -> float:
    """Kendall's tau implied by ``theta``.

    Clayton uses theta / (theta + 2). Plackett has no closed form and is
    integrated as 4 * E[C(U, V)] - 1 on a tensor Gauss-Legendre grid; the
    result is cross-checked against a grid twice as fine and a
    NumericalError is raised when the two disagree by more than ``tol``.
    """
    family = CopulaFamily.parse(family)
    if family is CopulaFamily.INDEPENDENCE:
        return 0.0
    _check_theta(theta, family)
    theta = float(theta)
    if family is CopulaFamily.CLAYTON:
        return theta / (theta + 2.0)
    if theta == 1.0:
        return 0.0
    tau = _plackett_tau_quad(theta, nodes)
    check = _plackett_tau_quad(theta, 2 * nodes)
    if abs(tau - check) > tol:
        raise NumericalError(
            f"Plackett tau quadrature did not converge at theta={theta:g}: "
            f"achieved |delta|={abs(tau - check):.2e} > tol={tol:.0e}"
        )
    return check


def conditional_inverse(u1, w, theta, family):
    """Solve h(u1, u2) = w for u2 (conditional sampling of the second margin)."""
    family = CopulaFamily.parse(family)
    scalar = _is_scalar(u1, w, theta)
    u1 = np.asarray(u1, dtype=float)
    w = np.asarray(w, dtype=float)
    if family is CopulaFamily.INDEPENDENCE:
        return _scalarize(np.broadcast_to(w, np.broadcast(u1, w).shape).copy(), scalar)
    if family is CopulaFamily.PLACKETT:
        raise UnsupportedFamilyError("conditional_inverse is implemented for N and C0 only")
    _check_theta(theta, family)
    th = np.asarray(theta, dtype=float)
    u1 = _clamp(u1)
    w = _clamp(w)
    # log of x = expm1(a) * u1^-theta, kept in log space since both factors can overflow
    a = -th / (1.0 + th) * np.log(w)
    log_x = a + np.log(-np.expm1(-a)) - th * np.log(u1)
    u2 = np.exp(-np.logaddexp(0.0, log_x) / th)
    return _scalarize(u2, scalar)


def dependence_link(eta3):
    """theta = exp(eta3), clamped to [THETA_MIN, THETA_MAX]."""
    scalar = _is_scalar(eta3)
    th = np.exp(np.clip(np.asarray(eta3, dtype=float), ETA3_MIN, ETA3_MAX))
    return _scalarize(th, scalar)


def dependence_link_deriv(eta3):
    """d theta / d eta3: equals theta inside the clamp range and 0 where clamped."""
    scalar = _is_scalar(eta3)
    e = np.asarray(eta3, dtype=float)
    th = np.exp(np.clip(e, ETA3_MIN, ETA3_MAX))
    d = np.where((e > ETA3_MIN) & (e < ETA3_MAX), th, 0.0)
    return _scalarize(d, scalar)
