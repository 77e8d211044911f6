"""Mixed-censoring copula log-likelihood with gradient and Hessian.

Each record contributes one of four terms depending on which margins are
censored. With S_a, S_b the marginal survival at the lower and upper bound
of a censoring interval (S_a = 1 when the lower bound is 0 and S_b = 0 when
the upper bound is infinite):

* UU  log c(S1, S2) + log f1 + log f2
* CC  log[C(S1a, S2a) - C(S1a, S2b) - C(S1b, S2a) + C(S1b, S2b)]
* UC  log f1 + log[h_u(S1, S2a) - h_u(S1, S2b)]
* CU  log f2 + log[h_v(S1a, S2) - h_v(S1b, S2)]

Everything is computed through seven per-record quantities q (see
``model.Q_*``), so the gradient is J^T dl/dq. Second derivatives in q are
obtained by central differences of the analytic q-gradient, which is cheap
because q is low-dimensional and record-local.
"""

from __future__ import annotations

import numpy as np

from .copulas import (CopulaFamily, cdf_derivs, dependence_link, dependence_link_deriv,
                      hfunc_derivs, hfunc_v_derivs, logpdf_derivs)
from .errors import ConfigError, NumericalError
from .margins import link_eval
from .model import (N_Q, Q_DETA_A1, Q_DETA_A2, Q_ETA3, Q_ETA_A1, Q_ETA_A2, Q_ETA_B1,
                    Q_ETA_B2, ModelDesign)

_FD_COLS = {
    "UU": (Q_ETA_A1, Q_ETA_A2, Q_ETA3),
    "CC": (Q_ETA_A1, Q_ETA_B1, Q_ETA_A2, Q_ETA_B2, Q_ETA3),
    "UC": (Q_ETA_A1, Q_ETA_A2, Q_ETA_B2, Q_ETA3),
    "CU": (Q_ETA_A1, Q_ETA_B1, Q_ETA_A2, Q_ETA3),
}


class _Group:
    """Static per-case data for one group of records."""

    def __init__(self, kind: str, idx: np.ndarray, design: ModelDesign):
        self.kind = kind
        self.idx = idx
        m1, m2 = design.margins
        self.a0 = (m1.a_zero[idx], m2.a_zero[idx])
        self.binf = (m1.b_inf[idx], m2.b_inf[idx])
        self.family = design.family
        self.links = design.links
        cols = list(_FD_COLS[kind])
        if not self.family.has_parameter:
            cols.remove(Q_ETA3)
        # drop directions that never matter for this group
        for m, (qa, qb) in enumerate(((Q_ETA_A1, Q_ETA_B1), (Q_ETA_A2, Q_ETA_B2))):
            if qa in cols and kind[m] == "C" and np.all(self.a0[m]):
                cols.remove(qa)
            if qb in cols and np.all(self.binf[m]):
                cols.remove(qb)
        self.fd_cols = cols
        self._tiled = {1: (self.a0, self.binf)}

    def masks(self, reps: int):
        if reps not in self._tiled:
            self._tiled[reps] = (tuple(np.tile(a, reps) for a in self.a0),
                                 tuple(np.tile(b, reps) for b in self.binf))
        return self._tiled[reps]


def _censored_margin(eta_a, eta_b, a0, binf, link):
    sa, dsa, _, _ = link_eval(eta_a, link)
    sb, dsb, _, _ = link_eval(eta_b, link)
    sa = np.where(a0, 1.0, sa)
    dsa = np.where(a0, 0.0, dsa)
    sb = np.where(binf, 0.0, sb)
    dsb = np.where(binf, 0.0, dsb)
    return sa, dsa, sb, dsb


def _masked(fn, u, v, th, family, need):
    """Evaluate a copula kernel only where ``need`` is True (zeros elsewhere)."""
    out = [np.zeros_like(u) for _ in range(4)]
    if np.all(need):
        return fn(u, v, th, family)
    if np.any(need):
        res = fn(u[need], v[need], th[need], family)
        for o, r in zip(out, res):
            o[need] = r
    return out


def _group_terms(g: _Group, q: np.ndarray, reps: int = 1):
    """Log-likelihood contributions and their q-gradient for one group.

    ``q`` may hold ``reps`` stacked copies of the group's records.
    """
    a0, binf = g.masks(reps)
    fam = g.family
    l1, l2 = g.links
    m = q.shape[0]
    gq = np.zeros((m, N_Q))
    if fam.has_parameter:
        th = dependence_link(q[:, Q_ETA3])
        dth = dependence_link_deriv(q[:, Q_ETA3])
    else:
        th = np.ones(m)
        dth = np.zeros(m)
    th = np.asarray(th, dtype=float)
    dth = np.asarray(dth, dtype=float)

    if g.kind == "UU":
        s1, ds1, lm1, dlm1 = link_eval(q[:, Q_ETA_A1], l1)
        s2, ds2, lm2, dlm2 = link_eval(q[:, Q_ETA_A2], l2)
        lc, lcu, lcv, lct = logpdf_derivs(s1, s2, th, fam)
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = lc + lm1 + np.log(q[:, Q_DETA_A1]) + lm2 + np.log(q[:, Q_DETA_A2])
            gq[:, Q_DETA_A1] = 1.0 / q[:, Q_DETA_A1]
            gq[:, Q_DETA_A2] = 1.0 / q[:, Q_DETA_A2]
        gq[:, Q_ETA_A1] = lcu * ds1 + dlm1
        gq[:, Q_ETA_A2] = lcv * ds2 + dlm2
        gq[:, Q_ETA3] = lct * dth
        return ll, gq

    if g.kind == "CC":
        s1a, d1a, s1b, d1b = _censored_margin(q[:, Q_ETA_A1], q[:, Q_ETA_B1], a0[0], binf[0], l1)
        s2a, d2a, s2b, d2b = _censored_margin(q[:, Q_ETA_A2], q[:, Q_ETA_B2], a0[1], binf[1], l2)
        f1b, f2b = ~binf[0], ~binf[1]
        caa = cdf_derivs(s1a, s2a, th, fam)
        cab = _masked(cdf_derivs, s1a, s2b, th, fam, f2b)
        cba = _masked(cdf_derivs, s1b, s2a, th, fam, f1b)
        cbb = _masked(cdf_derivs, s1b, s2b, th, fam, f1b & f2b)
        F = caa[0] - cab[0] - cba[0] + cbb[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = np.log(F)
            inv = 1.0 / F
        gq[:, Q_ETA_A1] = (caa[1] - cab[1]) * d1a * inv
        gq[:, Q_ETA_B1] = (cbb[1] - cba[1]) * d1b * inv
        gq[:, Q_ETA_A2] = (caa[2] - cba[2]) * d2a * inv
        gq[:, Q_ETA_B2] = (cbb[2] - cab[2]) * d2b * inv
        gq[:, Q_ETA3] = (caa[3] - cab[3] - cba[3] + cbb[3]) * dth * inv
        return ll, gq

    if g.kind == "UC":
        s1, ds1, lm1, dlm1 = link_eval(q[:, Q_ETA_A1], l1)
        s2a, d2a, s2b, d2b = _censored_margin(q[:, Q_ETA_A2], q[:, Q_ETA_B2], a0[1], binf[1], l2)
        ha = hfunc_derivs(s1, s2a, th, fam)
        hb = _masked(hfunc_derivs, s1, s2b, th, fam, ~binf[1])
        L = ha[0] - hb[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = lm1 + np.log(q[:, Q_DETA_A1]) + np.log(L)
            inv = 1.0 / L
            gq[:, Q_DETA_A1] = 1.0 / q[:, Q_DETA_A1]
        gq[:, Q_ETA_A1] = (ha[1] - hb[1]) * ds1 * inv + dlm1
        gq[:, Q_ETA_A2] = ha[2] * d2a * inv
        gq[:, Q_ETA_B2] = -hb[2] * d2b * inv
        gq[:, Q_ETA3] = (ha[3] - hb[3]) * dth * inv
        return ll, gq

    # CU
    s2, ds2, lm2, dlm2 = link_eval(q[:, Q_ETA_A2], l2)
    s1a, d1a, s1b, d1b = _censored_margin(q[:, Q_ETA_A1], q[:, Q_ETA_B1], a0[0], binf[0], l1)
    va = hfunc_v_derivs(s1a, s2, th, fam)
    vb = _masked(hfunc_v_derivs, s1b, s2, th, fam, ~binf[0])
    L = va[0] - vb[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = lm2 + np.log(q[:, Q_DETA_A2]) + np.log(L)
        inv = 1.0 / L
        gq[:, Q_DETA_A2] = 1.0 / q[:, Q_DETA_A2]
    gq[:, Q_ETA_A2] = (va[2] - vb[2]) * ds2 * inv + dlm2
    gq[:, Q_ETA_A1] = va[1] * d1a * inv
    gq[:, Q_ETA_B1] = -vb[1] * d1b * inv
    gq[:, Q_ETA3] = (va[3] - vb[3]) * dth * inv
    return ll, gq


def _group_hessian_q(g: _Group, q: np.ndarray, gq: np.ndarray, step: float = 1e-5):
    """Per-record second derivatives in q (m, 7, 7), symmetrised."""
    m = q.shape[0]
    Hq = np.zeros((m, N_Q, N_Q))
    cols = g.fd_cols
    if cols:
        nc = len(cols)
        big = np.tile(q, (2 * nc, 1)).reshape(2 * nc, m, N_Q)
        hs = np.empty((nc, m))
        for i, k in enumerate(cols):
            h = step * (1.0 + np.abs(q[:, k]))
            hs[i] = h
            big[2 * i, :, k] += h
            big[2 * i + 1, :, k] -= h
        gb = _group_terms(g, big.reshape(-1, N_Q), 2 * nc)[1].reshape(2 * nc, m, N_Q)
        for i, k in enumerate(cols):
            Hq[:, k, :] = (gb[2 * i] - gb[2 * i + 1]) / (2.0 * hs[i][:, None])
    Hq = 0.5 * (Hq + Hq.transpose(0, 2, 1))
    # entries linking the log-density terms are analytic
    for k in (Q_DETA_A1, Q_DETA_A2):
        if np.any(gq[:, k] != 0.0):
            Hq[:, k, :] = 0.0
            Hq[:, :, k] = 0.0
            Hq[:, k, k] = -gq[:, k] ** 2
    return Hq


class Likelihood:
    """Log-likelihood of a ModelDesign as a function of the coefficient vector."""

    def __init__(self, design: ModelDesign):
        self.design = design
        self.groups = [_Group(k, idx, design) for k, idx in design.groups.items() if idx.size]

    @property
    def n_coef(self) -> int:
        return self.design.n_coef

    def record_loglik(self, delta) -> np.ndarray:
        q, _ = self.design.predictors(delta)
        out = np.empty(self.design.n)
        with np.errstate(all="ignore"):
            for g in self.groups:
                out[g.idx] = _group_terms(g, q[g.idx])[0]
        return out

    def loglik(self, delta, strict: bool = True) -> float:
        """Total log-likelihood.

        With ``strict`` a non-finite contribution raises NumericalError naming
        the first offending record; otherwise -inf is returned.
        """
        ll = self.record_loglik(delta)
        bad = ~np.isfinite(ll)
        if np.any(bad):
            if strict:
                i = int(np.flatnonzero(bad)[0])
                raise NumericalError(f"non-finite log-likelihood contribution at record {i}")
            return -np.inf
        return float(ll.sum())

    def evaluate(self, delta, order: int = 2):
        """(loglik, gradient, Hessian) up to the requested order.

        Returns -inf (and None derivatives) if any contribution is non-finite.
        """
        d = self.design
        q, J = d.predictors(delta)
        ll = np.empty(d.n)
        gq = np.zeros((d.n, N_Q))
        # non-finite values are detected below, so silence the floating-point warnings
        with np.errstate(all="ignore"):
            for g in self.groups:
                ll[g.idx], gq[g.idx] = _group_terms(g, q[g.idx])
        if not np.all(np.isfinite(ll)):
            return -np.inf, None, None
        total = float(ll.sum())
        if order == 0:
            return total, None, None
        grad = gq.reshape(-1) @ J.reshape(-1, J.shape[2])
        if order == 1:
            return total, grad, None
        Hq = np.zeros((d.n, N_Q, N_Q))
        for g in self.groups:
            Hq[g.idx] = _group_hessian_q(g, q[g.idx], gq[g.idx])
        W = J.shape[2]
        H = J.reshape(-1, W).T @ np.matmul(Hq, J).reshape(-1, W)
        # second derivative of exp(r_j) in r_j equals its first derivative
        for rs in d.raw_slices():
            j = np.arange(rs.start + 1, rs.stop)
            H[j, j] += grad[j]
        H = 0.5 * (H + H.T)
        return total, grad, H

    def gradient(self, delta) -> np.ndarray:
        total, grad, _ = self.evaluate(delta, order=1)
        if grad is None:
            raise NumericalError("gradient requested at a point with non-finite log-likelihood")
        return grad

    def hessian(self, delta) -> np.ndarray:
        total, _, H = self.evaluate(delta, order=2)
        if H is None:
            raise NumericalError("Hessian requested at a point with non-finite log-likelihood")
        return H

    def penalized(self, delta, lambdas) -> float:
        S = self.design.penalty_matrix(lambdas)
        delta = np.asarray(delta, dtype=float)
        return self.loglik(delta) - 0.5 * float(delta @ S @ delta)

    def fd_hessian(self, delta, step: float = 1e-5) -> np.ndarray:
        """Central-difference Hessian of the full coefficient vector (test oracle)."""
        delta = np.asarray(delta, dtype=float)
        W = delta.size
        H = np.zeros((W, W))
        for j in range(W):
            h = step * (1.0 + abs(delta[j]))
            e = np.zeros(W)
            e[j] = h
            H[j] = (self.gradient(delta + e) - self.gradient(delta - e)) / (2.0 * h)
        return 0.5 * (H + H.T)


def loglik(design: ModelDesign, delta) -> float:
    return Likelihood(design).loglik(delta)


def penalized_loglik(design: ModelDesign, delta, lambdas) -> float:
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam < 0):
        raise ConfigError("smoothing parameters must be non-negative")
    return Likelihood(design).penalized(delta, lambdas)
