"""Model specification and its binding to a dataset."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .copulas import CopulaFamily
from .data import SurvivalDataset
from .errors import ConfigError
from .margins import MonotoneSplineConfig, Predictor, PredictorSpec, SurvivalLink

# per-record predictor quantities, in this column order
Q_ETA_A1, Q_DETA_A1, Q_ETA_B1, Q_ETA_A2, Q_DETA_A2, Q_ETA_B2, Q_ETA3 = range(7)
N_Q = 7


@dataclass
class ModelSpec:
    copula: CopulaFamily = CopulaFamily.CLAYTON
    links: tuple[SurvivalLink, SurvivalLink] = (SurvivalLink.PH, SurvivalLink.PO)
    eta1: PredictorSpec = field(default_factory=lambda: PredictorSpec(baseline=MonotoneSplineConfig()))
    eta2: PredictorSpec = field(default_factory=lambda: PredictorSpec(baseline=MonotoneSplineConfig()))
    eta3: PredictorSpec = field(default_factory=PredictorSpec)

    def __post_init__(self):
        self.copula = CopulaFamily.parse(self.copula)
        self.links = tuple(SurvivalLink.parse(x) for x in self.links)
        if len(self.links) != 2:
            raise ConfigError("exactly two survival links are required")
        for label, eta in (("eta1", self.eta1), ("eta2", self.eta2)):
            if eta.baseline is None:
                raise ConfigError(f"{label} must include a baseline function of time")
        if self.eta3.baseline is not None:
            raise ConfigError("eta3 must not include a baseline function of time")

    @classmethod
    def simple(cls, copula="C0", links=("PH", "PO"), linear1=(), linear2=(), linear3=(),
               n_basis: int = 10) -> "ModelSpec":
        base = MonotoneSplineConfig(n_basis=n_basis)
        return cls(copula, tuple(links),
                   PredictorSpec(baseline=base, linear=list(linear1)),
                   PredictorSpec(baseline=base, linear=list(linear2)),
                   PredictorSpec(linear=list(linear3)))

    def to_dict(self) -> dict:
        return {"copula": self.copula.value, "links": [l.value for l in self.links],
                "eta1": self.eta1.to_dict(), "eta2": self.eta2.to_dict(),
                "eta3": self.eta3.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        unknown = set(d) - {"copula", "links", "eta1", "eta2", "eta3"}
        if unknown:
            raise ConfigError(f"unknown model keys {sorted(unknown)}")
        default_margin = [{"type": "baseline"}]
        return cls(d.get("copula", "C0"), tuple(d.get("links", ("PH", "PO"))),
                   PredictorSpec.from_dict(d.get("eta1", default_margin)),
                   PredictorSpec.from_dict(d.get("eta2", default_margin)),
                   PredictorSpec.from_dict(d.get("eta3", [{"type": "intercept"}])))


@dataclass
class GlobalBlock:
    label: str
    cols: slice
    penalty: np.ndarray
    rank: int


class MarginArrays:
    """Fixed per-record design pieces of one margin."""

    def __init__(self, pred: Predictor, data: SurvivalDataset, m: int):
        st = data.status[:, m]
        lo, up = data.lower[:, m], data.upper[:, m]
        n = data.n
        self.unc = st == "U"
        self.a_zero = (~self.unc) & (lo <= 0)
        self.b_inf = (~self.unc) & np.isposinf(up)
        k = pred.n_base
        a_t = np.where(self.a_zero, np.nan, lo)
        b_t = np.where(self.unc | self.b_inf, np.nan, up)
        self.bc_a = np.zeros((n, k))
        self.dbc_a = np.zeros((n, k))
        self.bc_b = np.zeros((n, k))
        ia = ~self.a_zero
        if ia.any():
            bc, dbc, _ = pred.baseline.evaluate(a_t[ia])
            self.bc_a[ia] = bc
            self.dbc_a[ia] = np.where(self.unc[ia, None], dbc, 0.0)
        ib = ~(self.unc | self.b_inf)
        if ib.any():
            self.bc_b[ib] = pred.baseline.evaluate(b_t[ib])[0]
        self.xc = pred.covariate_design(data.X)


class ModelDesign:
    """A ModelSpec bound to a dataset: coefficient layout, bases, penalties.

    Parameter vector layout is (beta1, beta2, beta3) with slices ``sl[0..2]``.
    """

    def __init__(self, spec: ModelSpec, data: SurvivalDataset):
        self.spec = spec
        self.data = data
        self.family = spec.copula
        self.links = spec.links
        names = data.covariate_names
        self.pred = [
            Predictor(spec.eta1, data.X, names, data.finite_times(0), "eta1"),
            Predictor(spec.eta2, data.X, names, data.finite_times(1), "eta2"),
            Predictor(spec.eta3 if self.family.has_parameter else PredictorSpec(intercept=False),
                      data.X, names, None, "eta3"),
        ]
        sizes = [p.n_coef for p in self.pred]
        offs = np.cumsum([0] + sizes)
        self.sl = [slice(int(offs[i]), int(offs[i + 1])) for i in range(3)]
        self.n_coef = int(offs[-1])
        self.coef_names = sum((p.coef_names for p in self.pred), [])
        self.blocks: list[GlobalBlock] = []
        for i, p in enumerate(self.pred):
            base = self.sl[i].start
            for b in p.blocks:
                self.blocks.append(GlobalBlock(
                    b.label, slice(base + b.cols.start, base + b.cols.stop), b.penalty, b.rank))
        self.margins = [MarginArrays(self.pred[0], data, 0), MarginArrays(self.pred[1], data, 1)]
        self.x3 = self.pred[2].covariate_design(data.X)
        c1 = ~self.margins[0].unc
        c2 = ~self.margins[1].unc
        self.groups = {
            "UU": np.flatnonzero(~c1 & ~c2),
            "CC": np.flatnonzero(c1 & c2),
            "UC": np.flatnonzero(~c1 & c2),
            "CU": np.flatnonzero(c1 & ~c2),
        }
        self._j_static = self._static_jacobian()

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def n_smooth(self) -> int:
        return len(self.blocks)

    def raw_slices(self):
        return [slice(self.sl[m].start, self.sl[m].start + self.pred[m].n_base) for m in range(2)]

    def _static_jacobian(self) -> np.ndarray:
        J = np.zeros((self.n, N_Q, self.n_coef))
        for m, (qa, qb) in enumerate(((Q_ETA_A1, Q_ETA_B1), (Q_ETA_A2, Q_ETA_B2))):
            p = self.pred[m]
            cov = slice(self.sl[m].start + p.n_base, self.sl[m].stop)
            J[:, qa, cov] = self.margins[m].xc
            J[:, qb, cov] = self.margins[m].xc
        J[:, Q_ETA3, self.sl[2]] = self.x3
        return J

    def penalty_matrix(self, lambdas) -> np.ndarray:
        lam = self.check_lambdas(lambdas)
        S = np.zeros((self.n_coef, self.n_coef))
        for b, l in zip(self.blocks, lam):
            S[b.cols, b.cols] += l * b.penalty
        return S

    def check_lambdas(self, lambdas) -> np.ndarray:
        if lambdas is None:
            lambdas = np.ones(self.n_smooth)
        lam = np.broadcast_to(np.asarray(lambdas, dtype=float), (self.n_smooth,)).copy()
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ConfigError(f"smoothing parameters must be finite and non-negative, got {lam}")
        return lam

    def predictors(self, delta):
        """Per-record quantities q (n, 7) and the Jacobian dq/d delta (n, 7, W)."""
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (self.n_coef,):
            raise ConfigError(f"delta has shape {delta.shape}, expected ({self.n_coef},)")
        q = np.zeros((self.n, N_Q))
        J = self._j_static.copy()
        cols = ((Q_ETA_A1, Q_DETA_A1, Q_ETA_B1), (Q_ETA_A2, Q_DETA_A2, Q_ETA_B2))
        for m in range(2):
            p, arr = self.pred[m], self.margins[m]
            raw, beta = p.split(delta[self.sl[m]])
            w = p.raw_weights(raw)
            scale = w.copy()
            scale[0] = 1.0
            lin = arr.xc @ beta
            qa, qd, qb = cols[m]
            q[:, qa] = arr.bc_a @ w + lin
            q[:, qd] = arr.dbc_a @ w
            q[:, qb] = arr.bc_b @ w + lin
            rs = slice(self.sl[m].start, self.sl[m].start + p.n_base)
            J[:, qa, rs] = arr.bc_a * scale
            J[:, qd, rs] = arr.dbc_a * scale
            J[:, qb, rs] = arr.bc_b * scale
        q[:, Q_ETA3] = self.x3 @ delta[self.sl[2]]
        return q, J
