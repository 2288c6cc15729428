"""Synthetic observational data from a logistic-linear structural model.

Structural equations, evaluated in order for each row::

    W_j = F_j^{-1}(U_Wj)
    U   ~ N(0, 1)                                   latent confounder
    A   = 1{U_A < expit(a0 + a'W + u_a U)}
    C   = 1{U_C < expit(c0 + c'W + c_a A + u_c U)}
    Y   = C * 1{U_Y < expit(y0 + y'W + y_a A + u_y U)}

With ``u_a = u_y = u_c = 0`` every confounder is measured and the
randomization assumption holds by construction. Counterfactual outcomes set
``A = a`` and ``C = 1`` while reusing the same exogenous draws.

Random numbers come from a single PCG64 stream, consumed row-major with a
fixed number of uniforms per row (``p + 4``). Row ``i`` therefore owns stream
positions ``i*(p+4) .. i*(p+4)+p+3`` and can be reproduced from
``(seed, i)`` with ``PCG64(seed).advance(i*(p+4))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit, ndtri

from .dataset import ObservationalDataset

DISTRIBUTIONS = ("normal", "uniform", "bernoulli")


@dataclass(frozen=True)
class CovariateDist:
    name: str
    dist: str
    params: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.dist not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.dist!r}")

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        a, b = self.params
        if self.dist == "normal":
            return a + b * ndtri(u)
        if self.dist == "uniform":
            return a + (b - a) * u
        return (u < a).astype(float)

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateDist":
        dist = d["dist"]
        if dist == "normal":
            params = (d.get("mean", 0.0), d.get("sd", 1.0))
        elif dist == "uniform":
            params = (d.get("low", 0.0), d.get("high", 1.0))
        else:
            params = (d.get("p", 0.5), 0.0)
        return cls(d["name"], dist, tuple(float(x) for x in params))

    def to_dict(self) -> dict:
        a, b = self.params
        if self.dist == "normal":
            return {"name": self.name, "dist": "normal", "mean": a, "sd": b}
        if self.dist == "uniform":
            return {"name": self.name, "dist": "uniform", "low": a, "high": b}
        return {"name": self.name, "dist": "bernoulli", "p": a}


@dataclass(frozen=True)
class LogisticEquation:
    """``logit P(. = 1) = intercept + coef'W + a * A + u * U``."""

    intercept: float
    coef: tuple[float, ...]
    a: float = 0.0
    u: float = 0.0

    def eta(self, w: np.ndarray, a=0.0, u=0.0) -> np.ndarray:
        out = self.intercept + w @ np.asarray(self.coef, dtype=float)
        return out + self.a * a + self.u * u

    @classmethod
    def from_dict(cls, d: dict, p: int) -> "LogisticEquation":
        coef = tuple(float(c) for c in d.get("coef", [0.0] * p))
        if len(coef) != p:
            raise ValueError(f"coefficient vector has length {len(coef)}, expected {p}")
        return cls(float(d.get("intercept", 0.0)), coef, float(d.get("a", 0.0)), float(d.get("u", 0.0)))

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "coef": list(self.coef), "a": self.a, "u": self.u}


@dataclass(frozen=True)
class NpsemConfig:
    covariates: tuple[CovariateDist, ...]
    treatment: LogisticEquation
    censoring: LogisticEquation
    outcome: LogisticEquation
    seed: int = 0

    def __post_init__(self):
        p = len(self.covariates)
        for eq in (self.treatment, self.censoring, self.outcome):
            if len(eq.coef) != p:
                raise ValueError("coefficient vector length must equal the number of covariates")
        if self.treatment.a != 0.0:
            raise ValueError("treatment equation cannot depend on A")

    @property
    def p(self) -> int:
        return len(self.covariates)

    @property
    def randomization_holds(self) -> bool:
        # the shared latent U must not reach Y and one of (A, C) at once
        return self.outcome.u == 0.0 or (self.treatment.u == 0.0 and self.censoring.u == 0.0)

    def with_seed(self, seed: int) -> "NpsemConfig":
        return NpsemConfig(self.covariates, self.treatment, self.censoring, self.outcome, int(seed))

    @classmethod
    def from_dict(cls, d: dict) -> "NpsemConfig":
        covs = tuple(CovariateDist.from_dict(c) for c in d.get("covariates", []))
        p = len(covs)
        return cls(
            covariates=covs,
            treatment=LogisticEquation.from_dict(d["treatment"], p),
            censoring=LogisticEquation.from_dict(d["censoring"], p),
            outcome=LogisticEquation.from_dict(d["outcome"], p),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def from_json(cls, path) -> "NpsemConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "covariates": [c.to_dict() for c in self.covariates],
            "treatment": self.treatment.to_dict(),
            "censoring": self.censoring.to_dict(),
            "outcome": self.outcome.to_dict(),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Draws:
    """Factual and counterfactual variables from one simulation."""

    w: np.ndarray
    u: np.ndarray
    a: np.ndarray
    c: np.ndarray
    y_full: np.ndarray  # outcome had the row been followed up, at its factual A
    y0: np.ndarray
    y1: np.ndarray


def _uniforms(seed: int, n: int, k: int, start_row: int = 0) -> np.ndarray:
    bitgen = np.random.PCG64(seed)
    if start_row:
        bitgen.advance(start_row * k)
    u = np.random.Generator(bitgen).random((n, k))
    # random() lies in [0, 1 - 2**-53]; flooring keeps inverse-CDF draws finite
    return np.maximum(u, 2.0**-54)


def draw(config: NpsemConfig, n: int, seed: Optional[int] = None, start_row: int = 0) -> Draws:
    """Draw exogenous noise and evaluate the structural equations, factual and intervened."""
    seed = config.seed if seed is None else seed
    p = config.p
    U = _uniforms(seed, n, p + 4, start_row)
    w = np.column_stack([cov.from_uniform(U[:, j]) for j, cov in enumerate(config.covariates)]) if p else np.empty((n, 0))
    u = ndtri(U[:, p])
    a = (U[:, p + 1] < expit(config.treatment.eta(w, 0.0, u))).astype(np.int8)
    c = (U[:, p + 2] < expit(config.censoring.eta(w, a, u))).astype(np.int8)
    u_y = U[:, p + 3]
    y_full = (u_y < expit(config.outcome.eta(w, a, u))).astype(np.int8)
    y0 = (u_y < expit(config.outcome.eta(w, 0.0, u))).astype(np.int8)
    y1 = (u_y < expit(config.outcome.eta(w, 1.0, u))).astype(np.int8)
    return Draws(w, u, a, c, y_full, y0, y1)


def simulate(config: NpsemConfig, n: int, seed: Optional[int] = None) -> ObservationalDataset:
    """Observed data ``(W, A, C, Y)``; ``Y`` is recorded only where ``C = 1``."""
    d = draw(config, n, seed)
    y = np.where(d.c == 1, d.y_full.astype(float), np.nan)
    names = tuple(cov.name for cov in config.covariates)
    return ObservationalDataset(w=d.w, a=d.a, c=d.c, y=y, z=None, covariate_names=names)


# -- oracle -------------------------------------------------------------------


@dataclass(frozen=True)
class GroundTruth:
    psi_causal: float
    psi_statistical: float
    delta0_true: float
    spontaneous_rate: float
    phi0: float
    treated_conservative_mean: float
    mc_se: dict = field(default_factory=dict)

    @property
    def mc_standard_error(self) -> float:
        """Largest Monte Carlo standard error across the reported quantities."""
        return max(self.mc_se.values())

    def to_dict(self) -> dict:
        return {
            "psi_causal": self.psi_causal,
            "psi_statistical": self.psi_statistical,
            "delta0_true": self.delta0_true,
            "spontaneous_rate": self.spontaneous_rate,
            "phi0": self.phi0,
            "treated_conservative_mean": self.treated_conservative_mean,
            "mc_se": dict(self.mc_se),
        }


def _ratio(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """Ratio of means and its delta-method standard error."""
    r = num.mean() / den.mean()
    m = len(num)
    se = math.sqrt(np.var(num - r * den, ddof=1) / m) / den.mean() if m > 1 else 0.0
    return float(r), float(se)


def ground_truth(config: NpsemConfig, mc_reps: int = 200_000, seed: Optional[int] = None,
                 nodes: int = 40) -> GroundTruth:
    """Target quantities under the model, by Monte Carlo over ``W``.

    The latent confounder is integrated out exactly with Gauss-Hermite
    quadrature, so only the covariate distribution is sampled. Every quantity
    is a ratio ``E[num(W)] / E[P(A=1|W)]``; standard errors use the delta
    method. ``seed`` defaults to a stream distinct from ``config.seed``.
    """
    seed = (config.seed + 0x5EED) if seed is None else seed
    p = config.p
    if p:
        U = _uniforms(seed, mc_reps, p)
        w = np.column_stack([cov.from_uniform(U[:, j]) for j, cov in enumerate(config.covariates)])
    else:
        w = np.empty((1, 0))
    x, wt = np.polynomial.hermite_e.hermegauss(nodes)
    wt = wt / wt.sum()
    u = x[None, :]

    def prob(eq, a):
        return expit(eq.eta(w, a, 0.0)[:, None] + eq.u * u)

    pa = prob(config.treatment, 0.0)
    pc0, pc1 = prob(config.censoring, 0.0), prob(config.censoring, 1.0)
    py0, py1 = prob(config.outcome, 0.0), prob(config.outcome, 1.0)

    m1 = pa @ wt  # P(A=1 | W)
    ey1 = (pa * py1) @ wt  # E[Y(1) 1{A=1} | W]
    ey0 = (pa * py0) @ wt
    ecy1 = (pa * pc1 * py1) @ wt  # E[C Y 1{A=1} | W]
    ctrl_obs = ((1.0 - pa) * pc0) @ wt
    q0 = ((1.0 - pa) * pc0 * py0) @ wt / ctrl_obs  # E(Y | C=1, A=0, W)

    spont, se_spont = _ratio(ey0, m1)
    phi0, se_phi = _ratio(m1 * q0, m1)
    tcm, se_tcm = _ratio(ecy1, m1)
    psi_c, se_psi_c = _ratio(ey1 - ey0, m1)
    psi_s, se_psi_s = _ratio(ecy1 - m1 * q0, m1)
    d0, se_d0 = _ratio(ey0 - m1 * q0, m1)
    return GroundTruth(
        psi_causal=psi_c,
        psi_statistical=psi_s,
        delta0_true=d0,
        spontaneous_rate=spont,
        phi0=phi0,
        treated_conservative_mean=tcm,
        mc_se={
            "psi_causal": se_psi_c,
            "psi_statistical": se_psi_s,
            "delta0_true": se_d0,
            "spontaneous_rate": se_spont,
            "phi0": se_phi,
            "treated_conservative_mean": se_tcm,
        },
    )


def default_config(
    u_a: float = 0.0,
    u_y: float = 0.0,
    u_c: float = 0.0,
    effect: float = 1.5,
    seed: int = 2024,
) -> NpsemConfig:
    """Three measured confounders (normal, Bernoulli, uniform) acting on A, C and Y."""
    return NpsemConfig(
        covariates=(
            CovariateDist("w1", "normal", (0.0, 1.0)),
            CovariateDist("w2", "bernoulli", (0.5, 0.0)),
            CovariateDist("w3", "uniform", (-1.0, 1.0)),
        ),
        treatment=LogisticEquation(-0.8, (0.6, 0.5, -0.4), 0.0, u_a),
        censoring=LogisticEquation(0.3, (0.3, -0.3, 0.4), 1.0, u_c),
        outcome=LogisticEquation(-1.5, (0.5, 0.4, -0.3), effect, u_y),
        seed=seed,
    )


def write_config(config: NpsemConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")

