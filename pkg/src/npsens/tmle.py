"""Iterative TMLE of the control-arm mean among the treated, and IC inference.

The target is ``phi0 = E_W{E(Y | C=1, A=0, W) | A=1}``. The effect estimate
is ``psi_n = mean(y* | a=1) - phi_n``, where ``y*`` is the conservatively
imputed outcome. Three nuisances are estimated by Super Learner:

* ``Qbar(1, a, w) = P(Y=1 | C=1, A=a, W=w)``, fit among uncensored rows;
* ``g(1 | w) = P(A=1 | W=w)``, fit on all rows;
* ``phi(1 | a, w) = P(C=1 | A=a, W=w)``, fit on all rows.

Each targeting pass fluctuates ``Qbar`` along the clever covariate
``L1 = C I(A=0) g(1|W) / (phi(1|A,W) g(0|W))`` and ``g`` along
``L2 = Qbar(1, 0, W) - phi_n``, then recomputes ``phi_n`` as the treated-row
average of ``Qbar(1, 0, W)``. Passes repeat until ``phi_n`` settles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, logit

from .dataset import ImputedDataset, empirical_treated_proportion
from .learners import (
    DEFAULT_LIBRARY,
    FitFailure,
    LearnerSpec,
    SuperLearnerFit,
    fit_offset_logistic,
    fit_super_learner,
    make_folds,
)

Q_BOUND = 1e-6
DEFAULT_TRUNC = 0.01


class InestimableNuisanceError(ValueError):
    """A nuisance regression has no support (e.g. no observed outcomes in an arm)."""


class TargetingError(RuntimeError):
    """A fluctuation fit failed to converge."""

    def __init__(self, message: str, trace=()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class NuisanceEstimates:
    """Cached nuisance predictions, one entry per row.

    Attributes
    ----------
    qbar_obs : Qbar(1, a_i, w_i)
    qbar_10 : Qbar(1, 0, w_i), the counterfactual evaluation used by ``phi_n``
    g1 : g(1 | w_i)
    phi_obs : phi(1 | a_i, w_i)
    phi_0 : phi(1 | 0, w_i)
    """

    qbar_obs: np.ndarray
    qbar_10: np.ndarray
    g1: np.ndarray
    phi_obs: np.ndarray
    phi_0: np.ndarray
    trunc: float = DEFAULT_TRUNC
    q_bound: float = Q_BOUND
    fits: dict = field(default_factory=dict, repr=False, compare=False)


def _bound(x, lo):
    return np.clip(x, lo, 1.0 - lo)


def _design_aw(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.column_stack([a.astype(float), w])


def _subplan(n: int, folds: int, seed: int):
    return make_folds(n, min(folds, n), seed)


def fit_nuisances(
    data: ImputedDataset,
    library: Sequence[LearnerSpec] = DEFAULT_LIBRARY,
    folds: int = 10,
    seed: int = 1,
    trunc: float = DEFAULT_TRUNC,
    q_library: Optional[Sequence[LearnerSpec]] = None,
    g_library: Optional[Sequence[LearnerSpec]] = None,
    c_library: Optional[Sequence[LearnerSpec]] = None,
) -> NuisanceEstimates:
    """Initial Super Learner fits for ``Qbar``, ``g`` and ``phi``, truncated.

    ``q_library``, ``g_library`` and ``c_library`` override ``library`` for a
    single nuisance; used to study misspecified fits.

    Raises
    ------
    InestimableNuisanceError
        An arm has no uncensored rows, or fewer than two rows enter a regression.
    """
    base = data.base
    a, c, w = base.a, base.c, base.w
    n = base.n
    for arm in (0, 1):
        if not np.any((a == arm) & (c == 1)):
            raise InestimableNuisanceError(f"no uncensored rows with A={arm}; outcome regression inestimable")
    obs = np.flatnonzero(c == 1)
    if obs.size < 2:
        raise InestimableNuisanceError("fewer than two uncensored rows")

    aw = _design_aw(a, w)
    aw0 = _design_aw(np.zeros(n, dtype=np.int8), w)

    q_fit = fit_super_learner(q_library or library, aw[obs], base.y[obs], _subplan(obs.size, folds, seed))
    g_fit = fit_super_learner(g_library or library, w, a.astype(float), _subplan(n, folds, seed))
    c_fit = fit_super_learner(c_library or library, aw, c.astype(float), _subplan(n, folds, seed))

    return NuisanceEstimates(
        qbar_obs=_bound(q_fit.predict(aw), Q_BOUND),
        qbar_10=_bound(q_fit.predict(aw0), Q_BOUND),
        g1=_bound(g_fit.predict(w), trunc),
        phi_obs=_bound(c_fit.predict(aw), trunc),
        phi_0=_bound(c_fit.predict(aw0), trunc),
        trunc=trunc,
        fits={"qbar": q_fit, "g": g_fit, "phi": c_fit},
    )


def treated_mean(values: np.ndarray, a: np.ndarray) -> float:
    return float(np.mean(values[a == 1]))


def clever_covariates(data: ImputedDataset, nuisance: NuisanceEstimates, phi_current: float):
    """Return ``(L1, L2)`` evaluated at each row's observed ``(c, a, w)``."""
    base = data.base
    g1 = nuisance.g1
    L1 = base.c * (base.a == 0) * g1 / (nuisance.phi_obs * (1.0 - g1))
    L2 = nuisance.qbar_10 - phi_current
    return L1.astype(float), L2


def _counterfactual_clever(nuisance: NuisanceEstimates) -> np.ndarray:
    """``L1`` at ``(C=1, A=0, w_i)`` for every row."""
    return nuisance.g1 / (nuisance.phi_0 * (1.0 - nuisance.g1))


def fluctuate(data: ImputedDataset, nuisance: NuisanceEstimates, phi_current: float):
    """One targeting pass: fit ``eps1`` and ``eps2`` and update ``Qbar``, ``g``.

    ``eps1`` solves the offset logistic regression of ``Y`` on ``L1`` among
    uncensored rows; ``eps2`` that of ``A`` on ``L2`` over all rows.

    Returns
    -------
    eps1, eps2 : float
    updated : NuisanceEstimates
    """
    base = data.base
    L1, L2 = clever_covariates(data, nuisance, phi_current)
    obs = base.c == 1
    try:
        eps1, _ = fit_offset_logistic(L1[obs], base.y[obs], logit(nuisance.qbar_obs[obs]))
        eps2, _ = fit_offset_logistic(L2, base.a.astype(float), logit(nuisance.g1))
    except FitFailure as exc:
        raise TargetingError(f"fluctuation fit failed: {exc}") from exc

    # Qbar(1, a_i, w_i) uses the clever covariate evaluated at C=1
    h_obs = (base.a == 0) * _counterfactual_clever(nuisance)
    h_10 = _counterfactual_clever(nuisance)
    qb = nuisance.q_bound
    updated = replace(
        nuisance,
        qbar_obs=_bound(expit(logit(nuisance.qbar_obs) + eps1 * h_obs), qb),
        qbar_10=_bound(expit(logit(nuisance.qbar_10) + eps1 * h_10), qb),
        g1=_bound(expit(logit(nuisance.g1) + eps2 * L2), nuisance.trunc),
    )
    return eps1, eps2, updated


@dataclass(frozen=True)
class TmleResult:
    phi_n: float
    psi_n: float
    se: float
    treated_mean: float
    ic_values: np.ndarray = field(repr=False)
    trace: tuple[tuple[float, float, float], ...] = field(repr=False)
    converged: bool = True
    iterations: int = 0
    nuisance: Optional[NuisanceEstimates] = field(default=None, repr=False, compare=False)

    def to_dict(self, include_trace: bool = True) -> dict:
        out = {
            "phi_n": self.phi_n,
            "psi_n": self.psi_n,
            "se": self.se,
            "treated_conservative_mean": self.treated_mean,
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if self.nuisance is not None:
            out["truncation"] = {"g_phi": self.nuisance.trunc, "qbar": self.nuisance.q_bound}
            out["super_learner"] = {k: v.to_dict() for k, v in self.nuisance.fits.items()}
        if include_trace:
            out["trace"] = [{"phi_n": p, "epsilon1": e1, "epsilon2": e2} for p, e1, e2 in self.trace]
        return out


def influence_se(data: ImputedDataset, nuisance: NuisanceEstimates, psi_n: float):
    """Plug-in influence curve of ``psi_n`` and the standard error ``sqrt(sum D^2) / n``."""
    base = data.base
    a, c, ys = base.a, base.c, data.y_star
    p1 = empirical_treated_proportion(base)
    g1 = nuisance.g1
    weight = c / nuisance.phi_obs * (a == 0) * g1 / (p1 * (1.0 - g1))
    D = -weight * (ys - nuisance.qbar_obs) + (a == 1) / p1 * (ys - nuisance.qbar_10 - psi_n)
    se = math.sqrt(math.fsum(D**2)) / base.n
    return se, D


def tmle_iterate(
    data: ImputedDataset,
    nuisance: NuisanceEstimates,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> TmleResult:
    """Repeat targeting passes until ``|delta phi_n| < tol``.

    ``phi_n`` entering ``L2`` is the value from the previous pass. A run that
    exhausts ``max_iter`` is returned with ``converged=False``.
    """
    a = data.base.a
    phi = treated_mean(nuisance.qbar_10, a)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            eps1, eps2, nuisance = fluctuate(data, nuisance, phi)
        except TargetingError as exc:
            raise TargetingError(str(exc), trace) from exc
        phi_new = treated_mean(nuisance.qbar_10, a)
        trace.append((phi_new, eps1, eps2))
        if abs(phi_new - phi) < tol:
            phi = phi_new
            converged = True
            break
        phi = phi_new
    y_treated = treated_mean(data.y_star, a)
    psi = y_treated - phi
    se, D = influence_se(data, nuisance, psi)
    return TmleResult(
        phi_n=phi,
        psi_n=psi,
        se=se,
        treated_mean=y_treated,
        ic_values=D,
        trace=tuple(trace),
        converged=converged,
        iterations=it,
        nuisance=nuisance,
    )


def score_residuals(data: ImputedDataset, result: TmleResult) -> tuple[float, float]:
    """Mean L1-weighted residual and mean IC at the final nuisances."""
    nuis = result.nuisance
    L1, _ = clever_covariates(data, nuis, result.phi_n)
    obs = data.base.c == 1
    resid = np.where(obs, data.y_star - nuis.qbar_obs, 0.0)
    return float(np.mean(L1 * resid)), float(np.mean(result.ic_values))


def tmle(
    data: ImputedDataset,
    library: Sequence[LearnerSpec] = DEFAULT_LIBRARY,
    folds: int = 10,
    seed: int = 1,
    trunc: float = DEFAULT_TRUNC,
    tol: float = 1e-8,
    max_iter: int = 100,
    **library_overrides,
) -> TmleResult:
    """Fit nuisances and run the targeting loop."""
    nuis = fit_nuisances(data, library, folds, seed, trunc, **library_overrides)
    return tmle_iterate(data, nuis, tol, max_iter)
