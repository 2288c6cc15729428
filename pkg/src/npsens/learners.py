"""Candidate binary-regression learners and the Super Learner.

The library is a fixed enumeration of logistic-family learners. Each one is
fit by Newton/IRLS on the weighted mean negative Bernoulli log-likelihood;
the L1-penalized variant uses proximal Newton steps with an inner coordinate
descent. The Super Learner combines held-out candidate predictions with
weights on the probability simplex that minimize cross-validated log loss.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

KINDS = ("intercept_only", "logistic_main_terms", "logistic_l1", "logistic_quadratic")
LOSS_CLIP = 1e-12
PRED_CLIP = 1e-12
MAX_ITER = 100
GRAD_TOL = 1e-8
# |linear predictor| beyond this means fitted probabilities within 1e-13 of 0 or 1
SEPARATION_ETA = 30.0


class FitFailure(RuntimeError):
    """A learner did not converge; ``diagnostics`` holds the last state."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EnsembleFailure(RuntimeError):
    """No candidate in the library could be fit on some fold."""


class CVWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    hyperparameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        hp = dict(self.hyperparameters)
        if self.kind == "logistic_l1":
            lam = hp.get("lambda")
            if lam is None or not lam >= 0:
                raise ValueError("logistic_l1 needs a nonnegative 'lambda' hyperparameter")
        object.__setattr__(self, "hyperparameters", hp)

    @property
    def label(self) -> str:
        if self.hyperparameters:
            hp = ",".join(f"{k}={v:g}" for k, v in sorted(self.hyperparameters.items()))
            return f"{self.kind}({hp})"
        return self.kind

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LearnerSpec":
        return cls(d["kind"], dict(d.get("hyperparameters", {})))


DEFAULT_LIBRARY = (
    LearnerSpec("intercept_only"),
    LearnerSpec("logistic_main_terms"),
    LearnerSpec("logistic_l1", {"lambda": 0.001}),
    LearnerSpec("logistic_l1", {"lambda": 0.01}),
    LearnerSpec("logistic_l1", {"lambda": 0.1}),
    LearnerSpec("logistic_quadratic"),
)


# -- design matrices ----------------------------------------------------------


def _is_binary(col: np.ndarray) -> bool:
    return bool(np.all((col == 0) | (col == 1)))


@dataclass(frozen=True)
class _Design:
    """Feature expansion fixed on the training data, then standardized."""

    p: int
    squares: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]
    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def build(cls, kind: str, X: np.ndarray, w: np.ndarray) -> "_Design":
        p = X.shape[1]
        squares: tuple[int, ...] = ()
        pairs: tuple[tuple[int, int], ...] = ()
        if kind == "logistic_quadratic":
            # squares of 0/1 columns duplicate the column itself
            squares = tuple(j for j in range(p) if not _is_binary(X[:, j]))
            pairs = tuple((i, j) for i in range(p) for j in range(i + 1, p))
        raw = cls._expand(X, squares, pairs, kind)
        if raw.shape[1]:
            sw = w.sum()
            center = (w @ raw) / sw
            scale = np.sqrt((w @ (raw - center) ** 2) / sw)
            scale[scale <= 1e-12] = 1.0
        else:
            center = np.zeros(0)
            scale = np.ones(0)
        return cls(p, squares, pairs, center, scale)

    @staticmethod
    def _expand(X, squares, pairs, kind) -> np.ndarray:
        if kind == "intercept_only":
            return np.empty((X.shape[0], 0))
        cols = [X]
        if squares:
            cols.append(X[:, list(squares)] ** 2)
        if pairs:
            cols.append(np.column_stack([X[:, i] * X[:, j] for i, j in pairs]))
        return np.hstack(cols)

    def transform(self, X: np.ndarray, kind: str) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.p:
            raise ValueError(f"expected {self.p} columns, got {X.shape[1]}")
        raw = self._expand(X, self.squares, self.pairs, kind)
        Z = (raw - self.center) / self.scale
        return np.hstack([np.ones((X.shape[0], 1)), Z])


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
    return X


# -- logistic fitting core ----------------------------------------------------


def _mean_nll(eta: np.ndarray, y: np.ndarray, w: np.ndarray, sw: float) -> float:
    return float(w @ (np.logaddexp(0.0, eta) - y * eta)) / sw


def newton_logistic(
    Z: np.ndarray,
    y: np.ndarray,
    weights: Optional[np.ndarray] = None,
    offset: Optional[np.ndarray] = None,
    max_iter: int = MAX_ITER,
    tol: float = GRAD_TOL,
    beta0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, dict]:
    """Unpenalized logistic regression by damped Newton (IRLS).

    Minimizes the weighted mean negative log-likelihood of ``y`` under
    ``logit p = offset + Z @ beta``. Steps are halved until the objective
    does not increase. Converged when the gradient 2-norm is ``<= tol``;
    one extra Newton step is then taken to polish the solution.

    Raises
    ------
    FitFailure
        Gradient above ``tol`` after ``max_iter`` iterations, or a converged
        fit whose linear predictor exceeds ``SEPARATION_ETA`` in magnitude
        (the MLE is escaping to infinity under separation).
    """
    n, k = Z.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    sw = w.sum()
    beta = np.zeros(k) if beta0 is None else np.array(beta0, dtype=float)
    eta = off + Z @ beta
    f = _mean_nll(eta, y, w, sw)

    def gradient(eta):
        mu = expit(eta)
        return mu, Z.T @ (w * (mu - y)) / sw

    def newton_step(mu, grad):
        H = (Z * (w * mu * (1.0 - mu))[:, None]).T @ Z / sw
        try:
            step = np.linalg.solve(H, -grad)
            if np.all(np.isfinite(step)):
                return step
        except np.linalg.LinAlgError:
            pass
        return np.linalg.lstsq(H, -grad, rcond=None)[0]

    converged = False
    gnorm = math.inf
    it = 0
    for it in range(max_iter):
        mu, grad = gradient(eta)
        gnorm = float(np.sqrt(grad @ grad))
        if gnorm <= tol:
            converged = True
            break
        step = newton_step(mu, grad)
        t = 1.0
        while True:
            b_new = beta + t * step
            eta_new = off + Z @ b_new
            f_new = _mean_nll(eta_new, y, w, sw)
            if f_new <= f or t < 1e-10:
                break
            t *= 0.5
        if f_new > f:
            break
        beta, eta, f = b_new, eta_new, f_new
    else:
        mu, grad = gradient(eta)
        gnorm = float(np.sqrt(grad @ grad))
        converged = gnorm <= tol
    diag = {"iterations": it, "grad_norm": gnorm, "objective": f}
    if not converged:
        raise FitFailure(f"logistic fit did not converge (gradient norm {gnorm:.3g})", diag)
    spread = float(np.max(np.abs(eta - off))) if n else 0.0
    if spread > SEPARATION_ETA:
        diag["max_abs_eta"] = spread
        raise FitFailure(f"separation: linear predictor diverges (max |eta| {spread:.3g})", diag)
    # polish: a converged Newton iterate is one step away from machine precision
    if gnorm > 0:
        b_new = beta + newton_step(mu, grad)
        eta_new = off + Z @ b_new
        _, g_new = gradient(eta_new)
        gn = float(np.sqrt(g_new @ g_new))
        if gn < gnorm and np.all(np.isfinite(b_new)):
            beta, diag["grad_norm"], diag["objective"] = b_new, gn, _mean_nll(eta_new, y, w, sw)
    return beta, diag


def _soft(x: float, lam: float) -> float:
    if x > lam:
        return x - lam
    if x < -lam:
        return x + lam
    return 0.0


def _l1_subproblem(H: np.ndarray, grad: np.ndarray, beta: np.ndarray, lam: float,
                   max_sweeps: int = 500, tol: float = 1e-13) -> np.ndarray:
    """Coordinate descent on ``grad.d + d'Hd/2 + lam*|beta+d|_1`` (intercept free).

    Returns the new coefficient vector ``beta + d``.
    """
    k = len(beta)
    Hl = H.tolist()
    g = grad.tolist()
    b0 = beta.tolist()
    b = list(b0)
    u = [0.0] * k  # H @ (b - b0)
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(k):
            hjj = Hl[j][j]
            if hjj <= 0.0:
                continue
            cj = g[j] + u[j] - hjj * (b[j] - b0[j]) - hjj * b0[j]
            new = -cj / hjj if j == 0 else _soft(-cj, lam) / hjj
            delta = new - b[j]
            if delta != 0.0:
                row = Hl[j]
                for l in range(k):
                    u[l] += row[l] * delta
                b[j] = new
                if abs(delta) > biggest:
                    biggest = abs(delta)
        if biggest <= tol:
            break
    return np.array(b)


def _l1_objective(eta, y, w, sw, beta, lam) -> float:
    return _mean_nll(eta, y, w, sw) + lam * float(np.abs(beta[1:]).sum())


def _l1_kkt(grad: np.ndarray, beta: np.ndarray, lam: float) -> float:
    r = np.empty_like(grad)
    r[0] = grad[0]
    g, b = grad[1:], beta[1:]
    nz = b != 0
    r[1:][nz] = g[nz] + lam * np.sign(b[nz])
    r[1:][~nz] = np.maximum(np.abs(g[~nz]) - lam, 0.0)
    return float(np.sqrt(r @ r))


def proximal_newton_l1(
    Z: np.ndarray,
    y: np.ndarray,
    lam: float,
    weights: Optional[np.ndarray] = None,
    offset: Optional[np.ndarray] = None,
    max_iter: int = MAX_ITER,
    tol: float = GRAD_TOL,
) -> tuple[np.ndarray, dict]:
    """L1-penalized logistic regression; column 0 of ``Z`` is an unpenalized intercept."""
    n, k = Z.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    sw = w.sum()
    beta = np.zeros(k)
    eta = off + Z @ beta
    F = _l1_objective(eta, y, w, sw, beta, lam)
    kkt = math.inf
    for it in range(max_iter + 1):
        mu = expit(eta)
        grad = Z.T @ (w * (mu - y)) / sw
        kkt = _l1_kkt(grad, beta, lam)
        if kkt <= tol or it == max_iter:
            break
        h = w * mu * (1.0 - mu)
        H = (Z * h[:, None]).T @ Z / sw
        b_hat = _l1_subproblem(H, grad, beta, lam)
        d = b_hat - beta
        decrease = grad @ d + lam * (np.abs(b_hat[1:]).sum() - np.abs(beta[1:]).sum())
        t = 1.0
        while True:
            b_new = beta + t * d
            eta_new = off + Z @ b_new
            F_new = _l1_objective(eta_new, y, w, sw, b_new, lam)
            if F_new <= F + 0.25 * t * min(decrease, 0.0) or t < 1e-10:
                break
            t *= 0.5
        if F_new > F + 1e-12 * abs(F):
            break
        beta, eta, F = b_new, eta_new, F_new
    diag = {"iterations": it, "kkt_norm": kkt, "objective": F}
    if kkt > tol:
        raise FitFailure(f"L1 logistic fit did not converge (KKT residual {kkt:.3g})", diag)
    return beta, diag


# -- learners -----------------------------------------------------------------


@dataclass(frozen=True)
class FittedLearner:
    """A fitted candidate. ``coefficients[0]`` is the intercept on the standardized design."""

    spec: LearnerSpec
    coefficients: np.ndarray
    design: _Design = field(repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False, compare=False)

    def linear_predictor(self, X, offset=None) -> np.ndarray:
        Z = self.design.transform(X, self.spec.kind)
        eta = Z @ self.coefficients
        if offset is not None:
            eta = eta + np.asarray(offset, dtype=float)
        return eta

    def predict(self, X, offset=None) -> np.ndarray:
        return np.clip(expit(self.linear_predictor(X, offset)), PRED_CLIP, 1.0 - PRED_CLIP)


def fit_learner(
    spec: LearnerSpec,
    X,
    y,
    weights=None,
    offset=None,
) -> FittedLearner:
    """Fit one candidate by (penalized) maximum likelihood.

    The offset enters the linear predictor additively and is never penalized.

    Raises
    ------
    FitFailure
        Non-convergence (e.g. under separation). ``intercept_only`` without an
        offset is closed form and never fails.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        if X.size == 0:
            X = np.empty((y.shape[0], 0))
        else:
            raise ValueError("X and y have different numbers of rows")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be binary")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    design = _Design.build(spec.kind, X, w)
    Z = design.transform(X, spec.kind)

    if spec.kind == "intercept_only" and offset is None:
        ybar = float(w @ y) / w.sum()
        ybar = min(max(ybar, PRED_CLIP), 1.0 - PRED_CLIP)
        coef = np.array([math.log(ybar / (1.0 - ybar))])
        return FittedLearner(spec, coef, design, {"iterations": 0})

    if spec.kind == "logistic_l1" and Z.shape[1] > 1:
        coef, diag = proximal_newton_l1(Z, y, spec.hyperparameters["lambda"], w, offset)
    else:
        beta0 = None
        if offset is None:
            ybar = min(max(float(w @ y) / w.sum(), 1e-6), 1 - 1e-6)
            beta0 = np.zeros(Z.shape[1])
            beta0[0] = math.log(ybar / (1 - ybar))
        coef, diag = newton_logistic(Z, y, w, offset, beta0=beta0)
    return FittedLearner(spec, coef, design, diag)


def fit_offset_logistic(x, y, offset) -> tuple[float, dict]:
    """One-parameter logistic regression ``logit p = offset + eps * x``, no intercept."""
    x = np.asarray(x, dtype=float)
    if not np.any(x != 0):
        return 0.0, {"iterations": 0, "grad_norm": 0.0}
    coef, diag = newton_logistic(x.reshape(-1, 1), np.asarray(y, dtype=float), offset=offset)
    return float(coef[0]), diag


def log_loss(y: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Pointwise negative Bernoulli log-likelihood with clipped probabilities."""
    p = np.clip(p, LOSS_CLIP, 1.0 - LOSS_CLIP)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


# -- cross-validation ---------------------------------------------------------


@dataclass(frozen=True)
class CrossValidationPlan:
    n: int
    folds: tuple[np.ndarray, ...]
    seed: int

    @property
    def S(self) -> int:
        return len(self.folds)

    def training(self, s: int) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.folds[s]] = False
        return np.flatnonzero(mask)

    def fold_weights(self) -> np.ndarray:
        """Per-row weights ``1/(S * n_s)`` so the weighted mean equals the fold-averaged risk."""
        w = np.empty(self.n)
        for v in self.folds:
            w[v] = 1.0 / (self.S * len(v))
        return w


def make_folds(n: int, S: int, seed: int) -> CrossValidationPlan:
    """Random partition of ``range(n)`` into ``S`` folds whose sizes differ by at most one."""
    if not 2 <= S <= n:
        raise ValueError(f"need 2 <= S <= n, got S={S}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = tuple(np.sort(f) for f in np.array_split(perm, S))
    return CrossValidationPlan(n=n, folds=folds, seed=seed)


def cv_predictions(spec: LearnerSpec, X, y, plan: CrossValidationPlan) -> np.ndarray:
    """Held-out predictions for each row; raises FitFailure if any fold fails."""
    X = _as_matrix(X)
    if X.shape[0] != len(y):
        X = np.empty((len(y), 0))
    y = np.asarray(y, dtype=float)
    out = np.empty(plan.n)
    for s, v in enumerate(plan.folds):
        tr = plan.training(s)
        fit = fit_learner(spec, X[tr], y[tr])
        out[v] = fit.predict(X[v])
    return out


def cv_risk_from_predictions(y, pred, plan: CrossValidationPlan) -> float:
    loss = log_loss(np.asarray(y, dtype=float), pred)
    return float(np.mean([loss[v].mean() for v in plan.folds]))


def cv_risk(spec: LearnerSpec, X, y, plan: CrossValidationPlan) -> float:
    """Cross-validated log-loss risk, averaged over folds.

    A fold fit failure makes the risk ``inf`` and emits a :class:`CVWarning`.
    """
    try:
        pred = cv_predictions(spec, X, y, plan)
    except FitFailure as exc:
        warnings.warn(f"{spec.label}: fold fit failed ({exc}); risk set to inf", CVWarning, stacklevel=2)
        return math.inf
    return cv_risk_from_predictions(y, pred, plan)


# -- convex stacking ----------------------------------------------------------


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{b : b >= 0, sum(b) = 1}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _stack_terms(beta, P, y, s):
    p = np.clip(P @ beta, LOSS_CLIP, 1.0 - LOSS_CLIP)
    f = float(s @ -(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
    grad = P.T @ (s * (p - y) / (p * (1.0 - p)))
    curv = s * (y / p**2 + (1.0 - y) / (1.0 - p) ** 2)
    H = (P * curv[:, None]).T @ P
    return f, grad, H


def _simplex_qp(H: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact minimizer of ``c.b + b'Hb/2`` on the simplex by support enumeration.

    Each support gets the equality-constrained stationary point; the best
    feasible one is returned. Ties keep the first support in enumeration order.
    """
    J = len(c)
    best, best_val = None, math.inf
    for mask in range(1, 2**J):
        S = [j for j in range(J) if mask >> j & 1]
        k = len(S)
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = H[np.ix_(S, S)]
        K[:k, k] = K[k, :k] = 1.0
        rhs = np.append(-c[S], 1.0)
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        b_S = sol[:k]
        if np.any(b_S < -1e-12) or abs(b_S.sum() - 1.0) > 1e-9:
            continue
        b = np.zeros(J)
        b[S] = np.maximum(b_S, 0.0)
        b /= b.sum()
        val = float(c @ b + 0.5 * b @ H @ b)
        if val < best_val - 1e-15:
            best, best_val = b, val
    return best


def solve_simplex_weights(
    cv_predictions,
    y,
    sample_weight=None,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Simplex weights minimizing the log loss of ``cv_predictions @ beta``.

    Damped projected Newton from the uniform vector: each step minimizes the
    local quadratic model over the simplex exactly, followed by a backtracking
    line search on the true objective. Iteration stops once the Frank-Wolfe
    duality gap, an upper bound on the distance to the optimal objective, is
    at most ``tol``.

    Parameters
    ----------
    cv_predictions : ndarray, shape (n, J)
        Held-out predictions in (0, 1).
    y : ndarray, shape (n,)
    sample_weight : ndarray, optional
        Row weights, normalized internally; default is the plain mean.
    """
    P = np.asarray(cv_predictions, dtype=float)
    y = np.asarray(y, dtype=float)
    n, J = P.shape
    if J < 1:
        raise ValueError("need at least one candidate")
    if np.any((P <= 0) | (P >= 1)):
        raise ValueError("predictions must lie strictly inside (0, 1)")
    if J == 1:
        return np.ones(1)
    s = np.full(n, 1.0 / n) if sample_weight is None else np.asarray(sample_weight, float) / np.sum(sample_weight)
    beta = np.full(J, 1.0 / J)
    f, g, H = _stack_terms(beta, P, y, s)
    for _ in range(max_iter):
        if float(g @ beta - g.min()) <= tol:
            break
        target = _simplex_qp(H, g - H @ beta) if J <= 12 else None
        if target is None:
            target = project_simplex(beta - g / max(np.linalg.norm(H, 2), 1e-12))
        d = target - beta
        slope = float(g @ d)
        if slope >= 0:
            break
        t = 1.0
        while True:
            cand = beta + t * d
            f_new = _stack_terms(cand, P, y, s)[0]
            if f_new <= f + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if f_new > f:
            break
        beta = cand
        f, g, H = _stack_terms(beta, P, y, s)
    beta = np.maximum(beta, 0.0)
    return beta / beta.sum()


@dataclass(frozen=True)
class SuperLearnerFit:
    library: tuple[Optional[FittedLearner], ...]
    specs: tuple[LearnerSpec, ...]
    beta: np.ndarray
    cv_risks: np.ndarray
    combined_risk: float
    cv_predictions: np.ndarray = field(repr=False)
    warnings: tuple[str, ...] = ()

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        out = None
        for b, fit in zip(self.beta, self.library):
            if b == 0.0 or fit is None:
                continue
            term = b * fit.predict(X)
            out = term if out is None else out + term
        return out

    def to_dict(self) -> dict:
        return {
            "library": [s.to_dict() for s in self.specs],
            "beta": [float(b) for b in self.beta],
            "cv_risks": [float(r) if math.isfinite(r) else None for r in self.cv_risks],
            "combined_cv_risk": float(self.combined_risk),
            "warnings": list(self.warnings),
        }


def fit_super_learner(library: Sequence[LearnerSpec], X, y, plan: CrossValidationPlan) -> SuperLearnerFit:
    """Cross-validated convex stacking over ``library``.

    Candidates that fail on any fold get infinite risk and weight zero.

    Raises
    ------
    EnsembleFailure
        Every candidate failed.
    """
    library = tuple(library)
    if not library:
        raise ValueError("library is empty")
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != len(y):
        X = np.empty((len(y), 0))
    if plan.n != len(y):
        raise ValueError("plan size does not match data")
    J = len(library)
    preds = np.full((plan.n, J), np.nan)
    risks = np.full(J, math.inf)
    notes = []
    for j, spec in enumerate(library):
        try:
            preds[:, j] = cv_predictions(spec, X, y, plan)
        except FitFailure as exc:
            notes.append(f"{spec.label}: excluded, fold fit failed ({exc})")
            continue
        risks[j] = cv_risk_from_predictions(y, preds[:, j], plan)
    ok = np.flatnonzero(np.isfinite(risks))
    if ok.size == 0:
        raise EnsembleFailure("all candidates failed on some fold")
    fw = plan.fold_weights()
    beta = np.zeros(J)
    beta[ok] = solve_simplex_weights(preds[:, ok], y, sample_weight=fw)
    combined = float(fw @ log_loss(y, preds[:, ok] @ beta[ok]))
    fits: list[Optional[FittedLearner]] = [None] * J
    for j in ok:
        try:
            fits[j] = fit_learner(library[j], X, y)
        except FitFailure as exc:
            if beta[j] > 0:
                raise EnsembleFailure(f"{library[j].label} failed on the full data: {exc}") from exc
    return SuperLearnerFit(
        library=tuple(fits),
        specs=library,
        beta=beta,
        cv_risks=risks,
        combined_risk=combined,
        cv_predictions=preds,
        warnings=tuple(notes),
    )
