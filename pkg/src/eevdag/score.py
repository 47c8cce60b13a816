"""Gaussian likelihood scores for DAGs, computed from a covariance summary.

All scores are totals in nats: ``nll + lam * (#edges)``. Replacing the sample
covariance by a population covariance with ``n = 1`` gives per-sample
population scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Dag, GraphError
from .sem import DataError, DataSet

PIVOT_TOL = 1e-12
LOG_2PI = math.log(2 * math.pi)


class ScoreUndefined(ArithmeticError):
    """The score of a DAG cannot be computed (singular parent block, zero residual variance)."""


@dataclass(frozen=True, eq=False)
class CovarianceSummary:
    S: np.ndarray
    n: int

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DataError(f"covariance must be square, got shape {S.shape}")
        if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(S).max(initial=0))):
            raise DataError("covariance must be symmetric")
        if np.any(np.diag(S) < 0):
            raise DataError("covariance has a negative diagonal entry")
        if self.n < 1:
            raise DataError("sample count must be at least 1")
        S = (S + S.T) / 2
        S.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "n", int(self.n))

    @property
    def p(self) -> int:
        return self.S.shape[0]

    @classmethod
    def population(cls, Sigma) -> "CovarianceSummary":
        return cls(Sigma, 1)

    def scaled(self, c2: float) -> "CovarianceSummary":
        return CovarianceSummary(self.S * c2, self.n)


def sample_covariance(data) -> CovarianceSummary:
    """Maximum-likelihood covariance (divisor n) of a DataSet or n x p array."""
    X = data.values if isinstance(data, DataSet) else np.asarray(data, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise DataError("need at least two samples to estimate a covariance")
    Xc = X - X.mean(axis=0)
    return CovarianceSummary(Xc.T @ Xc / n, n)


def default_lambda(n: int) -> float:
    return math.log(n) / 2


def _check_dag(dag, cov):
    if dag.p != cov.p:
        raise GraphError(f"graph has {dag.p} vertices but the covariance is {cov.p} x {cov.p}")


def _alpha(alpha, p):
    if alpha is None:
        return np.ones(p)
    a = np.asarray(alpha, dtype=float)
    if a.shape != (p,) or not np.all(a > 0):
        raise DataError("alpha must be a length-p vector of positive weights")
    return a


def node_regression(S, j, parents):
    """Least-squares regression of node j on ``parents`` (a sorted sequence).

    Returns ``(coefficients, residual_variance)``. Raises ScoreUndefined when
    the parent block has a Cholesky pivot at or below ``PIVOT_TOL`` times its
    largest diagonal entry.
    """
    s_jj = S[j, j]
    if not parents:
        return np.zeros(0), float(s_jj)
    pa = list(parents)
    A = S[np.ix_(pa, pa)]
    b = S[pa, j]
    scale = np.max(np.diag(A))
    if scale <= 0:
        raise ScoreUndefined(f"parents {pa} of node {j} have zero variance")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise ScoreUndefined(f"parent covariance of node {j} is not positive definite") from None
    if np.min(np.diag(L)) ** 2 <= PIVOT_TOL * scale:
        raise ScoreUndefined(f"parent covariance of node {j} is numerically singular")
    y = np.linalg.solve(L, b)
    coef = np.linalg.solve(L.T, y)
    rv = s_jj - float(y @ y)
    return coef, max(rv, 0.0)


def fit_coefficients(dag: Dag, cov: CovarianceSummary) -> np.ndarray:
    """Row j solves ``S[pa, pa] beta_j = S[pa, j]``; zero off the edges of ``dag``."""
    _check_dag(dag, cov)
    B = np.zeros((cov.p, cov.p))
    for j in range(cov.p):
        pa = sorted(dag.parents(j))
        if pa:
            coef, _ = node_regression(cov.S, j, pa)
            B[j, pa] = coef
    return B


def residual_covariance(B, cov: CovarianceSummary) -> np.ndarray:
    M = np.eye(cov.p) - B
    return M @ cov.S @ M.T


def profiled_sigma2(dag: Dag, B_hat, cov: CovarianceSummary, alpha=None) -> float:
    """tr{diag(alpha)^-1 (I - B) S (I - B)^T} / p, the minimiser in sigma^2."""
    _check_dag(dag, cov)
    a = _alpha(alpha, cov.p)
    rv = np.diag(residual_covariance(B_hat, cov))
    s2 = float(np.sum(rv / a)) / cov.p
    if not s2 > PIVOT_TOL * max(float(np.max(np.diag(cov.S) / a)), 0.0):
        raise ScoreUndefined("all residual variances vanish; data are degenerate")
    return s2


def negative_log_likelihood(B, sigma2: float, cov: CovarianceSummary, alpha=None) -> float:
    """Equal-variance Gaussian negative log-likelihood via the trace formula.

    (n/2) sum_j log(2 pi sigma2 alpha_j) + n/(2 sigma2) tr{(I-B)^T diag(alpha)^-1 (I-B) S}
    """
    n, p = cov.n, cov.p
    a = _alpha(alpha, p)
    M = np.eye(p) - np.asarray(B)
    tr = float(np.trace(M.T @ np.diag(1 / a) @ M @ cov.S))
    return 0.5 * n * (p * (LOG_2PI + math.log(sigma2)) + float(np.sum(np.log(a)))) + n * tr / (2 * sigma2)


@dataclass(frozen=True, eq=False)
class Fit:
    """A scored DAG. ``kind`` is ``"equal"`` (one shared noise scale) or ``"pernode"``.

    ``score = nll + lam * k``. ``n_variance_params`` counts the free noise
    parameters (1 or p) and enters :attr:`bic`, which is what model comparisons
    across kinds should use.
    """

    dag: Dag
    B_hat: np.ndarray
    sigma2_hat: float
    nll: float
    k: int
    score: float
    lam: float
    kind: str = "equal"
    residual_variances: np.ndarray = field(default=None, repr=False)
    n: int = 1
    alpha: np.ndarray = field(default=None, repr=False)

    @property
    def n_variance_params(self) -> int:
        return 1 if self.kind == "equal" else self.dag.p

    @property
    def bic(self) -> float:
        return self.score + self.lam * self.n_variance_params

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "p": self.dag.p,
            "n": self.n,
            "edges": [
                {"parent": u, "child": v, "beta": float(self.B_hat[v, u])}
                for u, v in self.dag.sorted_edges()
            ],
            "sigma2_hat": float(self.sigma2_hat),
            "residual_variances": [float(x) for x in self.residual_variances],
            "nll": float(self.nll),
            "k": self.k,
            "lambda": float(self.lam),
            "score": float(self.score),
            "n_variance_params": self.n_variance_params,
            "bic": float(self.bic),
        }
        if self.alpha is not None:
            d["alpha"] = [float(x) for x in self.alpha]
        return d


def equal_variance_bic(dag: Dag, cov: CovarianceSummary, lam: float | None = None, alpha=None) -> Fit:
    """Profile likelihood score with noise covariance sigma^2 diag(alpha).

    At the profile the nll is (np/2) log(2 pi sigma2_hat) + (n/2) sum log alpha + np/2.
    ``lam`` defaults to log(n)/2 (BIC).
    """
    _check_dag(dag, cov)
    lam = default_lambda(cov.n) if lam is None else float(lam)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    a = _alpha(alpha, cov.p)
    B = fit_coefficients(dag, cov)
    s2 = profiled_sigma2(dag, B, cov, a)
    n, p = cov.n, cov.p
    nll = 0.5 * n * p * (LOG_2PI + math.log(s2)) + 0.5 * n * float(np.sum(np.log(a))) + 0.5 * n * p
    k = dag.num_edges
    rv = np.diag(residual_covariance(B, cov)).copy()
    return Fit(dag, B, s2, nll, k, nll + lam * k, lam, "equal", rv, n, None if alpha is None else a)


def per_node_variance_bic(dag: Dag, cov: CovarianceSummary, lam: float | None = None) -> Fit:
    """Score with a free noise variance per node: (n/2) sum_j {log(2 pi s_j) + 1}."""
    _check_dag(dag, cov)
    lam = default_lambda(cov.n) if lam is None else float(lam)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    B = np.zeros((cov.p, cov.p))
    rv = np.empty(cov.p)
    for j in range(cov.p):
        pa = sorted(dag.parents(j))
        coef, rv[j] = node_regression(cov.S, j, pa)
        if pa:
            B[j, pa] = coef
        if rv[j] <= PIVOT_TOL * cov.S[j, j] or rv[j] <= 0:
            raise ScoreUndefined(f"residual variance of node {j} vanishes")
    nll = 0.5 * cov.n * float(np.sum(LOG_2PI + np.log(rv) + 1))
    k = dag.num_edges
    return Fit(dag, B, float(np.mean(rv)), nll, k, nll + lam * k, lam, "pernode", rv, cov.n)


def score_dag(dag, cov, kind="equal", lam=None, alpha=None) -> Fit:
    if kind == "equal":
        return equal_variance_bic(dag, cov, lam, alpha)
    if kind == "pernode":
        return per_node_variance_bic(dag, cov, lam)
    raise ValueError(f"unknown score kind {kind!r}")


def population_score(dag: Dag, Sigma, lambda_pop: float = 0.0) -> float:
    """Per-sample expected score (p/2) log(2 pi sigma2) + p/2 + lambda_pop * |E|."""
    return equal_variance_bic(dag, CovarianceSummary.population(Sigma), lambda_pop).score


def conditional_variance(Sigma, target: int, given=()) -> float:
    """Var(X_target | X_given) = s_tt - S_tg S_gg^-1 S_gt for a Gaussian vector."""
    Sigma = np.asarray(Sigma, dtype=float)
    given = list(given)
    if target in given:
        raise ValueError("target must not be among the conditioning variables")
    if not given:
        return float(Sigma[target, target])
    S22 = Sigma[np.ix_(given, given)]
    s12 = Sigma[given, target]
    try:
        L = np.linalg.cholesky(S22)
    except np.linalg.LinAlgError:
        raise ValueError("conditioning block is not positive definite") from None
    if np.min(np.diag(L)) ** 2 <= PIVOT_TOL * np.max(np.diag(S22)):
        raise ValueError("conditioning block is numerically singular")
    y = np.linalg.solve(L, s12)
    return float(Sigma[target, target] - y @ y)


class LocalScorer:
    """Decomposed score used by the search: one cached regression per (node, parent set).

    ``delta`` returns the score change for replacing the parent sets of a few
    nodes, expressed so that a common rescaling of the data cancels exactly:
    the equal-variance change is (np/2) log1p(d/total) + lam * dk.
    """

    def __init__(self, cov: CovarianceSummary, kind: str = "equal", lam: float | None = None, alpha=None):
        if kind not in ("equal", "pernode"):
            raise ValueError(f"unknown score kind {kind!r}")
        if kind == "pernode" and alpha is not None:
            raise ValueError("variance weights only apply to the equal-variance score")
        self.cov = cov
        self.kind = kind
        self.lam = default_lambda(cov.n) if lam is None else float(lam)
        self.alpha = _alpha(alpha, cov.p)
        self.weighted_alpha = alpha is not None
        self._cache = {}
        self.evaluations = 0

    def node_rv(self, j: int, parents: frozenset):
        """Weighted residual variance of node j, or None when undefined."""
        key = (j, parents)
        hit = self._cache.get(key)
        if hit is not None or key in self._cache:
            return hit
        try:
            _, rv = node_regression(self.cov.S, j, sorted(parents))
            rv /= self.alpha[j]
            if self.kind == "pernode" and (rv <= PIVOT_TOL * self.cov.S[j, j] / self.alpha[j] or rv <= 0):
                rv = None
        except ScoreUndefined:
            rv = None
        self._cache[key] = rv
        return rv

    def residuals(self, parents) -> np.ndarray | None:
        out = np.empty(len(parents))
        for j, pa in enumerate(parents):
            rv = self.node_rv(j, pa)
            if rv is None:
                return None
            out[j] = rv
        return out

    def is_defined(self, rv: np.ndarray) -> bool:
        if self.kind == "equal":
            total = float(np.sum(rv))
            return total > PIVOT_TOL * float(np.max(np.diag(self.cov.S) / self.alpha))
        return True

    def delta(self, rv, changes: dict, dk: int, total: float | None = None):
        """Score change when node j's parents become ``changes[j]``; None if undefined.

        ``total`` may pass in a precomputed ``sum(rv)``.
        """
        self.evaluations += 1
        n, p = self.cov.n, self.cov.p
        if self.kind == "equal":
            if total is None:
                total = float(np.sum(rv))
            d = 0.0
            for j, parents in changes.items():
                new = self.node_rv(j, parents)
                if new is None:
                    return None
                d += new - rv[j]
            if not total + d > PIVOT_TOL * total:
                return None
            return 0.5 * n * p * math.log1p(d / total) + self.lam * dk
        d = 0.0
        for j, parents in changes.items():
            new = self.node_rv(j, parents)
            if new is None:
                return None
            d += math.log(new / rv[j])
        return 0.5 * n * d + self.lam * dk

    def total_score(self, rv: np.ndarray, k: int) -> float:
        n, p = self.cov.n, self.cov.p
        if self.kind == "equal":
            nll = (0.5 * n * p * (LOG_2PI + math.log(float(np.sum(rv)) / p) + 1)
                   + 0.5 * n * float(np.sum(np.log(self.alpha))))
        else:
            nll = 0.5 * n * float(np.sum(LOG_2PI + np.log(rv) + 1))
        return nll + self.lam * k

    def fit(self, dag: Dag) -> Fit:
        if self.kind == "equal":
            return equal_variance_bic(dag, self.cov, self.lam, self.alpha if self.weighted_alpha else None)
        return per_node_variance_bic(dag, self.cov, self.lam)
