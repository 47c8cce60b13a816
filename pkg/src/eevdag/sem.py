"""Linear Gaussian structural equation models: construction, random generation, sampling.

A model is ``X = B X + N`` with ``N ~ N(0, sigma2 * diag(alpha))``; row ``j`` of
``B`` holds the coefficients of the parents of ``X_j`` (``B[j, k] != 0`` iff k -> j).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Dag, GraphError, topological_order


class ModelError(ValueError):
    pass


class DataError(ValueError):
    pass


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox generator from an int, a sequence of ints, or a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    elif isinstance(seed, (list, tuple)):
        ss = np.random.SeedSequence([int(s) for s in seed])
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class LinearGaussianSem:
    B: np.ndarray
    sigma2: float = 1.0
    alpha: np.ndarray = None
    dag: Dag = field(init=False, repr=False)

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ModelError(f"coefficient matrix must be square, got shape {B.shape}")
        if not np.all(np.isfinite(B)):
            raise ModelError("coefficient matrix has non-finite entries")
        p = B.shape[0]
        if np.any(np.diag(B) != 0):
            raise ModelError("coefficient matrix has a nonzero diagonal (self-loop)")
        ks, js = np.nonzero(B.T)
        try:
            dag = Dag(p, frozenset(zip(ks.tolist(), js.tolist())))
        except GraphError as exc:
            raise ModelError(f"support of B is not acyclic: {exc}") from None
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ModelError(f"sigma2 must be positive and finite, got {self.sigma2}")
        alpha = np.ones(p) if self.alpha is None else np.array(self.alpha, dtype=float)
        if alpha.shape != (p,) or not np.all(alpha > 0) or not np.all(np.isfinite(alpha)):
            raise ModelError("alpha must be a length-p vector of positive weights")
        B.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "dag", dag)

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @property
    def noise_variances(self) -> np.ndarray:
        return self.sigma2 * self.alpha

    def to_dict(self) -> dict:
        edges = [[j, k, float(self.B[j, k])] for k, j in self.dag.sorted_edges()]
        return {
            "p": self.p,
            "edges": edges,
            "sigma2": self.sigma2,
            "alpha": [float(a) for a in self.alpha],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearGaussianSem":
        try:
            p = int(d["p"])
            B = np.zeros((p, p))
            for j, k, beta in d.get("edges", []):
                if beta == 0:
                    raise ModelError(f"edge {k}->{j} has a zero coefficient")
                B[int(j), int(k)] = float(beta)
            return cls(B, float(d.get("sigma2", 1.0)), d.get("alpha"))
        except (KeyError, TypeError, IndexError) as exc:
            raise ModelError(f"malformed model description: {exc!r}") from None


def new_sem(B, sigma2: float = 1.0, alpha=None) -> LinearGaussianSem:
    return LinearGaussianSem(B, sigma2, alpha)


def nonfaithful_example() -> LinearGaussianSem:
    """X1 = N1, X2 = -X1 + N2, X3 = X1 + X2 + N3 (zero-indexed here).

    The path coefficients cancel so that X1 and X3 are uncorrelated.
    """
    B = np.zeros((3, 3))
    B[1, 0] = -1.0
    B[2, 0] = 1.0
    B[2, 1] = 1.0
    return LinearGaussianSem(B, 1.0)


def population_covariance(sem: LinearGaussianSem) -> np.ndarray:
    """(I - B)^{-1} sigma2 diag(alpha) (I - B)^{-T}."""
    A = np.linalg.inv(np.eye(sem.p) - sem.B)
    S = A @ np.diag(sem.noise_variances) @ A.T
    return (S + S.T) / 2


# -- data --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DataSet:
    values: np.ndarray
    names: tuple = None

    def __post_init__(self):
        X = np.array(self.values, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"data must be a non-empty n x p matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("data contain non-finite entries")
        names = tuple(f"X{j + 1}" for j in range(X.shape[1])) if self.names is None else tuple(self.names)
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} names for {X.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("variable names must be unique")
        X.setflags(write=False)
        object.__setattr__(self, "values", X)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def sample(sem: LinearGaussianSem, n: int, seed) -> DataSet:
    """Draw ``n`` i.i.d. rows by ancestral sampling.

    An n x p standard-normal block is drawn first (column j feeds node j);
    variables are then filled in topological order.
    """
    if n < 1:
        raise DataError("n must be at least 1")
    rng = make_rng(seed)
    Z = rng.standard_normal((n, sem.p))
    X = np.zeros((n, sem.p))
    scale = np.sqrt(sem.noise_variances)
    for j in topological_order(sem.dag):
        pa = sorted(sem.dag.parents(j))
        X[:, j] = scale[j] * Z[:, j]
        if pa:
            X[:, j] += X[:, pa] @ sem.B[j, pa]
    return DataSet(X)


def rescale(data: DataSet, factors) -> DataSet:
    """Multiply column j by ``factors[j]``."""
    f = np.asarray(factors, dtype=float)
    if f.shape != (data.p,):
        raise DataError(f"need {data.p} scale factors, got shape {f.shape}")
    if not (np.all(np.isfinite(f)) and np.all(f > 0)):
        raise DataError("scale factors must be positive and finite")
    return DataSet(data.values * f, data.names)


# -- random models -----------------------------------------------------------


def sparse_edge_prob(p: int) -> float:
    return 3.0 / (2 * p - 2)


def perturbation_edge_prob(p: int) -> float:
    return 2.0 / (p - 1)


DENSE_EDGE_PROB = 0.3


@dataclass(frozen=True)
class RandomModelConfig:
    p: int
    p_edge: float
    coef_low: float = 0.1
    coef_high: float = 1.0
    variance_spread: float = 0.0
    seed: object = 0

    def __post_init__(self):
        if self.p < 1:
            raise ModelError("p must be positive")
        if not (0 < self.p_edge <= 1) and not (self.p == 1):
            raise ModelError(f"p_edge must lie in (0, 1], got {self.p_edge}")
        if not (0 < self.coef_low <= self.coef_high):
            raise ModelError("need 0 < coef_low <= coef_high")
        if not (0 <= self.variance_spread < 1):
            raise ModelError("variance_spread must lie in [0, 1)")


def random_dag_on_order(rng, p, p_edge):
    """Uniform random ordering, then each forward pair kept with probability ``p_edge``."""
    order = rng.permutation(p)
    keep = rng.random(p * (p - 1) // 2) < p_edge
    edges = []
    for (a, b), k in zip(((a, b) for a in range(p) for b in range(a + 1, p)), keep):
        if k:
            edges.append((int(order[a]), int(order[b])))
    return edges


def random_model(config: RandomModelConfig) -> LinearGaussianSem:
    """Random SEM in the style of the sparse/dense/perturbation simulations.

    Draw order: ordering permutation; p(p-1)/2 edge coins over forward pairs;
    for each kept edge (in pair order) a sign coin and a magnitude; finally p
    noise variances when ``variance_spread > 0``.
    """
    c = config
    rng = make_rng(c.seed)
    edges = random_dag_on_order(rng, c.p, c.p_edge)
    B = np.zeros((c.p, c.p))
    for k, j in edges:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        B[j, k] = sign * rng.uniform(c.coef_low, c.coef_high)
    if c.variance_spread > 0:
        alpha = rng.uniform(1 - c.variance_spread, 1 + c.variance_spread, size=c.p)
    else:
        alpha = np.ones(c.p)
    return LinearGaussianSem(B, 1.0, alpha)


# -- file formats ------------------------------------------------------------


def read_csv(path) -> DataSet:
    """Read a header-plus-rows CSV; malformed cells are reported by row and column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    names = [h.strip() for h in rows[0]]
    values = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(names):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(names)}")
        vals = []
        for j, cell in enumerate(row, start=1):
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: row {i}, column {j} ({names[j - 1]!r}): "
                                f"not a number: {cell!r}") from None
        values.append(vals)
    if not values:
        raise DataError(f"{path}: no data rows")
    return DataSet(np.array(values), tuple(names))


def write_csv(data: DataSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(data.names)
        for row in data.values:
            w.writerow([repr(float(x)) for x in row])


def write_model(sem: LinearGaussianSem, path) -> None:
    with open(path, "w") as fh:
        json.dump(sem.to_dict(), fh, indent=2)
        fh.write("\n")


def read_model(path) -> LinearGaussianSem:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: invalid JSON: {exc}") from None
    return LinearGaussianSem.from_dict(d)
