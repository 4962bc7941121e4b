"""Candidate-learner registry behind a uniform fit/predict surface.

Built-in regressors: mean, ols, ridge, lasso, knn, tree, forest. All are
deterministic given their hyperparameters (the forest carries an explicit
seed), train on plain (X, y) arrays, and serialize their learned state to
JSON-able dicts. The registry is open: ``register`` adds a learner class,
which is how tests plug in instrumented probes.

Conventions shared by the shrinkage learners: features are centered and
scaled internally (population std; zero-variance columns get scale 1 and
coefficient 0) and the intercept is refit on the original scale. The ridge
normal equations use an n-scaled penalty and the lasso objective is
``RSS/(2n) + lam * l1``, so duplicating every row leaves both fits
unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DimensionMismatch, NonFinite, SchemaError, SingularDesign
from .util import rng_stream

log = logging.getLogger(__name__)

_REGISTRY: dict[str, type] = {}


def register(cls):
    """Class decorator: add a learner to the registry under ``cls.NAME``."""
    _REGISTRY[cls.NAME] = cls
    return cls


def registry_names() -> list[str]:
    return sorted(_REGISTRY)


@dataclass(frozen=True)
class LearnerSpec:
    """A registry name plus hyperparameter overrides (numbers only)."""

    name: str
    hyperparameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "hyperparameters", dict(self.hyperparameters))

    def to_dict(self) -> dict:
        return {"name": self.name, "hyperparameters": dict(self.hyperparameters)}

    @staticmethod
    def from_dict(d: dict) -> "LearnerSpec":
        return LearnerSpec(d["name"], dict(d.get("hyperparameters", {})))


@dataclass(frozen=True)
class FittedModel:
    """A realized learner: spec, learned state, and the training dimension."""

    spec: LearnerSpec
    impl: object
    train_d: int


def _make_learner(spec: LearnerSpec):
    if spec.name not in _REGISTRY:
        raise SchemaError(f"unknown learner {spec.name!r}; known: {registry_names()}")
    cls = _REGISTRY[spec.name]
    params = dict(cls.DEFAULTS)
    for key, val in spec.hyperparameters.items():
        if key not in params:
            raise SchemaError(f"learner {spec.name!r} has no hyperparameter {key!r}")
        params[key] = val
    return cls(**params)


def fit_learner(spec: LearnerSpec, X: np.ndarray, y: np.ndarray) -> FittedModel:
    """Train one candidate on (X, y); deterministic given the spec."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-d, got shape {X.shape}")
    if X.shape[0] != len(y):
        raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {len(y)}")
    if len(y) == 0:
        raise DimensionMismatch("cannot fit a learner on zero rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFinite("training data must be finite")
    impl = _make_learner(spec)
    impl.fit(X, y)
    return FittedModel(spec, impl, X.shape[1])


def predict(model: FittedModel, X: np.ndarray, tau: float | None = None) -> np.ndarray:
    """Predict; clamps into [0, tau] only when a horizon is supplied."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.train_d:
        raise DimensionMismatch(
            f"expected {model.train_d} covariates, got shape {X.shape}"
        )
    out = np.asarray(model.impl.predict(X), dtype=float)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"learner {model.spec.name!r} produced non-finite predictions")
    if tau is not None:
        out = np.clip(out, 0.0, tau)
    return out


def model_params(model: FittedModel) -> dict:
    return model.impl.to_params()


def model_from_params(spec: LearnerSpec, params: dict, train_d: int) -> FittedModel:
    impl = _make_learner(spec)
    impl.from_params(params)
    return FittedModel(spec, impl, train_d)


# --------------------------------------------------------------------------
# built-in learners
# --------------------------------------------------------------------------


@register
class MeanLearner:
    """Constant predictor: the training mean."""

    NAME = "mean"
    DEFAULTS: dict = {}

    def fit(self, X, y):
        self.mean_ = float(np.mean(y))
        return self

    def predict(self, X):
        return np.full(X.shape[0], self.mean_)

    def to_params(self):
        return {"mean": self.mean_}

    def from_params(self, p):
        self.mean_ = float(p["mean"])


class _LinearPredictMixin:
    def predict(self, X):
        return self.intercept_ + X @ self.coef_

    def to_params(self):
        return {"intercept": self.intercept_, "coef": list(map(float, self.coef_))}

    def from_params(self, p):
        self.intercept_ = float(p["intercept"])
        self.coef_ = np.asarray(p["coef"], dtype=float)


@register
class OLSLearner(_LinearPredictMixin):
    """Least squares via SVD; min_norm=1 keeps the minimum-norm solution on
    rank deficiency (with a logged warning), min_norm=0 raises instead."""

    NAME = "ols"
    DEFAULTS = {"min_norm": 1}

    def __init__(self, min_norm=1):
        self.min_norm = int(min_norm)

    def fit(self, X, y):
        Xa = np.column_stack([np.ones(X.shape[0]), X])
        coef, _, rank, _ = np.linalg.lstsq(Xa, y, rcond=None)
        if rank < Xa.shape[1]:
            if not self.min_norm:
                raise SingularDesign(
                    f"design has rank {rank} < {Xa.shape[1]} and min_norm is disabled"
                )
            log.warning("rank-deficient design (rank %d < %d); using minimum-norm fit",
                        rank, Xa.shape[1])
        self.intercept_ = float(coef[0])
        self.coef_ = coef[1:]
        return self


def _standardize(X):
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    sigma = np.where(sigma > 0, sigma, 1.0)
    return (X - mu) / sigma, mu, sigma


@register
class RidgeLearner(_LinearPredictMixin):
    """Standardized ridge: solves (Xs'Xs + n*lam*I) b = Xs'yc."""

    NAME = "ridge"
    DEFAULTS = {"lam": 0.1}

    def __init__(self, lam=0.1):
        if lam < 0:
            raise SchemaError(f"ridge lam must be >= 0, got {lam}")
        self.lam = float(lam)

    def fit(self, X, y):
        n, d = X.shape
        Xs, mu, sigma = _standardize(X)
        yc = y - y.mean()
        A = Xs.T @ Xs + n * self.lam * np.eye(d)
        b = np.linalg.solve(A, Xs.T @ yc) if d else np.empty(0)
        self.coef_ = b / sigma
        self.intercept_ = float(y.mean() - mu @ self.coef_)
        return self


@register
class LassoLearner(_LinearPredictMixin):
    """Cyclic coordinate descent for RSS/(2n) + lam*||b||_1 on standardized
    features; iterates until the KKT residual falls below tol."""

    NAME = "lasso"
    DEFAULTS = {"lam": 0.01, "tol": 1e-9, "max_sweeps": 50000}

    def __init__(self, lam=0.01, tol=1e-9, max_sweeps=50000):
        if lam < 0:
            raise SchemaError(f"lasso lam must be >= 0, got {lam}")
        self.lam = float(lam)
        self.tol = float(tol)
        self.max_sweeps = int(max_sweeps)

    def fit(self, X, y):
        n, d = X.shape
        Xs, mu, sigma = _standardize(X)
        yc = y - y.mean()
        col2 = (Xs * Xs).sum(axis=0) / n  # 1.0 except zero-variance columns
        beta = np.zeros(d)
        resid = yc.copy()
        self.objective_path_ = [self._objective(resid, beta, n)]
        for _ in range(self.max_sweeps):
            for j in range(d):
                if col2[j] == 0.0:
                    continue
                xj = Xs[:, j]
                rho = (xj @ resid) / n + col2[j] * beta[j]
                new = np.sign(rho) * max(abs(rho) - self.lam, 0.0) / col2[j]
                if new != beta[j]:
                    resid += xj * (beta[j] - new)
                    beta[j] = new
            self.objective_path_.append(self._objective(resid, beta, n))
            self.kkt_residual_ = self._kkt_residual(Xs, resid, beta, n)
            if self.kkt_residual_ <= self.tol:
                break
        self.coef_ = beta / sigma
        self.intercept_ = float(y.mean() - mu @ self.coef_)
        return self

    def _objective(self, resid, beta, n):
        return float(resid @ resid / (2 * n) + self.lam * np.abs(beta).sum())

    def _kkt_residual(self, Xs, resid, beta, n):
        grad = -(Xs.T @ resid) / n
        active = beta != 0
        viol = np.abs(grad + self.lam * np.sign(beta)) * active
        slack = np.maximum(np.abs(grad) - self.lam, 0.0) * ~active
        return float(np.maximum(viol, slack).max()) if len(beta) else 0.0


@register
class KNNLearner:
    """Neighborhood mean over the k-th distinct distance radius.

    Counting distinct radii rather than points keeps predictions unchanged
    when training rows are duplicated; with continuous covariates it
    coincides with plain k-nearest-neighbors.
    """

    NAME = "knn"
    DEFAULTS = {"k": 10}

    def __init__(self, k=10):
        if k < 1:
            raise SchemaError(f"knn k must be >= 1, got {k}")
        self.k = int(k)

    def fit(self, X, y):
        self.X_ = X.copy()
        self.y_ = y.copy()
        return self

    def predict(self, X):
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], 2048):
            block = X[start:start + 2048]
            d2 = ((block[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=2)
            srt = np.sort(d2, axis=1)
            is_new = np.ones_like(srt, dtype=bool)
            is_new[:, 1:] = srt[:, 1:] > srt[:, :-1]
            rank = np.cumsum(is_new, axis=1)
            within = rank <= self.k
            radius = np.take_along_axis(
                srt, within.sum(axis=1, keepdims=True) - 1, axis=1
            )
            mask = d2 <= radius
            out[start:start + 2048] = (mask @ self.y_) / mask.sum(axis=1)
        return out

    def to_params(self):
        return {"X": [list(map(float, r)) for r in self.X_], "y": list(map(float, self.y_))}

    def from_params(self, p):
        self.X_ = np.asarray(p["X"], dtype=float)
        self.y_ = np.asarray(p["y"], dtype=float)


# --- CART machinery shared by tree and forest ---


def _grow_tree(X, y, *, max_depth, min_leaf, min_split, mtry, rng):
    """Grow a squared-error CART; returns parallel node arrays.

    ``mtry`` columns are drawn (sorted) per node when ``rng`` is given;
    sorted sampling makes mtry == d scan features in natural order, so a
    one-tree forest without bootstrap reproduces the plain tree exactly.
    """
    feature, threshold, left, right, value = [], [], [], [], []
    stack = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = node
        yn = y[idx]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(yn.mean()))
        if len(idx) < min_split or (max_depth > 0 and depth >= max_depth):
            continue
        if rng is not None and mtry < X.shape[1]:
            cols = np.sort(rng.choice(X.shape[1], size=mtry, replace=False))
        else:
            cols = np.arange(X.shape[1])
        split = _best_split(X[idx], yn, cols, min_leaf)
        if split is None:
            continue
        j, thr = split
        feature[node] = j
        threshold[node] = thr
        go_left = X[idx, j] <= thr
        # push right first so the left child is grown (and numbered) first
        stack.append((idx[~go_left], depth + 1, node, True))
        stack.append((idx[go_left], depth + 1, node, False))
    return {
        "feature": feature,
        "threshold": threshold,
        "left": left,
        "right": right,
        "value": value,
    }


def _best_split(X, y, cols, min_leaf):
    """Exhaustive best squared-error split; first feature wins ties."""
    n = len(y)
    total1 = y.sum()
    total2 = (y * y).sum()
    best = total2 - total1 * total1 / n - 1e-12  # must strictly improve
    found = None
    for j in cols:
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        s1 = np.cumsum(ys)[:-1]
        s2 = np.cumsum(ys * ys)[:-1]
        nl = np.arange(1, n)
        ok = xs[1:] > xs[:-1]
        ok &= (nl >= min_leaf) & (n - nl >= min_leaf)
        if not ok.any():
            continue
        sse = (s2 - s1 * s1 / nl) + ((total2 - s2) - (total1 - s1) ** 2 / (n - nl))
        sse = np.where(ok, sse, np.inf)
        pos = int(np.argmin(sse))
        if sse[pos] < best:
            best = sse[pos]
            found = (int(j), float((xs[pos] + xs[pos + 1]) / 2.0))
    return found


def _tree_predict(nodes, X):
    node = np.zeros(X.shape[0], dtype=np.int64)
    feature = np.asarray(nodes["feature"], dtype=np.int64)
    threshold = np.asarray(nodes["threshold"], dtype=float)
    left = np.asarray(nodes["left"], dtype=np.int64)
    right = np.asarray(nodes["right"], dtype=np.int64)
    value = np.asarray(nodes["value"], dtype=float)
    live = feature[node] >= 0
    while live.any():
        rows = np.flatnonzero(live)
        cur = node[rows]
        goes_left = X[rows, feature[cur]] <= threshold[cur]
        node[rows] = np.where(goes_left, left[cur], right[cur])
        live[rows] = feature[node[rows]] >= 0
    return value[node]


@register
class TreeLearner:
    """CART regression tree on squared error; max_depth=0 means unlimited."""

    NAME = "tree"
    DEFAULTS = {"max_depth": 0, "min_leaf": 5, "min_split": 10}

    def __init__(self, max_depth=0, min_leaf=5, min_split=10):
        self.max_depth = int(max_depth)
        self.min_leaf = max(1, int(min_leaf))
        self.min_split = max(2, int(min_split))

    def fit(self, X, y):
        self.nodes_ = _grow_tree(
            X, y, max_depth=self.max_depth, min_leaf=self.min_leaf,
            min_split=self.min_split, mtry=X.shape[1], rng=None,
        )
        return self

    def predict(self, X):
        return _tree_predict(self.nodes_, X)

    def to_params(self):
        return dict(self.nodes_)

    def from_params(self, p):
        self.nodes_ = dict(p)


@register
class ForestLearner:
    """Bagged CART forest with per-split feature sampling.

    mtry=0 means max(1, d // 3). Tree t draws its bootstrap sample and its
    split columns from the Philox substream (seed, t), so fits are
    bit-reproducible no matter how trees are scheduled.
    """

    NAME = "forest"
    DEFAULTS = {
        "n_trees": 50,
        "mtry": 0,
        "max_depth": 0,
        "min_leaf": 5,
        "min_split": 10,
        "bootstrap": 1,
        "seed": 0,
    }

    def __init__(self, n_trees=50, mtry=0, max_depth=0, min_leaf=5, min_split=10,
                 bootstrap=1, seed=0):
        if n_trees < 1:
            raise SchemaError(f"forest n_trees must be >= 1, got {n_trees}")
        self.n_trees = int(n_trees)
        self.mtry = int(mtry)
        self.max_depth = int(max_depth)
        self.min_leaf = max(1, int(min_leaf))
        self.min_split = max(2, int(min_split))
        self.bootstrap = int(bootstrap)
        self.seed = int(seed)

    def fit(self, X, y):
        n, d = X.shape
        mtry = self.mtry if self.mtry > 0 else max(1, d // 3)
        mtry = min(mtry, d)
        self.trees_ = []
        for t in range(self.n_trees):
            rng = rng_stream(self.seed, t)
            idx = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            self.trees_.append(
                _grow_tree(
                    X[idx], y[idx], max_depth=self.max_depth, min_leaf=self.min_leaf,
                    min_split=self.min_split, mtry=mtry, rng=rng,
                )
            )
        return self

    def predict(self, X):
        acc = np.zeros(X.shape[0])
        for nodes in self.trees_:
            acc += _tree_predict(nodes, X)
        return acc / len(self.trees_)

    def to_params(self):
        return {"trees": [dict(t) for t in self.trees_]}

    def from_params(self, p):
        self.trees_ = [dict(t) for t in p["trees"]]


# --------------------------------------------------------------------------
# non-negative least squares (meta-learner weights)
# --------------------------------------------------------------------------


def nnls(P: np.ndarray, y: np.ndarray, normalize: bool = True) -> np.ndarray:
    """Lawson-Hanson active-set NNLS, optionally normalized to the simplex.

    Returns w >= 0 minimizing ||y - P w||; ties in the entering-column rule
    resolve to the lowest index, so duplicated columns put all mass on the
    first. With ``normalize`` the weights are rescaled to sum to one (an
    all-zero solution falls back to uniform weights).
    """
    P = np.asarray(P, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if P.ndim != 2 or P.shape[0] != len(y):
        raise DimensionMismatch(f"P has shape {P.shape} but y has length {len(y)}")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(y))):
        raise NonFinite("nnls inputs must be finite")
    n, K = P.shape
    grad0 = P.T @ y
    tol = 1e-8 * max(1.0, float(np.abs(grad0).max()))
    x = np.zeros(K)
    passive = np.zeros(K, dtype=bool)
    w = grad0.copy()

    for _ in range(3 * K + 10):
        candidates = np.where(~passive, w, -np.inf)
        if not (~passive).any() or candidates.max() <= tol:
            break
        passive[int(np.argmax(candidates))] = True
        while True:
            z = np.zeros(K)
            sol, _, _, _ = np.linalg.lstsq(P[:, passive], y, rcond=None)
            z[passive] = sol
            if np.all(z[passive] > 0):
                x = z
                break
            shrink = passive & (z <= 0)
            denom = x[shrink] - z[shrink]
            ratios = np.where(denom > 0, x[shrink] / np.where(denom > 0, denom, 1.0), 0.0)
            alpha = float(ratios.min())
            x = x + alpha * (z - x)
            passive &= x > tol * 1e-4
            x[~passive] = 0.0
        w = P.T @ (y - P @ x)

    if not normalize:
        return x
    total = x.sum()
    return x / total if total > 0 else np.full(K, 1.0 / K)
