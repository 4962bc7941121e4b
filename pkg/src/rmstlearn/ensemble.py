"""V-fold machinery and the two pseudo-observation super learners.

The standard-variant computes pseudo-values once on the full sample, then
runs ordinary stacking on them: per fold, candidates train on out-of-fold
(value, covariate) pairs and predict the held-out fold. The split-variant
rotates three roles per fold v: fold v is validated, fold v+1 (wrapping)
fits the reference curve that produces the validation fold's split
pseudo-values, and the remaining folds train the candidates (on their own
standard pseudo-values, mirroring how the procedure is evaluated).

Both variants finish identically: candidates are refit on full-sample
standard pseudo-values, and either the risk-minimizing candidate is kept
(discrete) or candidates are blended with NNLS simplex weights fitted on
the out-of-fold prediction matrix (continuous).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BadFoldCount, DegenerateKMFold, DimensionMismatch, SchemaError
from .learners import (
    FittedModel,
    LearnerSpec,
    fit_learner,
    model_from_params,
    model_params,
    nnls,
    predict,
)
from .pseudo import split_pobs, standard_pobs
from .survival import Dataset
from .util import rng_stream


@dataclass(frozen=True)
class FoldAssignment:
    """Balanced random partition of n indices into V folds (labels 0..V-1)."""

    n: int
    V: int
    fold_of: np.ndarray

    def __post_init__(self):
        f = np.ascontiguousarray(np.asarray(self.fold_of, dtype=np.int64))
        f.setflags(write=False)
        object.__setattr__(self, "fold_of", f)
        sizes = np.bincount(f, minlength=self.V)
        if len(f) != self.n or sizes.min() == 0 or sizes.max() - sizes.min() > 1:
            raise BadFoldCount(
                f"fold assignment must cover {self.n} rows with sizes differing by <= 1"
            )


def make_folds(n: int, V: int, seed: int) -> FoldAssignment:
    """Uniformly random balanced folds; deterministic given (n, V, seed)."""
    if V < 2 or V > n:
        raise BadFoldCount(f"need 2 <= V <= n, got V={V}, n={n}")
    perm = rng_stream(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % V
    return FoldAssignment(n, V, fold_of)


@dataclass(frozen=True)
class LevelOneData:
    """Out-of-fold candidate predictions, their targets, and risks.

    Row i of ``Z`` comes from models never trained on row i. ``cv_risks[k]``
    is the mean squared residual of column k against ``targets``.
    ``rotation_models[v][k]`` is candidate k trained for rotation v.
    """

    Z: np.ndarray
    targets: np.ndarray
    cv_risks: np.ndarray
    rotation_models: list = field(repr=False, default_factory=list)
    folds: FoldAssignment | None = None


@dataclass(frozen=True)
class SuperLearnerModel:
    """Fitted ensemble: candidates refit on the full sample, plus either
    NNLS weights (continuous) or a selected index (discrete)."""

    mode: str  # "discrete" | "continuous"
    algorithm: str  # "standard" | "split"
    library: list
    weights: np.ndarray | None
    selected: int | None
    final_models: list
    tau: float
    clamp: bool
    cv_risks: np.ndarray
    V: int
    seed: int
    train_d: int


def cv_level_one_standard(
    data: Dataset, library: list[LearnerSpec], folds: FoldAssignment, tau: float,
    clamp: bool = False,
) -> LevelOneData:
    """Out-of-fold stacking data for the standard algorithm.

    Pseudo-values are computed once on all rows, before any fold loop.
    """
    gamma = standard_pobs(data, tau, clamp=clamp).values
    return _assemble(data, library, folds, tau, clamp, gamma, _standard_rotation)


def cv_level_one_split(
    data: Dataset, library: list[LearnerSpec], folds: FoldAssignment, tau: float,
    clamp: bool = False,
) -> LevelOneData:
    """Out-of-fold stacking data for the split algorithm (V >= 3)."""
    if folds.V < 3:
        raise BadFoldCount(f"the split algorithm needs V >= 3, got V={folds.V}")
    return _assemble(data, library, folds, tau, clamp, None, _split_rotation)


def _standard_rotation(data, folds, v, tau, clamp, gamma):
    val = folds.fold_of == v
    train = ~val
    return train, val, gamma[train], gamma[val]


def _split_rotation(data, folds, v, tau, clamp, gamma):
    val = folds.fold_of == v
    km = folds.fold_of == (v + 1) % folds.V
    train = ~(val | km)
    km_set = data.subset(km)
    if not km_set.event.any():
        raise DegenerateKMFold(f"rotation {v}: KM fold {(v + 1) % folds.V} has no events")
    targets_val = split_pobs(km_set, data.subset(val), tau, clamp=clamp).values
    targets_train = standard_pobs(data.subset(train), tau, clamp=clamp).values
    return train, val, targets_train, targets_val


def _assemble(data, library, folds, tau, clamp, gamma, rotation):
    if not library:
        raise SchemaError("the candidate library must not be empty")
    n, K = data.n, len(library)
    X = data.covariates
    Z = np.empty((n, K))
    targets = np.empty(n) if gamma is None else np.asarray(gamma, dtype=float)
    rotation_models = []
    horizon = tau if clamp else None
    for v in range(folds.V):
        train, val, t_train, t_val = rotation(data, folds, v, tau, clamp, gamma)
        if gamma is None:
            targets[val] = t_val
        models = [fit_learner(spec, X[train], t_train) for spec in library]
        for k, model in enumerate(models):
            Z[val, k] = predict(model, X[val], tau=horizon)
        rotation_models.append(models)
    cv_risks = np.mean((targets[:, None] - Z) ** 2, axis=0)
    return LevelOneData(Z, targets, cv_risks, rotation_models, folds)


def select_discrete(level1: LevelOneData) -> int:
    """Index of the candidate with the smallest cross-validated risk;
    ties resolve to the smallest index."""
    return int(np.argmin(level1.cv_risks))


def fit_super_learner(
    data: Dataset,
    library: list[LearnerSpec],
    V: int,
    tau: float,
    mode: str = "continuous",
    algorithm: str = "standard",
    seed: int = 0,
    clamp: bool = False,
) -> SuperLearnerModel:
    """Fit the ensemble end to end.

    The final refit uses full-sample standard pseudo-values for both
    algorithms; the algorithms differ only in how the level-one data (and
    hence the weights or the selected index) are produced.
    """
    if mode not in ("discrete", "continuous"):
        raise SchemaError(f"mode must be 'discrete' or 'continuous', got {mode!r}")
    if algorithm not in ("standard", "split"):
        raise SchemaError(f"algorithm must be 'standard' or 'split', got {algorithm!r}")
    folds = make_folds(data.n, V, seed)
    level_one = (
        cv_level_one_standard(data, library, folds, tau, clamp=clamp)
        if algorithm == "standard"
        else cv_level_one_split(data, library, folds, tau, clamp=clamp)
    )
    full_gamma = standard_pobs(data, tau, clamp=clamp).values
    X = data.covariates
    if mode == "discrete":
        k = select_discrete(level_one)
        final = [fit_learner(library[k], X, full_gamma)]
        weights, selected = None, k
    else:
        weights = nnls(level_one.Z, level_one.targets, normalize=True)
        final = [fit_learner(spec, X, full_gamma) for spec in library]
        selected = None
    return SuperLearnerModel(
        mode=mode, algorithm=algorithm, library=list(library), weights=weights,
        selected=selected, final_models=final, tau=tau, clamp=clamp,
        cv_risks=level_one.cv_risks, V=V, seed=seed, train_d=data.d,
    )


def sl_predict(model: SuperLearnerModel, X: np.ndarray) -> np.ndarray:
    """Ensemble prediction: the selected candidate, or the weighted blend."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.train_d:
        raise DimensionMismatch(f"expected {model.train_d} covariates, got shape {X.shape}")
    horizon = model.tau if model.clamp else None
    if model.mode == "discrete":
        return predict(model.final_models[0], X, tau=horizon)
    out = np.zeros(X.shape[0])
    for w, fitted in zip(model.weights, model.final_models):
        if w != 0.0:
            out += w * predict(fitted, X, tau=horizon)
    return out


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------


def model_to_dict(model: SuperLearnerModel) -> dict:
    return {
        "format": "rmstlearn-model/1",
        "mode": model.mode,
        "algorithm": model.algorithm,
        "library": [s.to_dict() for s in model.library],
        "weights": None if model.weights is None else [float(w) for w in model.weights],
        "selected": model.selected,
        "final_models": [
            {"spec": m.spec.to_dict(), "params": model_params(m)} for m in model.final_models
        ],
        "tau": float(model.tau),
        "clamp": bool(model.clamp),
        "cv_risks": [float(r) for r in model.cv_risks],
        "V": int(model.V),
        "seed": int(model.seed),
        "train_d": int(model.train_d),
    }


def model_from_dict(doc: dict) -> SuperLearnerModel:
    if doc.get("format") != "rmstlearn-model/1":
        raise SchemaError(f"unrecognized model format {doc.get('format')!r}")
    train_d = int(doc["train_d"])
    final = [
        model_from_params(LearnerSpec.from_dict(m["spec"]), m["params"], train_d)
        for m in doc["final_models"]
    ]
    weights = doc["weights"]
    return SuperLearnerModel(
        mode=doc["mode"],
        algorithm=doc["algorithm"],
        library=[LearnerSpec.from_dict(s) for s in doc["library"]],
        weights=None if weights is None else np.asarray(weights, dtype=float),
        selected=doc["selected"],
        final_models=final,
        tau=float(doc["tau"]),
        clamp=bool(doc["clamp"]),
        cv_risks=np.asarray(doc["cv_risks"], dtype=float),
        V=int(doc["V"]),
        seed=int(doc["seed"]),
        train_d=train_d,
    )


def save_model(model: SuperLearnerModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> SuperLearnerModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
