"""Fitting the sparse ReLU-network regression model.

The model is linear in a fixed dictionary: the ReLU-product
approximations of every sparse-grid basis function.  Fitting therefore
means (i) min-max scaling the covariates into the unit cube, (ii)
assembling the feature matrix of approximate basis values, and (iii)
minimising ``sum_i loss(features_i . gamma, y_i) + lambda_star/2 *
gamma.gamma`` with full-batch Adam.  ``lambda_star`` equals the tuning
parameter ``kappa`` (the per-sample ridge weight is ``kappa / n``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .losses import LossSpec, loss_subgradient, loss_value
from .relu_product import pair_product
from .sparse_grid import SparseGridBasis, enumerate_basis, hat_eval

MODEL_SCHEMA_VERSION = 1


class ConstantColumnError(ValueError):
    """A covariate column is constant and cannot be min-max scaled."""


class NonFiniteObjectiveError(RuntimeError):
    """The optimiser produced a non-finite objective or gradient."""


def hyperparams_from_n(n: int, c: int = 0) -> tuple[int, int]:
    """Schedule ``(m, R)`` from the sample size.

    ``m = max(floor(0.2 * log2 n) + c, 0)`` and
    ``R = 3 * max(floor(0.2 * log2 n), m)``; the offset ``c`` trades
    grid resolution against variance.
    """
    if n < 2:
        raise ValueError(f"sample size must be >= 2, got {n}")
    base = math.floor(0.2 * math.log2(n))
    m = max(base + c, 0)
    R = 3 * max(base, m)
    return m, R


@dataclass(frozen=True)
class Scaler:
    """Per-column min-max scaler onto [0, 1] with clamping at predict time."""

    mins: np.ndarray
    maxs: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError("scaling needs a 2-d array with at least two rows")
        mins = X.min(axis=0)
        maxs = X.max(axis=0)
        constant = np.nonzero(maxs == mins)[0]
        if constant.size:
            raise ConstantColumnError(
                f"column(s) {constant.tolist()} are constant; min-max scaling is undefined"
            )
        return cls(mins=mins, maxs=maxs)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        scaled = (X - self.mins) / (self.maxs - self.mins)
        return np.clip(scaled, 0.0, 1.0)


def scale_covariates(X: np.ndarray) -> tuple[np.ndarray, Scaler]:
    """Fit a scaler on ``X`` and return the scaled matrix with it."""
    scaler = Scaler.fit(X)
    return scaler.transform(X), scaler


@dataclass(frozen=True)
class FeatureMap:
    """Maps unit-cube points to the vector of approximate basis values.

    Feature order follows the basis id order.  Internally a binary tree
    of pair products is evaluated per id; subtrees shared between ids
    (same coordinate span, same level/node sub-vector) are computed once
    per batch, which collapses the cost for large bases.
    """

    basis: SparseGridBasis
    R: int

    def __call__(self, X01: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X01, dtype=float))
        d = self.basis.dimension
        if X.shape[1] != d:
            raise ValueError(f"points have dimension {X.shape[1]}, basis has {d}")
        n = X.shape[0]
        out = np.empty((n, len(self.basis)))
        if n == 0:
            return out
        hat_cache: dict[tuple[int, int, int], np.ndarray] = {}
        tree_cache: dict[tuple, np.ndarray] = {}
        for col, bid in enumerate(self.basis.ids):
            out[:, col] = self._eval_id(bid, X, hat_cache, tree_cache)
        return out

    def _eval_id(self, bid, X, hat_cache, tree_cache) -> np.ndarray:
        d = bid.dimension
        leaves = []
        for j in range(d):
            key = (j, bid.level[j], bid.node[j])
            vals = hat_cache.get(key)
            if vals is None:
                vals = hat_eval(bid.level[j], bid.node[j], X[:, j])
                hat_cache[key] = vals
            leaves.append((j, j + 1, key[1:], vals))
        spans = leaves
        while len(spans) > 1:
            nxt = []
            clamped = len(spans) > 2
            for i in range(0, len(spans) - 1, 2):
                lo, _, sig_a, va = spans[i]
                _, hi, sig_b, vb = spans[i + 1]
                key = (lo, hi, sig_a + sig_b, clamped)
                vals = tree_cache.get(key)
                if vals is None:
                    vals = pair_product(self.R, va, vb)
                    if clamped:
                        vals = np.clip(vals, 0.0, 1.0)
                    tree_cache[key] = vals
                nxt.append((lo, hi, sig_a + sig_b, vals))
            if len(spans) % 2 == 1:
                nxt.append(spans[-1])
            spans = nxt
        return spans[0][3]


def feature_matrix(fmap: FeatureMap, X01: np.ndarray) -> np.ndarray:
    """Rows of approximate basis values for unit-cube points ``X01``."""
    return fmap(X01)


def objective(
    gamma: np.ndarray,
    Phi: np.ndarray,
    y: np.ndarray,
    loss: LossSpec,
    lambda_star: float,
) -> float:
    """Penalised empirical risk ``sum_i loss(Phi_i . gamma, y_i) + lambda_star/2 |gamma|^2``."""
    gamma = np.asarray(gamma, dtype=float)
    if Phi.shape[1] != gamma.shape[0] or Phi.shape[0] != np.shape(y)[0]:
        raise ValueError(
            f"shape mismatch: Phi {Phi.shape}, gamma {gamma.shape}, y {np.shape(y)}"
        )
    if lambda_star < 0:
        raise ValueError("lambda_star must be nonnegative")
    total = float(np.sum(loss_value(loss, Phi @ gamma, y)))
    return total + 0.5 * lambda_star * float(gamma @ gamma)


def objective_gradient(
    gamma: np.ndarray,
    Phi: np.ndarray,
    y: np.ndarray,
    loss: LossSpec,
    lambda_star: float,
) -> np.ndarray:
    return Phi.T @ loss_subgradient(loss, Phi @ gamma, y) + lambda_star * gamma


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    def step(self, gamma, grad, alpha, beta1, beta2, eps):
        self.t += 1
        self.m = beta1 * self.m + (1.0 - beta1) * grad
        self.v = beta2 * self.v + (1.0 - beta2) * grad * grad
        m_hat = self.m / (1.0 - beta1 ** self.t)
        v_hat = self.v / (1.0 - beta2 ** self.t)
        update = alpha * m_hat / (np.sqrt(v_hat) + eps)
        return gamma - update, update


@dataclass(frozen=True)
class FitConfig:
    """Everything the fitter needs besides the data.

    ``kappa`` is the ridge tuning parameter (``lambda = kappa / n``);
    ``c_offset`` shifts the sample-size schedule for ``m``.  The Adam
    constants default to step size 0.1, decay rates 0.9 / 0.999 and
    eps 1e-8.  Optimisation runs full-batch unless ``batch_size`` is
    set, stopping at ``epochs`` or when the sup-norm of the parameter
    update falls below ``tol``.
    """

    loss: LossSpec
    kappa: float = 1.0
    c_offset: int = 0
    epochs: int = 5000
    tol: float = 1e-8
    seed: int = 0
    alpha: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int | None = None
    track_objective: bool = False

    def __post_init__(self) -> None:
        if self.alpha <= 0 or not (0 < self.beta1 < 1) or not (0 < self.beta2 < 1) or self.eps <= 0:
            raise ValueError("need alpha > 0, beta1/beta2 in (0, 1), eps > 0")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


@dataclass
class FitDiagnostics:
    final_objective: float
    epochs_run: int
    converged: bool
    sup_norm: float = float("nan")
    objective_trace: list[float] = field(default_factory=list)


def adam_fit(Phi: np.ndarray, y: np.ndarray, config: FitConfig) -> tuple[np.ndarray, FitDiagnostics]:
    """Minimise the penalised empirical risk with Adam from gamma = 0.

    Full-batch by default: one gradient of the whole objective per
    epoch.  With ``batch_size`` set, each epoch walks a seeded random
    permutation in batches (the ridge term is split proportionally).
    Deterministic given (data, config).
    """
    if config.epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {config.epochs}")
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = Phi.shape
    lambda_star = config.kappa
    gamma = np.zeros(p)
    state = AdamState(m=np.zeros(p), v=np.zeros(p))
    trace: list[float] = []
    gen = rng.stream(config.seed, "adam-batches") if config.batch_size else None

    converged = False
    epochs_run = 0
    for epoch in range(config.epochs):
        epochs_run = epoch + 1
        if config.batch_size is None:
            grad = objective_gradient(gamma, Phi, y, config.loss, lambda_star)
            if not np.all(np.isfinite(grad)):
                raise NonFiniteObjectiveError(
                    f"non-finite gradient at epoch {epoch + 1}; "
                    f"objective={objective(gamma, Phi, y, config.loss, lambda_star)!r}"
                )
            gamma, update = state.step(
                gamma, grad, config.alpha, config.beta1, config.beta2, config.eps
            )
            sup_update = float(np.max(np.abs(update))) if p else 0.0
        else:
            order = gen.permutation(n)
            sup_update = 0.0
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                frac = len(idx) / n
                grad = objective_gradient(
                    gamma, Phi[idx], y[idx], config.loss, frac * lambda_star
                )
                if not np.all(np.isfinite(grad)):
                    raise NonFiniteObjectiveError(f"non-finite gradient at epoch {epoch + 1}")
                gamma, update = state.step(
                    gamma, grad, config.alpha, config.beta1, config.beta2, config.eps
                )
                sup_update = max(sup_update, float(np.max(np.abs(update))) if p else 0.0)
        if config.track_objective:
            trace.append(objective(gamma, Phi, y, config.loss, lambda_star))
        if sup_update <= config.tol:
            converged = True
            break

    final = objective(gamma, Phi, y, config.loss, lambda_star)
    if not np.isfinite(final):
        raise NonFiniteObjectiveError(f"non-finite objective {final!r} after {epochs_run} epochs")
    return gamma, FitDiagnostics(
        final_objective=final,
        epochs_run=epochs_run,
        converged=converged,
        objective_trace=trace,
    )


@dataclass
class SdrnModel:
    """A fitted model: coefficients plus everything needed to predict."""

    gamma: np.ndarray
    d: int
    m: int
    R: int
    loss: LossSpec
    kappa: float
    scaler: Scaler
    column_names: tuple[str, ...] | None = None
    diagnostics: FitDiagnostics | None = None
    _fmap: FeatureMap | None = None

    def feature_map(self) -> FeatureMap:
        if self._fmap is None:
            self._fmap = FeatureMap(basis=enumerate_basis(self.d, self.m), R=self.R)
        return self._fmap

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Scores ``features(x) . gamma`` for raw (unscaled) points."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"expected {self.d} covariates, got {X.shape[1]}")
        Phi = self.feature_map()(self.scaler.transform(X))
        return Phi @ self.gamma

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        from scipy.special import expit

        if self.loss.kind != "logistic":
            raise ValueError("probabilities are only defined for the logistic loss")
        return expit(self.predict(X))

    def predict_class(self, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        """Class labels; probability >= threshold maps to 1 (ties go to 1)."""
        return (self.predict_proba(X) >= threshold).astype(int)

    def to_json(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "d": self.d,
            "m": self.m,
            "R": self.R,
            "loss": {"kind": self.loss.kind, "delta": self.loss.delta, "tau": self.loss.tau},
            "kappa": self.kappa,
            "scaler": {"min": self.scaler.mins.tolist(), "max": self.scaler.maxs.tolist()},
            "columns": list(self.column_names) if self.column_names else None,
            "gamma": self.gamma.tolist(),
            "diagnostics": {
                "final_objective": self.diagnostics.final_objective,
                "epochs_run": self.diagnostics.epochs_run,
                "converged": self.diagnostics.converged,
                "sup_norm": self.diagnostics.sup_norm,
            }
            if self.diagnostics
            else None,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SdrnModel":
        version = doc.get("schema_version")
        if version != MODEL_SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema version {version!r}")
        loss = LossSpec(
            kind=doc["loss"]["kind"], delta=doc["loss"]["delta"], tau=doc["loss"]["tau"]
        )
        diag = None
        if doc.get("diagnostics"):
            diag = FitDiagnostics(
                final_objective=doc["diagnostics"]["final_objective"],
                epochs_run=doc["diagnostics"]["epochs_run"],
                converged=doc["diagnostics"]["converged"],
                sup_norm=doc["diagnostics"]["sup_norm"],
            )
        return cls(
            gamma=np.array(doc["gamma"], dtype=float),
            d=doc["d"],
            m=doc["m"],
            R=doc["R"],
            loss=loss,
            kappa=doc["kappa"],
            scaler=Scaler(
                mins=np.array(doc["scaler"]["min"], dtype=float),
                maxs=np.array(doc["scaler"]["max"], dtype=float),
            ),
            column_names=tuple(doc["columns"]) if doc.get("columns") else None,
            diagnostics=diag,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SdrnModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def fit_sdrn(
    X: np.ndarray,
    y: np.ndarray,
    config: FitConfig,
    m: int | None = None,
    R: int | None = None,
    column_names=None,
    fmap: FeatureMap | None = None,
    scaler: Scaler | None = None,
) -> SdrnModel:
    """Scale, featurise and fit; ``m``/``R`` override the n-schedule.

    A pre-built ``fmap`` (with matching ``m``/``R``) and ``scaler`` can
    be passed to amortise feature bookkeeping across repeated fits.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    m_sched, R_sched = hyperparams_from_n(n, config.c_offset)
    m = m_sched if m is None else m
    R = R_sched if R is None else R
    if scaler is None:
        scaler = Scaler.fit(X)
    X01 = scaler.transform(X)
    if fmap is None:
        fmap = FeatureMap(basis=enumerate_basis(X.shape[1], m), R=R)
    Phi = fmap(X01)
    gamma, diag = adam_fit(Phi, y, config)
    train_scores = Phi @ gamma
    diag.sup_norm = float(np.max(np.abs(train_scores))) if n else float("nan")
    model = SdrnModel(
        gamma=gamma,
        d=X.shape[1],
        m=m,
        R=R,
        loss=config.loss,
        kappa=config.kappa,
        scaler=scaler,
        column_names=tuple(column_names) if column_names else None,
        diagnostics=diag,
    )
    model._fmap = fmap
    return model
