"""Domain types for the four-block multi-view factorization.

Each view ``X^(v)`` (features x instances) is approximated by::

    X^(v) ~ W_cd^(v) H_cd^T + W_cn^(v) H_cn^T + W_sd^(v) H_sd^(v)^T + W_sn^(v) H_sn^(v)^T

``cd``/``cn`` are the common discriminative / non-discriminative parts,
``sd``/``sn`` the view-specific ones.  Bases are stored per view so views may
have different feature counts; the common coefficient matrices ``H_cd`` and
``H_cn`` (and the label projection ``B_cd``) are single arrays shared by all
views.  Labels are predicted from the discriminative coefficients through
``B_cd H_cd^T + B_sd^(v) H_sd^(v)^T``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError, ValidationError

UNLABELED = -1

#: Floor applied to the initialization scale so all-zero views still get
#: strictly positive factors.
INIT_SCALE_FLOOR = 1e-8


class LossMode(str, enum.Enum):
    CROSS_ENTROPY = "ce"
    SQUARED_ERROR = "mse"


@dataclass(eq=False)
class MultiViewDataset:
    """Non-negative multi-view data with a shared instance axis.

    ``views[v]`` has shape ``(m_v, n)``.  ``labels`` holds class ids in
    ``[0, num_classes)`` or ``UNLABELED`` (-1).
    """

    views: list
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        self.views = [np.asarray(X, dtype=float) for X in self.views]
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        self.check()

    def check(self):
        if len(self.views) < 1:
            raise ValidationError("a dataset needs at least one view")
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        n = self.views[0].shape[1] if self.views[0].ndim == 2 else -1
        if n < 1:
            raise ValidationError("views must be 2-D with at least one instance")
        for v, X in enumerate(self.views):
            if X.ndim != 2 or X.shape[1] != n:
                raise DimensionMismatchError(
                    f"view {v} has shape {X.shape}, expected (m_{v}, {n})")
            if not np.all(np.isfinite(X)):
                raise ValidationError(f"view {v} contains non-finite entries")
            if np.any(X < 0):
                i, j = np.argwhere(X < 0)[0]
                raise ValidationError(f"view {v} has negative entry {X[i, j]} at feature {i}, instance {j}")
        if self.labels.shape != (n,):
            raise DimensionMismatchError(f"expected {n} labels, got {self.labels.shape[0]}")
        bad = (self.labels != UNLABELED) & ((self.labels < 0) | (self.labels >= self.num_classes))
        if np.any(bad):
            j = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"label {self.labels[j]} at instance {j} is outside [0, {self.num_classes})")

    @property
    def n(self) -> int:
        return self.views[0].shape[1]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def feature_dims(self) -> tuple:
        return tuple(X.shape[0] for X in self.views)

    @property
    def mask(self) -> np.ndarray:
        """Boolean vector, True where the instance is labeled."""
        return self.labels != UNLABELED

    def onehot(self) -> np.ndarray:
        """``c x n`` one-hot label matrix; unlabeled columns are all zero."""
        Y = np.zeros((self.num_classes, self.n))
        idx = np.flatnonzero(self.mask)
        Y[self.labels[idx], idx] = 1.0
        return Y

    def subset(self, idx) -> "MultiViewDataset":
        idx = np.asarray(idx, dtype=int)
        return MultiViewDataset([X[:, idx] for X in self.views], self.labels[idx],
                                self.num_classes, self.name)

    def with_labels(self, labels) -> "MultiViewDataset":
        return MultiViewDataset(self.views, labels, self.num_classes, self.name)


@dataclass(frozen=True)
class BlockDims:
    k1: int  # common discriminative
    k2: int  # common non-discriminative
    k3: int  # view-specific discriminative
    k4: int  # view-specific non-discriminative

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "k4"):
            val = getattr(self, name)
            if int(val) != val or val < 0:
                raise ValidationError(f"{name} must be a non-negative integer, got {val}")
        if self.k1 + self.k3 < 1:
            raise ValidationError("need at least one discriminative factor (k1 + k3 >= 1)")

    @property
    def total(self) -> int:
        return self.k1 + self.k2 + self.k3 + self.k4

    def as_tuple(self):
        return (self.k1, self.k2, self.k3, self.k4)


@dataclass(frozen=True)
class Hyperparams:
    dims: BlockDims
    alpha: float = 0.1
    beta: float = 0.1
    gamma: float = 1.0
    lambda_ridge: float = 1e-6
    loss_mode: LossMode = LossMode.CROSS_ENTROPY
    max_iters: int = 300
    rel_tol: float = 1e-5
    seed: int = 0
    step_shrink: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        object.__setattr__(self, "loss_mode", LossMode(self.loss_mode))
        if isinstance(self.dims, (tuple, list)):
            object.__setattr__(self, "dims", BlockDims(*self.dims))
        for name in ("alpha", "beta", "gamma"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {val}")
        if not (self.lambda_ridge > 0 and np.isfinite(self.lambda_ridge)):
            raise ValidationError(f"lambda_ridge must be > 0, got {self.lambda_ridge}")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValidationError("rel_tol must be > 0")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValidationError("seed must be an unsigned integer")
        if not 0 < self.step_shrink < 1:
            raise ValidationError("step_shrink must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise ValidationError("max_backtracks must be >= 1")

    def replace(self, **changes) -> "Hyperparams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims.as_tuple()),
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "lambda_ridge": self.lambda_ridge,
            "loss_mode": self.loss_mode.value,
            "max_iters": self.max_iters,
            "rel_tol": self.rel_tol,
            "seed": self.seed,
            "step_shrink": self.step_shrink,
            "max_backtracks": self.max_backtracks,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        d["dims"] = BlockDims(*d["dims"])
        return cls(**d)


class ViewBlocks(NamedTuple):
    """Every block seen from one view.  Shared blocks are the same objects."""

    W_cd: np.ndarray
    W_cn: np.ndarray
    W_sd: np.ndarray
    W_sn: np.ndarray
    H_cd: np.ndarray
    H_cn: np.ndarray
    H_sd: np.ndarray
    H_sn: np.ndarray
    B_cd: np.ndarray
    B_sd: np.ndarray


#: Per-view blocks (stored as lists) and shared blocks (single arrays).
VIEW_BLOCKS = ("W_cd", "W_cn", "W_sd", "W_sn", "H_sd", "H_sn", "B_sd")
SHARED_BLOCKS = ("H_cd", "H_cn", "B_cd")
ALL_BLOCKS = ("W_cd", "W_cn", "W_sd", "W_sn", "H_cd", "H_cn", "H_sd", "H_sn", "B_cd", "B_sd")


@dataclass(eq=False)
class FactorModel:
    W_cd: list
    W_cn: list
    W_sd: list
    W_sn: list
    H_cd: np.ndarray
    H_cn: np.ndarray
    H_sd: list
    H_sn: list
    B_cd: np.ndarray
    B_sd: list
    meta: dict = field(default_factory=dict)

    @property
    def n_views(self) -> int:
        return len(self.W_cd)

    @property
    def n(self) -> int:
        return self.H_cd.shape[0]

    @property
    def num_classes(self) -> int:
        return self.B_cd.shape[0]

    @property
    def dims(self) -> BlockDims:
        return BlockDims(self.H_cd.shape[1], self.H_cn.shape[1],
                         self.H_sd[0].shape[1], self.H_sn[0].shape[1])

    def view(self, v: int) -> ViewBlocks:
        return ViewBlocks(self.W_cd[v], self.W_cn[v], self.W_sd[v], self.W_sn[v],
                          self.H_cd, self.H_cn, self.H_sd[v], self.H_sn[v],
                          self.B_cd, self.B_sd[v])

    def get(self, name: str, v: int | None = None) -> np.ndarray:
        if name in SHARED_BLOCKS:
            return getattr(self, name)
        return getattr(self, name)[v]

    def set(self, name: str, value: np.ndarray, v: int | None = None):
        if name in SHARED_BLOCKS:
            setattr(self, name, value)
        else:
            getattr(self, name)[v] = value

    def copy(self) -> "FactorModel":
        kw = {}
        for name in ALL_BLOCKS:
            val = getattr(self, name)
            kw[name] = val.copy() if name in SHARED_BLOCKS else [a.copy() for a in val]
        return FactorModel(**kw, meta=dict(self.meta))

    def arrays(self):
        """Yield ``(name, v, array)`` for every stored matrix; ``v`` is None for shared blocks."""
        for name in ALL_BLOCKS:
            if name in SHARED_BLOCKS:
                yield name, None, getattr(self, name)
            else:
                for v, a in enumerate(getattr(self, name)):
                    yield name, v, a


def init_model(dataset: MultiViewDataset, hp: Hyperparams) -> FactorModel:
    """Random strictly positive W/H, zero B.

    Entries are drawn from (0, 1] and multiplied by ``sqrt(mean(X^(v)) / K)``
    (floored at 1e-8).  Shared coefficient blocks use the average of the
    per-view scales.
    """
    dataset.check()
    dims = hp.dims
    K = dims.total
    c, n = dataset.num_classes, dataset.n
    rng = np.random.default_rng(hp.seed)

    def draw(shape, scale):
        return (1.0 - rng.random(shape)) * scale

    scales = [max(np.sqrt(X.mean() / K), INIT_SCALE_FLOOR) for X in dataset.views]
    shared = float(np.mean(scales))
    W_cd, W_cn, W_sd, W_sn, H_sd, H_sn = [], [], [], [], [], []
    for X, s in zip(dataset.views, scales):
        m = X.shape[0]
        W_cd.append(draw((m, dims.k1), s))
        W_cn.append(draw((m, dims.k2), s))
        W_sd.append(draw((m, dims.k3), s))
        W_sn.append(draw((m, dims.k4), s))
    H_cd = draw((n, dims.k1), shared)
    H_cn = draw((n, dims.k2), shared)
    for s in scales:
        H_sd.append(draw((n, dims.k3), s))
        H_sn.append(draw((n, dims.k4), s))
    return FactorModel(
        W_cd=W_cd, W_cn=W_cn, W_sd=W_sd, W_sn=W_sn,
        H_cd=H_cd, H_cn=H_cn, H_sd=H_sd, H_sn=H_sn,
        B_cd=np.zeros((c, dims.k1)),
        B_sd=[np.zeros((c, dims.k3)) for _ in dataset.views],
    )


class Violation(NamedTuple):
    block: str
    view: int | None
    index: tuple | None
    rule: str
    detail: str


def _expected_shapes(dataset: MultiViewDataset, dims: BlockDims):
    c, n = dataset.num_classes, dataset.n
    shapes = {"H_cd": (n, dims.k1), "H_cn": (n, dims.k2), "B_cd": (c, dims.k1)}
    for v, m in enumerate(dataset.feature_dims):
        shapes["W_cd", v] = (m, dims.k1)
        shapes["W_cn", v] = (m, dims.k2)
        shapes["W_sd", v] = (m, dims.k3)
        shapes["W_sn", v] = (m, dims.k4)
        shapes["H_sd", v] = (n, dims.k3)
        shapes["H_sn", v] = (n, dims.k4)
        shapes["B_sd", v] = (c, dims.k3)
    return shapes


def validate(model: FactorModel, dataset: MultiViewDataset) -> list:
    """Check every model invariant against ``dataset``; return the violations found."""
    out = []
    for name in VIEW_BLOCKS:
        count = len(getattr(model, name))
        if count != dataset.n_views:
            out.append(Violation(name, None, None, "dimension",
                                 f"{count} view blocks, dataset has {dataset.n_views} views"))
    if out:
        return out
    try:
        dims = model.dims
    except (ValidationError, IndexError) as exc:
        return [Violation("dims", None, None, "dimension", str(exc))]
    expected = _expected_shapes(dataset, dims)
    for name, v, a in model.arrays():
        key = name if v is None else (name, v)
        if a.shape != expected[key]:
            out.append(Violation(name, v, None, "dimension",
                                 f"shape {a.shape}, expected {expected[key]}"))
            continue
        bad = np.argwhere(~np.isfinite(a))
        for idx in bad:
            out.append(Violation(name, v, tuple(int(i) for i in idx), "finite", "entry is not finite"))
        if name[0] in "WH":
            for idx in np.argwhere(a < 0):
                idx = tuple(int(i) for i in idx)
                out.append(Violation(name, v, idx, "non-negative", f"entry {a[idx]} < 0"))
    return out


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    total: float
    reconstruction: float
    orthogonality: float
    sparsity: float
    label_loss: float
    mean_step: float = 0.0
    backtracks: int = 0
    failures: int = 0


@dataclass
class SolverTrace:
    """Per-iteration objective breakdown of one fit run."""

    records: list = field(default_factory=list)
    initial: object = None  # ObjectiveBreakdown before the first iteration
    status: str = "running"

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])

    def __len__(self):
        return len(self.records)
