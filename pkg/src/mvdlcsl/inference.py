"""Predictions, fold-in of unseen instances and feature export."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .model import UNLABELED, FactorModel, Hyperparams, MultiViewDataset
from .objective import softmax_columns, total_objective
from .solver import StepPolicy, update_coefficient_block

#: Fold-in is a convex problem and is run closer to convergence than ``fit``.
FOLD_IN_MAX_ITERS = 1000


@dataclass
class Coefficients:
    """Coefficient rows for a set of instances (one row per instance)."""

    H_cd: np.ndarray
    H_cn: np.ndarray
    H_sd: list
    H_sn: list
    status: str = "fitted"

    @classmethod
    def of(cls, model: FactorModel) -> "Coefficients":
        return cls(model.H_cd, model.H_cn, list(model.H_sd), list(model.H_sn))

    @property
    def n(self) -> int:
        return self.H_cd.shape[0]


def _coefs(model, coefs):
    return Coefficients.of(model) if coefs is None else coefs


def view_logits(model: FactorModel, coefs: Coefficients | None = None) -> list:
    coefs = _coefs(model, coefs)
    return [model.B_cd @ coefs.H_cd.T + model.B_sd[v] @ coefs.H_sd[v].T
            for v in range(model.n_views)]


def predict_proba(model: FactorModel, coefs: Coefficients | None = None,
                  aggregate: str = "prob") -> np.ndarray:
    """``c x n`` class probabilities averaged uniformly over views.

    ``aggregate="logit"`` averages logits before the softmax instead.
    Without ``coefs`` the model's own (training) coefficients are used.
    """
    Zs = view_logits(model, coefs)
    if aggregate == "prob":
        return sum(softmax_columns(Z) for Z in Zs) / len(Zs)
    if aggregate == "logit":
        return softmax_columns(sum(Zs) / len(Zs))
    raise ValueError(f"unknown aggregation {aggregate!r}")


def predict_labels(model: FactorModel, coefs: Coefficients | None = None,
                   aggregate: str = "prob") -> np.ndarray:
    # argmax returns the first maximum, so ties go to the lowest class id
    return np.argmax(predict_proba(model, coefs, aggregate), axis=0)


def discriminative_features(model: FactorModel, coefs: Coefficients | None = None) -> np.ndarray:
    """``[H_cd | H_sd^(1) | ... | H_sd^(n_v)]``, one row per instance."""
    coefs = _coefs(model, coefs)
    return np.hstack([coefs.H_cd, *coefs.H_sd])


def fold_in(model: FactorModel, new_views, hp: Hyperparams, init: Coefficients | None = None,
            max_iters: int | None = None) -> Coefficients:
    """Infer non-negative coefficients for unseen instances with bases and B frozen.

    Minimizes reconstruction error plus the ``beta`` sparsity term over the new
    coefficient rows by the same projected, backtracked block updates used in
    ``fit``.  The label term is absent since the instances carry no labels.
    """
    new_views = [np.asarray(X, dtype=float) for X in new_views]
    if len(new_views) != model.n_views:
        raise DimensionMismatchError(f"model has {model.n_views} views, got {len(new_views)}")
    for v, X in enumerate(new_views):
        if X.ndim != 2 or X.shape[0] != model.W_cd[v].shape[0]:
            raise DimensionMismatchError(
                f"view {v}: expected {model.W_cd[v].shape[0]} features, got shape {X.shape}")
    n_new = new_views[0].shape[1]
    data = MultiViewDataset(new_views, np.full(n_new, UNLABELED), model.num_classes, "fold-in")

    if init is None:
        dims = model.dims
        rng = np.random.default_rng(hp.seed)
        K = dims.total
        scales = [max(np.sqrt(X.mean() / K), 1e-8) if X.size else 1e-8 for X in new_views]
        shared = float(np.mean(scales))
        draw = lambda shape, s: (1.0 - rng.random(shape)) * s  # noqa: E731
        init = Coefficients(draw((n_new, dims.k1), shared), draw((n_new, dims.k2), shared),
                            [draw((n_new, dims.k3), s) for s in scales],
                            [draw((n_new, dims.k4), s) for s in scales])

    work = FactorModel(
        W_cd=[W.copy() for W in model.W_cd], W_cn=[W.copy() for W in model.W_cn],
        W_sd=[W.copy() for W in model.W_sd], W_sn=[W.copy() for W in model.W_sn],
        H_cd=init.H_cd.copy(), H_cn=init.H_cn.copy(),
        H_sd=[H.copy() for H in init.H_sd], H_sn=[H.copy() for H in init.H_sn],
        B_cd=model.B_cd.copy(), B_sd=[B.copy() for B in model.B_sd],
    )
    policy = StepPolicy.from_hyperparams(hp)
    current = total_objective(work, data, hp).total
    status = "max_iters"
    for _ in range(max_iters or FOLD_IN_MAX_ITERS):
        prev = current
        results = [update_coefficient_block(work, data, hp, "cd", policy, current=current)]
        current = results[-1].objective
        results.append(update_coefficient_block(work, data, hp, "cn", policy, current=current))
        current = results[-1].objective
        for kind in ("sd", "sn"):
            for v in range(work.n_views):
                results.append(update_coefficient_block(work, data, hp, kind, policy, v=v, current=current))
                current = results[-1].objective
        if not any(r.accepted for r in results):
            status = "stalled"
            break
        if abs(prev - current) <= hp.rel_tol * max(abs(prev), np.finfo(float).tiny):
            status = "converged"
            break
    return Coefficients(work.H_cd, work.H_cn, work.H_sd, work.H_sn, status=status)
