"""Objective terms, softmax predictor and analytic gradients.

The full objective is::

    f = sum_v ||R^(v)||_F^2
        + alpha * sum_v ||W_D^(v)T W_D^(v)||_{1,1}
        + beta  * (sum(H_cd) + sum_v sum(H_sd^(v)))
        + gamma * sum_v label_loss(Z^(v), Y)

with ``W_D^(v) = [W_cd^(v) W_sd^(v)]`` and logits
``Z^(v) = B_cd H_cd^T + B_sd^(v) H_sd^(v)^T``.  The label loss is the
softmax cross-entropy (default) or the squared error ``||Y - Z^(v)||_F^2``,
both restricted to labeled columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .model import FactorModel, Hyperparams, LossMode, MultiViewDataset

#: Probabilities are floored here before taking logs.
PROB_FLOOR = 1e-15


@dataclass(frozen=True)
class ObjectiveBreakdown:
    reconstruction: float
    orthogonality: float
    sparsity: float
    label_loss: float
    total: float


@dataclass(frozen=True)
class SoftmaxOutput:
    logits: np.ndarray
    probs: np.ndarray


def residual(model: FactorModel, dataset: MultiViewDataset, v: int) -> np.ndarray:
    """``X^(v)`` minus the reconstruction from all four blocks."""
    b = model.view(v)
    X = dataset.views[v]
    if X.shape != (b.W_cd.shape[0], b.H_cd.shape[0]):
        raise DimensionMismatchError(
            f"view {v}: data is {X.shape}, model reconstructs {(b.W_cd.shape[0], b.H_cd.shape[0])}")
    return X - b.W_cd @ b.H_cd.T - b.W_cn @ b.H_cn.T - b.W_sd @ b.H_sd.T - b.W_sn @ b.H_sn.T


def softmax_logits(model: FactorModel, v: int) -> np.ndarray:
    b = model.view(v)
    if b.H_sd.shape[0] != b.H_cd.shape[0]:
        raise DimensionMismatchError("H_cd and H_sd disagree on the instance count")
    return b.B_cd @ b.H_cd.T + b.B_sd @ b.H_sd.T


def softmax_columns(Z: np.ndarray) -> np.ndarray:
    """Column-wise softmax, stabilised by subtracting each column's max."""
    E = np.exp(Z - Z.max(axis=0, keepdims=True))
    return E / E.sum(axis=0, keepdims=True)


def softmax_output(model: FactorModel, v: int) -> SoftmaxOutput:
    Z = softmax_logits(model, v)
    return SoftmaxOutput(Z, softmax_columns(Z))


def cross_entropy(P: np.ndarray, labels, mask=None) -> float:
    """``-sum_j ln p[y_j, j]`` over labeled columns."""
    labels = np.asarray(labels)
    if mask is None:
        mask = labels >= 0
    idx = np.flatnonzero(mask)
    p = P[labels[idx], idx]
    return float(-np.sum(np.log(np.maximum(p, PROB_FLOOR))))


def squared_label_loss(Z: np.ndarray, Y: np.ndarray, mask) -> float:
    D = (Y - Z)[:, mask]
    return float(np.sum(D * D))


def discriminative_row_sums(model: FactorModel, v: int) -> np.ndarray:
    """``W_D^(v) 1``: the row sums of ``[W_cd^(v) W_sd^(v)]``."""
    return model.W_cd[v].sum(axis=1) + model.W_sd[v].sum(axis=1)


def orthogonality_penalty(model: FactorModel, v: int) -> float:
    """``||W_D^T W_D||_{1,1}`` for view ``v``.

    Evaluated as ``||W_D 1||^2``, which is identical for non-negative bases and
    smooth everywhere.
    """
    s = discriminative_row_sums(model, v)
    return float(s @ s)


def sparsity_penalty(model: FactorModel) -> float:
    return float(model.H_cd.sum() + sum(H.sum() for H in model.H_sd))


def q_matrix(model: FactorModel, dataset: MultiViewDataset, v: int) -> np.ndarray:
    """Softmax prediction minus one-hot labels; unlabeled columns are zero."""
    Q = softmax_columns(softmax_logits(model, v)) - dataset.onehot()
    Q[:, ~dataset.mask] = 0.0
    return Q


def label_loss_grad_logits(model: FactorModel, dataset: MultiViewDataset, v: int,
                           loss_mode=LossMode.CROSS_ENTROPY) -> np.ndarray:
    """Derivative of the (unweighted) view-``v`` label loss w.r.t. the logits ``Z^(v)``."""
    if LossMode(loss_mode) is LossMode.CROSS_ENTROPY:
        return q_matrix(model, dataset, v)
    G = 2.0 * (softmax_logits(model, v) - dataset.onehot())
    G[:, ~dataset.mask] = 0.0
    return G


def ce_grad_h_block(model: FactorModel, dataset: MultiViewDataset, gamma: float,
                    block: str, v: int | None = None) -> np.ndarray:
    """Gradient of ``gamma * sum_v CE(P^(v), Y)`` w.r.t. ``H_cd`` or ``H_sd^(v)``.

    ``block`` is ``"cd"`` or ``"sd"`` (the latter needs ``v``).
    """
    if block == "cd":
        G = np.zeros_like(model.H_cd)
        for u in range(model.n_views):
            G += q_matrix(model, dataset, u).T @ model.B_cd
        return gamma * G
    if block == "sd":
        return gamma * (q_matrix(model, dataset, v).T @ model.B_sd[v])
    raise ValueError(f"unknown discriminative block {block!r}")


def view_label_loss(model: FactorModel, dataset: MultiViewDataset, v: int,
                    loss_mode=LossMode.CROSS_ENTROPY) -> float:
    Z = softmax_logits(model, v)
    if LossMode(loss_mode) is LossMode.CROSS_ENTROPY:
        return cross_entropy(softmax_columns(Z), dataset.labels, dataset.mask)
    return squared_label_loss(Z, dataset.onehot(), dataset.mask)


def total_objective(model: FactorModel, dataset: MultiViewDataset, hp: Hyperparams) -> ObjectiveBreakdown:
    recon = 0.0
    orth = 0.0
    label = 0.0
    for v in range(dataset.n_views):
        R = residual(model, dataset, v)
        recon += float(np.sum(R * R))
        orth += orthogonality_penalty(model, v)
        label += view_label_loss(model, dataset, v, hp.loss_mode)
    sparse = sparsity_penalty(model)
    total = recon + hp.alpha * orth + hp.beta * sparse + hp.gamma * label
    return ObjectiveBreakdown(recon, orth, sparse, label, total)


def block_gradient(model: FactorModel, dataset: MultiViewDataset, hp: Hyperparams,
                   name: str, v: int | None = None) -> np.ndarray:
    """Exact gradient of ``total_objective`` w.r.t. one block.

    ``name`` is one of the ``FactorModel`` block names; ``v`` selects the view
    for per-view blocks and is ignored for shared ones.
    """
    if name.startswith("W_"):
        H = {"W_cd": model.H_cd, "W_cn": model.H_cn,
             "W_sd": model.H_sd[v], "W_sn": model.H_sn[v]}[name]
        g = -2.0 * residual(model, dataset, v) @ H
        if name in ("W_cd", "W_sd") and hp.alpha:
            g += 2.0 * hp.alpha * discriminative_row_sums(model, v)[:, None]
        return g

    if name in ("H_cd", "H_cn"):
        W = model.W_cd if name == "H_cd" else model.W_cn
        g = np.zeros_like(model.get(name))
        for u in range(dataset.n_views):
            g -= 2.0 * residual(model, dataset, u).T @ W[u]
        if name == "H_cd":
            g += hp.beta
            if hp.gamma:
                for u in range(dataset.n_views):
                    G = label_loss_grad_logits(model, dataset, u, hp.loss_mode)
                    g += hp.gamma * (G.T @ model.B_cd)
        return g

    if name in ("H_sd", "H_sn"):
        W = model.W_sd[v] if name == "H_sd" else model.W_sn[v]
        g = -2.0 * residual(model, dataset, v).T @ W
        if name == "H_sd":
            g += hp.beta
            if hp.gamma:
                G = label_loss_grad_logits(model, dataset, v, hp.loss_mode)
                g += hp.gamma * (G.T @ model.B_sd[v])
        return g

    if name == "B_cd":
        g = np.zeros_like(model.B_cd)
        for u in range(dataset.n_views):
            g += label_loss_grad_logits(model, dataset, u, hp.loss_mode) @ model.H_cd
        return hp.gamma * g
    if name == "B_sd":
        return hp.gamma * (label_loss_grad_logits(model, dataset, v, hp.loss_mode) @ model.H_sd[v])
    raise ValueError(f"unknown block {name!r}")
