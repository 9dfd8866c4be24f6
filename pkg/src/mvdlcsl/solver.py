"""Projected block coordinate descent for the multi-view factorization.

Every W/H block takes a projected gradient step ``[X - eta * grad]_+`` whose
step ``eta`` is found by backtracking until the total objective does not
increase.  B blocks are first tried with their closed-form ridge solution and
fall back to a backtracked (unprojected) gradient step when the closed form
would raise the objective, which happens in cross-entropy mode since the
closed form minimizes the squared label loss.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError
from .model import FactorModel, Hyperparams, LossMode, MultiViewDataset, SolverTrace, TraceRecord, init_model
from .objective import block_gradient, total_objective

logger = logging.getLogger(__name__)


@dataclass
class StepPolicy:
    """Backtracking line-search settings with a per-block warm start.

    ``steps`` maps a block key to the step that will be tried first on the
    next update of that block.  With ``expand`` set, a step accepted without
    any shrinking is enlarged by ``1 / shrink`` for the next try.
    """

    initial: float = 1.0
    shrink: float = 0.5
    max_backtracks: int = 30
    expand: bool = False
    max_step: float = 1e12
    steps: dict = field(default_factory=dict)

    @classmethod
    def from_hyperparams(cls, hp: Hyperparams) -> "StepPolicy":
        return cls(shrink=hp.step_shrink, max_backtracks=hp.max_backtracks)

    def start(self, key) -> float:
        return self.steps.get(key, self.initial)

    def accept(self, key, step: float, backtracks: int):
        if self.expand and backtracks == 0:
            step = min(step / self.shrink, self.max_step)
        self.steps[key] = step


@dataclass(frozen=True)
class StepResult:
    accepted: bool
    step: float
    backtracks: int
    objective: float  # total objective after the update (unchanged on failure)
    stationary: bool = False


def _line_search(model, dataset, hp, name, v, grad, policy, current, project, step=None, col=None):
    """Backtrack from ``step`` until the total objective does not increase.

    With ``col`` set only that column of the block moves.
    """
    key = (name, v)
    X0 = model.get(name, v)
    if step is None:
        step = policy.start(key)
    for bt in range(policy.max_backtracks + 1):
        if col is None:
            cand = X0 - step * grad
            if project:
                np.maximum(cand, 0.0, out=cand)
        else:
            cand = X0.copy()
            cand[:, col] = X0[:, col] - step * grad
            if project:
                np.maximum(cand[:, col], 0.0, out=cand[:, col])
        model.set(name, cand, v)
        f = total_objective(model, dataset, hp).total
        if f <= current:
            policy.accept(key, step, bt)
            return StepResult(True, step, bt, f)
        step *= policy.shrink
    model.set(name, X0, v)
    return StepResult(False, 0.0, policy.max_backtracks, current)


def _is_stationary(X, grad, project):
    if project:
        # projected direction is zero where X sits on the boundary and the gradient points outward
        return not np.any(grad[(X > 0) | (grad < 0)])
    return not np.any(grad)


def _label_curvature(hp):
    # bound on the second derivative of the label loss per unit logit: the
    # softmax cross-entropy Hessian has spectral norm <= 1/2
    return 0.5 if hp.loss_mode is LossMode.CROSS_ENTROPY else 2.0


def column_curvature(model: FactorModel, dataset: MultiViewDataset, hp: Hyperparams,
                     name: str, v: int | None, col: int) -> float:
    """Upper bound on the objective's second derivative along one column of a W/H block."""
    if name.startswith("W_"):
        H = {"W_cd": model.H_cd, "W_cn": model.H_cn,
             "W_sd": model.H_sd[v], "W_sn": model.H_sn[v]}[name]
        h = H[:, col]
        L = 2.0 * (h @ h)
        if name in ("W_cd", "W_sd"):
            # alpha ||w + rest||^2 has Hessian 2 alpha I in the column w
            L += 2.0 * hp.alpha
        return L
    if name in ("H_cd", "H_cn"):
        W = model.W_cd if name == "H_cd" else model.W_cn
        L = sum(2.0 * (W[u][:, col] @ W[u][:, col]) for u in range(dataset.n_views))
        if name == "H_cd":
            b = model.B_cd[:, col]
            L += hp.gamma * _label_curvature(hp) * dataset.n_views * (b @ b)
        return L
    W = model.W_sd[v] if name == "H_sd" else model.W_sn[v]
    L = 2.0 * (W[:, col] @ W[:, col])
    if name == "H_sd":
        b = model.B_sd[v][:, col]
        L += hp.gamma * _label_curvature(hp) * (b @ b)
    return L


def _nonneg_update(model, dataset, hp, name, v, policy, current):
    """Sweep the columns of one W/H block, one projected step per column.

    Each column's first trial step is the inverse of its curvature bound; the
    block's warm-start step is used when that bound vanishes.
    """
    k = model.get(name, v).shape[1]
    if k == 0:
        return StepResult(True, 0.0, 0, current, stationary=True)
    steps, backtracks, moved, failed = [], 0, False, 0
    for col in range(k):
        grad = block_gradient(model, dataset, hp, name, v)[:, col]
        if _is_stationary(model.get(name, v)[:, col], grad, True):
            continue
        L = column_curvature(model, dataset, hp, name, v, col)
        step = 1.0 / L if L > 0 else None
        res = _line_search(model, dataset, hp, name, v, grad, policy, current, True, step, col)
        backtracks += res.backtracks
        if res.accepted:
            moved = True
            steps.append(res.step)
            current = res.objective
        else:
            failed += 1
    if failed == k:
        return StepResult(False, 0.0, backtracks, current)
    if not moved:
        return StepResult(True, 0.0, backtracks, current, stationary=True)
    return StepResult(True, float(np.mean(steps)), backtracks, current)


def update_basis_block(model: FactorModel, dataset: MultiViewDataset, hp: Hyperparams,
                       v: int, kind: str, policy: StepPolicy, current: float | None = None) -> StepResult:
    """Projected, backtracked gradient steps on each column of ``W_<kind>^(v)``.

    ``kind`` is one of ``"cd"``, ``"cn"``, ``"sd"``, ``"sn"``.  The model is
    updated in place; a column whose line search fails is left unchanged.
    """
    if current is None:
        current = total_objective(model, dataset, hp).total
    return _nonneg_update(model, dataset, hp, "W_" + kind, v, policy, current)


def update_coefficient_block(model: FactorModel, dataset: MultiViewDataset, hp: Hyperparams,
                             kind: str, policy: StepPolicy, v: int | None = None,
                             current: float | None = None) -> StepResult:
    """Projected, backtracked steps on each column of ``H_<kind>`` (``H_<kind>^(v)`` for sd/sn)."""
    if kind in ("sd", "sn") and v is None:
        raise ValueError(f"H_{kind} is per view; pass v")
    if current is None:
        current = total_objective(model, dataset, hp).total
    return _nonneg_update(model, dataset, hp, "H_" + kind, v, policy, current)


def _ridge_solve(rhs: np.ndarray, H: np.ndarray, lam: float) -> np.ndarray:
    """Return ``rhs (H^T H + lam I)^-1`` via a Cholesky solve."""
    k = H.shape[1]
    if k == 0:
        return np.zeros((rhs.shape[0], 0))
    gram = H.T @ H + lam * np.eye(k)
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True)
        return scipy.linalg.cho_solve(factor, rhs.T).T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"ridge Gram matrix solve failed: {exc}") from exc


def _labeled(dataset: MultiViewDataset):
    mask = dataset.mask
    if not mask.any():
        raise ValidationError("B solves need at least one labeled instance")
    return mask, dataset.onehot()[:, mask]


def solve_b_cd(model: FactorModel, dataset: MultiViewDataset, hp: Hyperparams) -> np.ndarray:
    """Closed-form ``B_cd`` averaging the per-view ridge targets over labeled columns."""
    mask, Y = _labeled(dataset)
    H = model.H_cd[mask]
    rhs = np.zeros((dataset.num_classes, H.shape[1]))
    for v in range(dataset.n_views):
        rhs += (Y - model.B_sd[v] @ model.H_sd[v][mask].T) @ H
    rhs /= dataset.n_views
    return _ridge_solve(rhs, H, hp.lambda_ridge)


def solve_b_sd(model: FactorModel, dataset: MultiViewDataset, v: int, hp: Hyperparams) -> np.ndarray:
    mask, Y = _labeled(dataset)
    H = model.H_sd[v][mask]
    rhs = (Y - model.B_cd @ model.H_cd[mask].T) @ H
    return _ridge_solve(rhs, H, hp.lambda_ridge)


def update_projection_block(model: FactorModel, dataset: MultiViewDataset, hp: Hyperparams,
                            name: str, policy: StepPolicy, v: int | None = None,
                            current: float | None = None) -> StepResult:
    """Closed-form B update, kept only if it does not raise the objective.

    Otherwise a backtracked gradient step on the same block is taken.
    """
    if current is None:
        current = total_objective(model, dataset, hp).total
    old = model.get(name, v)
    if old.size == 0:
        return StepResult(True, 0.0, 0, current, stationary=True)
    closed = solve_b_cd(model, dataset, hp) if name == "B_cd" else solve_b_sd(model, dataset, v, hp)
    model.set(name, closed, v)
    f = total_objective(model, dataset, hp).total
    if f <= current:
        return StepResult(True, 1.0, 0, f)
    model.set(name, old, v)
    grad = block_gradient(model, dataset, hp, name, v)
    if _is_stationary(old, grad, False):
        return StepResult(True, policy.start((name, v)), 0, current, stationary=True)
    return _line_search(model, dataset, hp, name, v, grad, policy, current, project=False)


def _check_fit_inputs(dataset: MultiViewDataset, hp: Hyperparams):
    dataset.check()
    if hp.gamma > 0:
        counts = np.bincount(dataset.labels[dataset.mask], minlength=dataset.num_classes)
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise ValidationError(f"classes {missing.tolist()} have no labeled instance")


def run_iteration(model, dataset, hp, policy, current):
    """One sweep over all blocks in the fixed order; returns (objective, results)."""
    nv = dataset.n_views
    results = []

    def track(res):
        nonlocal current
        results.append(res)
        current = res.objective

    for kind in ("cd", "cn", "sd", "sn"):
        for v in range(nv):
            track(update_basis_block(model, dataset, hp, v, kind, policy, current))
    track(update_coefficient_block(model, dataset, hp, "cd", policy, current=current))
    track(update_coefficient_block(model, dataset, hp, "cn", policy, current=current))
    for kind in ("sd", "sn"):
        for v in range(nv):
            track(update_coefficient_block(model, dataset, hp, kind, policy, v=v, current=current))
    if dataset.mask.any():
        track(update_projection_block(model, dataset, hp, "B_cd", policy, current=current))
        for v in range(nv):
            track(update_projection_block(model, dataset, hp, "B_sd", policy, v=v, current=current))
    return current, results


def fit(dataset: MultiViewDataset, hp: Hyperparams, model: FactorModel | None = None):
    """Fit the factorization; returns ``(model, trace)``.

    Stops when the relative change of the total objective drops below
    ``hp.rel_tol``, after ``hp.max_iters`` sweeps, or when no block manages a
    non-increasing step in a whole sweep (status ``"stalled"``).
    """
    _check_fit_inputs(dataset, hp)
    model = init_model(dataset, hp) if model is None else model
    policy = StepPolicy.from_hyperparams(hp)
    trace = SolverTrace()
    bd = total_objective(model, dataset, hp)
    trace.initial = bd
    prev = bd.total
    for it in range(1, hp.max_iters + 1):
        _, results = run_iteration(model, dataset, hp, policy, prev)
        bd = total_objective(model, dataset, hp)
        moved = [r for r in results if r.accepted and not r.stationary]
        failures = sum(not r.accepted for r in results)
        trace.records.append(TraceRecord(
            iteration=it, total=bd.total, reconstruction=bd.reconstruction,
            orthogonality=bd.orthogonality, sparsity=bd.sparsity, label_loss=bd.label_loss,
            mean_step=float(np.mean([r.step for r in moved])) if moved else 0.0,
            backtracks=sum(r.backtracks for r in results), failures=failures,
        ))
        logger.info("iter %d total %.10g", it, bd.total)
        if failures == len(results):
            trace.status = "stalled"
            break
        if abs(prev - bd.total) < hp.rel_tol * max(abs(prev), np.finfo(float).tiny):
            trace.status = "converged"
            break
        prev = bd.total
    else:
        trace.status = "max_iters"
    model.meta.update(iterations=len(trace), final_objective=bd.total, status=trace.status,
                      hyperparams=hp.to_dict())
    return model, trace
