"""Cross-validation protocol, accuracy statistics and simple baselines."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ClassTooSmallError, DimensionMismatchError, MVDLCSLError
from .inference import Coefficients, fold_in, predict_labels
from .model import UNLABELED, BlockDims, Hyperparams, MultiViewDataset
from .solver import fit

logger = logging.getLogger(__name__)


def accuracy(predicted, truth) -> float:
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.shape != truth.shape:
        raise DimensionMismatchError(f"{predicted.shape[0]} predictions for {truth.shape[0]} labels")
    if truth.size == 0:
        return 0.0
    return float(np.mean(predicted == truth))


def stratified_kfold(labels, k: int, seed: int = 0) -> list:
    """Split the labeled instances into ``k`` disjoint, class-balanced folds.

    Each class is shuffled and dealt round-robin over the folds, continuing the
    deal position across classes so fold sizes differ by at most one.
    Unlabeled instances (-1) belong to no fold.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    classes = np.unique(labels[labels != UNLABELED])
    folds = [[] for _ in range(k)]
    pos = 0
    for cls in classes:
        members = np.flatnonzero(labels == cls)
        if members.size < k:
            raise ClassTooSmallError(int(cls), members.size, k)
        for idx in rng.permutation(members):
            folds[pos % k].append(int(idx))
            pos += 1
    return [np.sort(np.array(f, dtype=int)) for f in folds]


@dataclass(frozen=True)
class FoldScore:
    repeat: int
    fold: int
    accuracy: float
    train_idx: np.ndarray = field(repr=False, compare=False)
    test_idx: np.ndarray = field(repr=False, compare=False)


@dataclass
class CVResult:
    scores: list
    method: str = "mvdlcsl"
    dataset: str = "dataset"

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([s.accuracy for s in self.scores])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        # population std over all fold scores
        return float(self.accuracies.std())

    def per_repeat(self) -> np.ndarray:
        reps = sorted({s.repeat for s in self.scores})
        return np.array([np.mean([s.accuracy for s in self.scores if s.repeat == r]) for r in reps])

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "dataset", "repeat", "fold", "accuracy"])
        self.write_rows(w)

    def write_rows(self, writer):
        for s in self.scores:
            writer.writerow([self.method, self.dataset, s.repeat, s.fold, repr(s.accuracy)])
        writer.writerow([self.method, self.dataset, "summary", "mean", repr(self.mean)])
        writer.writerow([self.method, self.dataset, "summary", "std", repr(self.std)])


def fold_seed(seed: int, repeat: int) -> int:
    return int(np.random.SeedSequence([seed, repeat]).generate_state(1)[0])


def _run_fold(dataset, hp, repeat, fold, train_idx, test_idx, fit_fn):
    masked = dataset.labels.copy()
    masked[test_idx] = UNLABELED
    train = dataset.with_labels(masked).subset(train_idx)
    try:
        model, _ = fit_fn(train, hp)
        coefs = fold_in(model, [X[:, test_idx] for X in dataset.views], hp)
        pred = predict_labels(model, coefs)
    except MVDLCSLError as exc:
        raise MVDLCSLError(f"repeat {repeat}, fold {fold} failed: {exc}") from exc
    return FoldScore(repeat, fold, accuracy(pred, dataset.labels[test_idx]), train_idx, test_idx)


def _fold_tasks(dataset, k, repeats, seed):
    n = dataset.n
    for r in range(repeats):
        folds = stratified_kfold(dataset.labels, k, fold_seed(seed, r))
        for f, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(n), test_idx)
            yield r, f, train_idx, test_idx


def cross_validate(dataset: MultiViewDataset, hp: Hyperparams, k: int = 5, repeats: int = 10,
                   seed: int = 0, jobs: int = 1, fit_fn=fit, method: str = "mvdlcsl") -> CVResult:
    """Stratified k-fold CV repeated ``repeats`` times with fresh fold seeds.

    Each fold fits on every instance outside the test fold (test labels are
    replaced by -1 before the training subset is cut) and predicts the held-out
    instances by fold-in.  Results come back in (repeat, fold) order
    regardless of ``jobs``.
    """
    tasks = list(_fold_tasks(dataset, k, repeats, seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_run_fold, dataset, hp, r, f, tr, te, fit_fn) for r, f, tr, te in tasks]
            scores = [fu.result() for fu in futs]
    else:
        scores = []
        for r, f, tr, te in tasks:
            scores.append(_run_fold(dataset, hp, r, f, tr, te, fit_fn))
            logger.info("repeat %d fold %d accuracy %.4f", r, f, scores[-1].accuracy)
    return CVResult(scores, method=method, dataset=dataset.name)


def knn_baseline(dataset: MultiViewDataset, train_idx, test_idx, view="concat") -> np.ndarray:
    """1-nearest-neighbour labels in one view (``view=v``) or the concatenated views.

    Ties go to the lowest training index.
    """
    train_idx = np.sort(np.asarray(train_idx, dtype=int))
    test_idx = np.asarray(test_idx, dtype=int)
    if train_idx.size == 0:
        raise ValueError("knn_baseline needs a non-empty training set")
    feats = np.vstack(dataset.views) if view == "concat" else dataset.views[int(view)]
    return _nearest_labels(feats[:, train_idx].T, dataset.labels[train_idx], feats[:, test_idx].T)


def _nearest_labels(train, train_labels, test):
    d2 = (np.sum(test ** 2, axis=1)[:, None] - 2.0 * test @ train.T
          + np.sum(train ** 2, axis=1)[None, :])
    # argmin picks the first minimum, i.e. the lowest training index
    return train_labels[np.argmin(d2, axis=1)]


def nmf_baseline(dataset: MultiViewDataset, train_idx, test_idx, k: int, view: int = 0,
                 hp: Hyperparams | None = None) -> np.ndarray:
    """Plain NMF on one view followed by 1-NN on the coefficients.

    Uses the factorization with only a view-specific block and all penalty
    weights at zero, which reduces the objective to ``||X - W H^T||^2``.
    """
    base = hp or Hyperparams(dims=BlockDims(0, 0, k, 0))
    hp = base.replace(dims=BlockDims(0, 0, k, 0), alpha=0.0, beta=0.0, gamma=0.0)
    train_idx = np.sort(np.asarray(train_idx, dtype=int))
    single = MultiViewDataset([dataset.views[view][:, train_idx]], dataset.labels[train_idx],
                              dataset.num_classes, dataset.name)
    model, _ = fit(single, hp)
    coefs: Coefficients = fold_in(model, [dataset.views[view][:, test_idx]], hp)
    return _nearest_labels(model.H_sd[0], dataset.labels[train_idx], coefs.H_sd[0])
