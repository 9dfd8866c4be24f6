"""Planted-model generator used as a ground-truth oracle."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import BlockDims, FactorModel, MultiViewDataset


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 200
    num_classes: int = 4
    feature_dims: tuple = (30, 40)
    dims: BlockDims = BlockDims(4, 2, 4, 2)
    noise: float = 0.01
    separation: float = 1.0
    seed: int = 7

    def __post_init__(self):
        object.__setattr__(self, "feature_dims", tuple(int(m) for m in self.feature_dims))
        if isinstance(self.dims, (tuple, list)):
            object.__setattr__(self, "dims", BlockDims(*self.dims))
        if self.n < 1 or self.num_classes < 2 or not self.feature_dims:
            raise ValidationError("need n >= 1, num_classes >= 2 and at least one view")
        if any(m < 1 for m in self.feature_dims):
            raise ValidationError("feature dimensions must be positive")
        if self.noise < 0:
            raise ValidationError("noise must be >= 0")
        if not self.separation > 0:
            raise ValidationError("separation must be > 0")
        if self.dims.k1 + self.dims.k3 < self.num_classes:
            warnings.warn("fewer discriminative components than classes; some classes "
                          "share no dedicated direction", stacklevel=2)

    @property
    def n_views(self) -> int:
        return len(self.feature_dims)


def _discriminative(rng, labels, k, c, delta):
    H = rng.uniform(0.0, 0.1, size=(labels.size, k))
    if k:
        owner = np.arange(k) % c
        H += delta * (labels[:, None] == owner[None, :])
    return H


def generate_synthetic(spec: SyntheticSpec):
    """Draw a dataset whose generative truth is the four-block model.

    Labels go round-robin over classes.  Discriminative component ``k`` is
    owned by class ``k % c``: its coefficients are ``separation + U(0, 0.1)``
    for instances of that class and ``U(0, 0.1)`` otherwise.  Non-discriminative
    coefficients and all bases are ``U(0, 1)``.  Gaussian noise is clamped at 0.

    Returns ``(dataset, planted_model, labels)``; the planted model's B blocks
    are zero.
    """
    rng = np.random.default_rng(spec.seed)
    c, n, d = spec.num_classes, spec.n, spec.dims
    labels = np.arange(n) % c
    H_cd = _discriminative(rng, labels, d.k1, c, spec.separation)
    H_cn = rng.uniform(size=(n, d.k2))
    H_sd = [_discriminative(rng, labels, d.k3, c, spec.separation) for _ in spec.feature_dims]
    H_sn = [rng.uniform(size=(n, d.k4)) for _ in spec.feature_dims]
    W = {name: [] for name in ("W_cd", "W_cn", "W_sd", "W_sn")}
    views = []
    for v, m in enumerate(spec.feature_dims):
        for name, k in zip(W, d.as_tuple()):
            W[name].append(rng.uniform(size=(m, k)))
        X = (W["W_cd"][v] @ H_cd.T + W["W_cn"][v] @ H_cn.T
             + W["W_sd"][v] @ H_sd[v].T + W["W_sn"][v] @ H_sn[v].T)
        if spec.noise > 0:
            X = np.maximum(X + rng.normal(0.0, spec.noise, size=X.shape), 0.0)
        views.append(X)
    planted = FactorModel(
        **W, H_cd=H_cd, H_cn=H_cn, H_sd=H_sd, H_sn=H_sn,
        B_cd=np.zeros((c, d.k1)), B_sd=[np.zeros((c, d.k3)) for _ in spec.feature_dims],
    )
    dataset = MultiViewDataset(views, labels, c, name="synthetic")
    return dataset, planted, labels.copy()
