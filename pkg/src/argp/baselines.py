"""Comparison mappers: fixed resolution, batch regression, independent cells.

FR is the adaptive map with merging permanently disabled.  GPR recomputes
the batch posterior from the full accumulated measurement history at every
epoch.  The independence baseline keeps only per-cell variances, so each
update is a bank of scalar filters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import Hyperparams, integral_kernel, integral_mean
from .mapping import MapBelief
from .ndtree import NdTree

GPR_JITTER = 1e-9  # times sigma^2, added to an ill-conditioned Gram diagonal


def fr_fuse(belief: MapBelief, measurements) -> None:
    """Fixed-resolution update: identical Kalman fusion, merging never invoked."""
    belief.fuse(measurements)


@dataclass
class GprPosterior:
    """Batch posterior over all leaf cells, with conditioning metadata."""

    mean: np.ndarray
    cov: np.ndarray
    jitter: float = 0.0


def gpr_posterior(measurements, tree: NdTree, hyper: Hyperparams,
                  prior_mean: float, prior_cov: np.ndarray | None = None) -> GprPosterior:
    """Gaussian-process regression from scratch over the full history.

    Same observation model as sequential fusion (one-hot H per measurement,
    diagonal R), solved in one batch.  Repeated observations of a cell are
    allowed.  An ill-conditioned Gram matrix gets a small diagonal jitter,
    reported in the result.
    """
    mean0 = np.array([integral_mean(rect, prior_mean) for _, rect in tree.leaves()])
    if prior_cov is None:
        from .kernels import integral_cov_matrix

        x_lo, x_hi, y_lo, y_hi = tree.leaf_bounds()
        prior_cov = integral_cov_matrix(x_lo, x_hi, y_lo, y_hi, hyper)
    if not measurements:
        return GprPosterior(mean=mean0, cov=prior_cov.copy())

    idx = np.array([tree.leaf_position(m.cell_id) for m in measurements])
    z = np.array([m.z for m in measurements])
    r = np.array([m.noise_var for m in measurements])

    kht = prior_cov[:, idx]
    gram = kht[idx, :] + np.diag(r)
    jitter = 0.0
    try:
        factor = scipy.linalg.cho_factor(gram)
    except np.linalg.LinAlgError:
        jitter = GPR_JITTER * hyper.signal_variance
        factor = scipy.linalg.cho_factor(gram + jitter * np.eye(len(z)))
    gain = scipy.linalg.cho_solve(factor, kht.T).T
    mean = mean0 + gain @ (z - mean0[idx])
    cov = prior_cov - gain @ kht.T
    return GprPosterior(mean=mean, cov=0.5 * (cov + cov.T), jitter=jitter)


class IndependentBelief:
    """Per-cell mean/variance map with all cross-correlations fixed at zero."""

    def __init__(self, tree: NdTree, hyper: Hyperparams, prior_mean: float,
                 mean: np.ndarray, var: np.ndarray):
        self.tree = tree
        self.hyper = hyper
        self.prior_mean = prior_mean
        self.mean = mean
        self.var = var

    @classmethod
    def from_prior(cls, tree: NdTree, hyper: Hyperparams, prior_mean: float):
        """Same prior as the correlated maps with off-diagonals dropped."""
        mean = np.array([integral_mean(rect, prior_mean) for _, rect in tree.leaves()])
        var = np.array([integral_kernel(rect, rect, hyper) for _, rect in tree.leaves()])
        return cls(tree, hyper, float(prior_mean), mean, var)

    @property
    def cov(self) -> np.ndarray:
        return np.diag(self.var)

    def fuse(self, measurements) -> None:
        """Scalar Kalman update per observed cell; other cells are untouched."""
        if not measurements:
            return
        idx = np.array([self.tree.leaf_position(m.cell_id) for m in measurements])
        if len(set(idx.tolist())) != len(idx):
            raise ValueError("duplicate cell in one fusion batch")
        z = np.array([m.z for m in measurements])
        r = np.array([m.noise_var for m in measurements])
        if np.any(r < 0):
            raise ValueError("negative measurement noise variance")
        prior_var = self.var[idx]
        gain = prior_var / (prior_var + r)
        self.mean[idx] = self.mean[idx] + gain * (z - self.mean[idx])
        self.var[idx] = prior_var * r / (prior_var + r)


def memory_scalars(method: str, leaf_count: int, measurement_count: int = 0) -> int:
    """Stored scalars for a map state, the memory metric of the comparison.

    Correlated maps keep a mean plus a symmetric covariance; the independent
    map keeps two vectors; batch regression persists only the measurement
    tuples (cell, value, variance).
    """
    n = leaf_count
    if method in ("argp", "fr"):
        return n + n * (n + 1) // 2
    if method == "indep":
        return 2 * n
    if method == "gpr":
        return 3 * measurement_count
    raise ValueError(f"unknown method {method!r}")
