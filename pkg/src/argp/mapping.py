"""Gaussian map belief over tree cells: prior construction, fusion, merging.

The belief is a mean vector and dense covariance over the ordered leaf
cells.  Noisy averaged measurements enter through Kalman updates in which
only the m x m innovation matrix is inverted.  After an update, sibling
sets that are confidently below the interest threshold are merged into
their parent by an averaging linear map, which keeps the belief a valid
Gaussian over the coarser cell set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import Hyperparams, integral_cov_matrix, integral_mean
from .ndtree import NdTree


class ConditioningError(RuntimeError):
    """Raised when an innovation matrix cannot be factorized."""


@dataclass(frozen=True)
class MergeConfig:
    """Cell classification parameters.

    A cell is uninteresting when mean + gamma * confidence <= f_th.  The
    confidence term defaults to the cell standard deviation, which keeps the
    gamma margin in field units and preserves hotspot accuracy under
    merging; ``confidence_term="variance"`` selects the raw-variance rule.
    """

    gamma: float = 2.0
    f_th: float = 0.7
    confidence_term: str = "stddev"

    def __post_init__(self):
        if self.confidence_term not in ("variance", "stddev"):
            raise ValueError(f"unknown confidence_term {self.confidence_term!r}")


@dataclass
class Classification:
    """Complementary uninteresting / hotspot masks over the current leaves."""

    ur_mask: np.ndarray
    hs_mask: np.ndarray
    gamma: float
    f_th: float
    confidence_term: str = "variance"


@dataclass
class MapBelief:
    """Joint Gaussian over the leaf cells of ``tree``; index i is leaves()[i]."""

    tree: NdTree
    hyper: Hyperparams
    prior_mean: float
    mean: np.ndarray
    cov: np.ndarray

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    def clone(self, share_tree: bool = False) -> "MapBelief":
        """Deep copy for speculative updates; ``share_tree`` skips the tree
        copy when the caller will not merge (fusion never mutates the tree)."""
        return MapBelief(
            tree=self.tree if share_tree else self.tree.clone(),
            hyper=self.hyper,
            prior_mean=self.prior_mean,
            mean=self.mean.copy(),
            cov=self.cov.copy(),
        )

    # ------------------------------------------------------------------ fusion

    def fuse(self, measurements) -> None:
        """Kalman update of the belief with one batch of cell measurements.

        Each measurement carries (cell_id, z, noise_var).  With H selecting
        the m observed cells and R = diag(noise_var):

            gain  = K H^T (H K H^T + R)^-1
            mean += gain (z - H mean)
            K    -= gain H K

        Only the m x m innovation is factorized.  The covariance is
        re-symmetrized afterwards to bound floating-point drift.
        """
        if not measurements:
            return
        try:
            idx = np.array([self.tree.leaf_position(m.cell_id) for m in measurements])
        except KeyError as exc:
            raise ValueError(f"measurement references a non-leaf cell: {exc}") from None
        if len(set(idx.tolist())) != len(idx):
            raise ValueError("duplicate cell in one fusion batch")
        z = np.array([m.z for m in measurements], dtype=np.float64)
        r = np.array([m.noise_var for m in measurements], dtype=np.float64)
        if np.any(r < 0):
            raise ValueError("negative measurement noise variance")

        kht = self.cov[:, idx]                       # n x m
        innov = kht[idx, :] + np.diag(r)             # m x m
        try:
            factor = scipy.linalg.cho_factor(innov)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"singular innovation matrix: {exc}") from None
        gain = scipy.linalg.cho_solve(factor, kht.T).T   # n x m
        self.mean = self.mean + gain @ (z - self.mean[idx])
        self.cov = self.cov - gain @ kht.T
        self.cov = 0.5 * (self.cov + self.cov.T)

    # ------------------------------------------------------------ classification

    def classify(self, gamma: float, f_th: float, confidence_term: str = "variance") -> Classification:
        """Split cells into uninteresting (upper confidence below threshold) and hotspots."""
        conf = np.diag(self.cov)
        if confidence_term == "stddev":
            conf = np.sqrt(np.maximum(conf, 0.0))
        elif confidence_term != "variance":
            raise ValueError(f"unknown confidence_term {confidence_term!r}")
        ur = self.mean + gamma * conf <= f_th
        return Classification(ur_mask=ur, hs_mask=~ur, gamma=gamma, f_th=f_th,
                              confidence_term=confidence_term)

    def classify_with(self, cfg: MergeConfig) -> Classification:
        return self.classify(cfg.gamma, cfg.f_th, cfg.confidence_term)

    # ------------------------------------------------------------------ merging

    def merge_pass(self, cls: Classification, max_iter: int | None = None) -> int:
        """Merge every sibling set whose cells are all uninteresting leaves.

        Each eligible parent replaces its P children through an averaging
        transform M (identity rows for survivors, a 1/P row per parent):
        mean <- M mean, K <- M K M^T.  Newly formed parents are classified
        in turn and the pass cascades until no parent is eligible (or
        ``max_iter`` cascade levels were applied).  Returns the number of
        merged sibling sets.

        The cascade is resolved on lightweight virtual leaves first: a
        candidate parent's mean and variance follow directly from weighted
        blocks of the current belief, so the composite of all the per-level
        averaging maps is applied to the dense matrix once per pass instead
        of once per level.
        """
        tree = self.tree
        ur_mask = cls.ur_mask

        def is_ur(mean: float, var: float) -> bool:
            conf = math.sqrt(max(var, 0.0)) if cls.confidence_term == "stddev" else var
            return mean + cls.gamma * conf <= cls.f_th

        # level 0: complete sibling sets of current leaves, all uninteresting
        families = [
            (pid, kids)
            for pid, kids in tree.leaf_sibling_groups()
            if all(ur_mask[tree.leaf_position(k)] for k in kids)
        ]
        if not families:
            return 0

        # merged-node state: node id -> (belief positions, weights, uninteresting)
        state: dict[int, tuple[np.ndarray, np.ndarray, bool]] = {}
        prune_sequence: list[int] = []
        merged_total = 0
        levels = 0
        while families and (max_iter is None or levels < max_iter):
            frontier: list[int] = []
            for pid, kids in families:
                share = 1.0 / len(kids)
                idx_parts, w_parts = [], []
                for k in kids:
                    if k in state:
                        ki, kw, _ = state.pop(k)
                        idx_parts.append(ki)
                        w_parts.append(kw * share)
                    else:
                        idx_parts.append(np.array([tree.leaf_position(k)], dtype=np.intp))
                        w_parts.append(np.array([share]))
                idx = np.concatenate(idx_parts)
                w = np.concatenate(w_parts)
                mean = float(w @ self.mean[idx])
                var = float(w @ self.cov[np.ix_(idx, idx)] @ w)
                state[pid] = (idx, w, is_ur(mean, var))
                prune_sequence.append(pid)
                frontier.append(pid)
            merged_total += len(families)
            levels += 1

            # only parents of freshly merged nodes can become eligible next
            families = []
            seen: set[int] = set()
            for pid in frontier:
                gp = tree.parent_of(pid)
                if gp is None or gp in seen:
                    continue
                seen.add(gp)
                kids = tree.children_of(gp)
                eligible = True
                for k in kids:
                    if k in state:
                        eligible = state[k][2]
                    elif tree.is_leaf(k):
                        eligible = bool(ur_mask[tree.leaf_position(k)])
                    else:
                        eligible = False
                    if not eligible:
                        break
                if eligible:
                    families.append((gp, kids))

        old_position = {nid: i for i, nid in enumerate(tree.leaf_ids())}
        tree.prune_many(prune_sequence)  # bottom-up by construction
        new_ids = tree.leaf_ids()

        copy_new, copy_old = [], []
        merged_rows = []  # (new index, old positions, weights)
        for new_i, nid in enumerate(new_ids):
            if nid in state:
                idx, w, _ = state[nid]
                merged_rows.append((new_i, idx, w))
            else:
                copy_new.append(new_i)
                copy_old.append(old_position[nid])
        copy_new = np.array(copy_new, dtype=np.intp)
        copy_old = np.array(copy_old, dtype=np.intp)

        # One survivor-block gather plus a thin averaged row/column per merged
        # parent; mirroring the merged entries keeps the matrix exactly
        # symmetric, so no global re-symmetrization is needed here.
        n_new = len(new_ids)
        mean_new = np.empty(n_new)
        mean_new[copy_new] = self.mean[copy_old]
        cov_new = np.empty((n_new, n_new))
        cov_new[np.ix_(copy_new, copy_new)] = self.cov[np.ix_(copy_old, copy_old)]
        old_rows = []
        for new_i, idx, w in merged_rows:
            mean_new[new_i] = w @ self.mean[idx]
            row_old = w @ self.cov[idx]
            old_rows.append(row_old)
            vals = row_old[copy_old]
            cov_new[copy_new, new_i] = vals
            cov_new[new_i, copy_new] = vals
        for a, (ai, _, _) in enumerate(merged_rows):
            for b in range(a + 1):
                bi, idx_b, w_b = merged_rows[b]
                v = float(old_rows[a][idx_b] @ w_b)
                cov_new[ai, bi] = v
                cov_new[bi, ai] = v

        self.mean = mean_new
        self.cov = cov_new
        return merged_total

    # ------------------------------------------------------------------ export

    def snapshot(self, diag_only: bool = False) -> dict:
        """JSON-ready snapshot: leaf rects in index order, mean, covariance."""
        cells = [
            {"id": nid, "rect": [r.x_min, r.x_max, r.y_min, r.y_max]}
            for nid, r in self.tree.leaves()
        ]
        doc = {
            "cells": cells,
            "mean": self.mean.tolist(),
            "kernel": {
                "sigma2": self.hyper.signal_variance,
                "length_scale": self.hyper.length_scale,
            },
            "prior_mean": self.prior_mean,
        }
        if diag_only:
            doc["cov_diag"] = np.diag(self.cov).tolist()
        else:
            doc["cov"] = self.cov.tolist()
        return doc

    def dump_json(self, path, diag_only: bool = False) -> None:
        from .fileio import atomic_write_text

        atomic_write_text(path, json.dumps(self.snapshot(diag_only)))


def init_prior(tree: NdTree, hyper: Hyperparams, prior_mean) -> MapBelief:
    """Prior belief: averaged mean per cell, integral-kernel covariance."""
    mean = np.array([integral_mean(rect, prior_mean) for _, rect in tree.leaves()])
    x_lo, x_hi, y_lo, y_hi = tree.leaf_bounds()
    cov = integral_cov_matrix(x_lo, x_hi, y_lo, y_hi, hyper)
    return MapBelief(tree=tree, hyper=hyper,
                     prior_mean=float(prior_mean) if not callable(prior_mean) else float("nan"),
                     mean=mean, cov=cov)
