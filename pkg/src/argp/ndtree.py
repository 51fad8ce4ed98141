"""Uniform-subdivision spatial tree whose leaves tile the map extent.

Every internal node splits into N x N equal children down to a fixed depth,
so a freshly built tree has N^depth leaves per axis.  Leaves are kept in a
canonical row-major order (y ascending, then x ascending) which defines the
index space of the belief vectors.  Merging prunes a complete sibling set
and re-inserts the parent at the slot of its first child, compacting the
remaining indices; cells are never re-split.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import Rect


@dataclass(frozen=True)
class TreeConfig:
    """Subdivision parameters: N children per axis, fixed depth, map extent."""

    branching: int
    max_depth: int
    extent: Rect
    dimension: int = 2

    def __post_init__(self):
        if self.branching < 2:
            raise ValueError("branching must be >= 2")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.dimension != 2:
            raise ValueError("only 2D trees are supported")

    @property
    def leaves_per_axis(self) -> int:
        return self.branching ** self.max_depth

    @property
    def cells_per_parent(self) -> int:
        return self.branching ** self.dimension

    @classmethod
    def for_leaves_per_axis(cls, extent: Rect, leaves_per_axis: int, branching: int = 2):
        """Config whose full-depth grid has the given per-axis resolution."""
        depth = round(np.log(leaves_per_axis) / np.log(branching))
        if branching ** depth != leaves_per_axis:
            raise ValueError(
                f"{leaves_per_axis} cells per axis is not a power of branching {branching}"
            )
        return cls(branching=branching, max_depth=depth, extent=extent)


@dataclass
class _Node:
    node_id: int
    rect: Rect
    depth: int
    parent: int | None
    children: tuple[int, ...] | None  # None marks a leaf


class NdTree:
    """Full tree plus the ordered list of its current leaf cells."""

    def __init__(self, config: TreeConfig):
        self.config = config
        self._nodes: dict[int, _Node] = {}
        self._next_id = 0
        root = self._subdivide(config.extent, depth=0, parent=None)
        self._root_id = root
        leaf_ids = [nid for nid, node in self._nodes.items() if node.children is None]
        leaf_ids.sort(key=lambda nid: (self._nodes[nid].rect.y_min, self._nodes[nid].rect.x_min))
        self._order: list[int] = leaf_ids
        self._positions: dict[int, int] = {}
        self._bounds_cache = None
        self._reindex()

    def _subdivide(self, rect: Rect, depth: int, parent: int | None) -> int:
        nid = self._next_id
        self._next_id += 1
        node = _Node(nid, rect, depth, parent, None)
        self._nodes[nid] = node
        if depth < self.config.max_depth:
            n = self.config.branching
            xs = [rect.x_min + (rect.x_max - rect.x_min) * k / n for k in range(n + 1)]
            ys = [rect.y_min + (rect.y_max - rect.y_min) * k / n for k in range(n + 1)]
            kids = []
            for row in range(n):
                for col in range(n):
                    child = Rect(xs[col], xs[col + 1], ys[row], ys[row + 1])
                    kids.append(self._subdivide(child, depth + 1, nid))
            node.children = tuple(kids)
        return nid

    def _reindex(self):
        self._positions = {nid: i for i, nid in enumerate(self._order)}
        self._bounds_cache = None

    # ------------------------------------------------------------------ views

    @property
    def n_leaves(self) -> int:
        return len(self._order)

    def leaf_ids(self) -> list[int]:
        return list(self._order)

    def leaves(self) -> list[tuple[int, Rect]]:
        return [(nid, self._nodes[nid].rect) for nid in self._order]

    def rect(self, node_id: int) -> Rect:
        return self._nodes[node_id].rect

    def is_leaf(self, node_id: int) -> bool:
        return self._nodes[node_id].children is None

    def parent_of(self, node_id: int) -> int | None:
        return self._nodes[node_id].parent

    def children_of(self, node_id: int) -> tuple[int, ...]:
        kids = self._nodes[node_id].children
        return kids if kids is not None else ()

    def leaf_position(self, node_id: int) -> int:
        """Index of a leaf in the canonical order (KeyError for non-leaves)."""
        return self._positions[node_id]

    def leaf_bounds(self):
        """Per-leaf bound arrays (x_lo, x_hi, y_lo, y_hi) in leaf order."""
        if self._bounds_cache is None:
            rects = [self._nodes[nid].rect for nid in self._order]
            self._bounds_cache = (
                np.array([r.x_min for r in rects]),
                np.array([r.x_max for r in rects]),
                np.array([r.y_min for r in rects]),
                np.array([r.y_max for r in rects]),
            )
        return self._bounds_cache

    # ------------------------------------------------------------------ queries

    def query_overlapping(self, fov: Rect) -> list[int]:
        """Leaf ids whose cell overlaps ``fov`` with positive area, in leaf order.

        Depth-first descent that skips whole subtrees outside the fov.
        """
        hits: list[int] = []
        stack = [self._root_id]
        while stack:
            node = self._nodes[stack.pop()]
            if not node.rect.overlaps(fov):
                continue
            if node.children is None:
                hits.append(node.node_id)
            else:
                stack.extend(node.children)
        hits.sort(key=self._positions.__getitem__)
        return hits

    def leaf_sibling_groups(self) -> list[tuple[int, tuple[int, ...]]]:
        """Parents whose children are all leaves, ordered by first-child slot.

        These are the only merge candidates; eligibility by cell class is
        decided by the caller.
        """
        groups = []
        seen = set()
        for nid in self._order:
            pid = self._nodes[nid].parent
            if pid is None or pid in seen:
                continue
            seen.add(pid)
            kids = self._nodes[pid].children
            if all(self._nodes[k].children is None for k in kids):
                groups.append((pid, kids))
        return groups

    # ------------------------------------------------------------------ mutation

    def prune_children(self, parent_id: int) -> None:
        """Replace a parent's (all-leaf) children by the parent itself.

        The parent takes the leaf slot of its first child; the remaining
        indices compact.  Raises if any child is internal.
        """
        self.prune_many([parent_id])

    def prune_many(self, parent_ids) -> None:
        """Apply a sequence of prunes with a single reindex.

        Equivalent to calling prune_children once per id in order; the
        sequence may cascade (a parent whose children are merged earlier in
        the same sequence), so the order must be bottom-up.
        """
        slot_of = {nid: i for i, nid in enumerate(self._order)}
        for parent_id in parent_ids:
            node = self._nodes[parent_id]
            if node.children is None:
                raise ValueError(f"node {parent_id} is a leaf, nothing to prune")
            missing = [k for k in node.children if k not in slot_of]
            if missing:
                raise ValueError(f"node {parent_id} has internal children, cannot prune")
            slots = sorted(slot_of.pop(k) for k in node.children)
            slot_of[parent_id] = slots[0]
            for k in node.children:
                del self._nodes[k]
            node.children = None
        self._order = [nid for _, nid in sorted((s, nid) for nid, s in slot_of.items())]
        self._reindex()

    def clone(self) -> "NdTree":
        """Independent copy sharing no mutable state."""
        other = object.__new__(NdTree)
        other.config = self.config
        other._nodes = {nid: replace(node) for nid, node in self._nodes.items()}
        other._next_id = self._next_id
        other._root_id = self._root_id
        other._order = list(self._order)
        other._positions = dict(self._positions)
        other._bounds_cache = self._bounds_cache
        return other


def build_uniform(config: TreeConfig) -> NdTree:
    """Full tree to the configured depth; (N^2)^depth leaves in canonical order."""
    return NdTree(config)
