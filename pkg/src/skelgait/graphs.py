"""Per-frame multi-level graph construction.

Level 1 nodes are the joints themselves; level 2/3 nodes are joint groups
whose positions are the mean of their members. Two higher-level nodes are
adjacent exactly when some pair of their member joints is adjacent at level 1
(:func:`derive_level_edges`); the bundled tables store the frozen result.
"""

from dataclasses import dataclass

import numpy as np

from .errors import LayoutMismatch, UncoveredJoint
from .layouts import JointLayout


@dataclass(frozen=True)
class GroupingTable:
    """One level of the joint grouping: node -> member joints."""

    level: int
    groups: tuple
    joint_count: int

    @property
    def node_count(self) -> int:
        return len(self.groups)

    def joint_to_node(self) -> np.ndarray:
        out = np.full(self.joint_count, -1, dtype=np.intp)
        for node, members in enumerate(self.groups):
            out[list(members)] = node
        if (out < 0).any():
            missing = int(np.nonzero(out < 0)[0][0])
            raise UncoveredJoint(f"joint {missing} belongs to no level-{self.level} node")
        return out


@dataclass(frozen=True)
class LevelGraph:
    """One frame's graph at one level: node positions plus undirected edges."""

    level: int
    node_positions: np.ndarray
    edges: tuple

    @property
    def node_count(self) -> int:
        return self.node_positions.shape[0]

    @property
    def neighbor_sets(self) -> tuple:
        """Neighbors of each node, self included."""
        sets = [{i} for i in range(self.node_count)]
        for a, b in self.edges:
            sets[a].add(b)
            sets[b].add(a)
        return tuple(frozenset(s) for s in sets)


def grouping_table(layout: JointLayout, level: int) -> GroupingTable:
    return GroupingTable(level=level, groups=layout.groups[level], joint_count=layout.joint_count)


def build_level_graph(frame: np.ndarray, table: GroupingTable, edges) -> LevelGraph:
    """Group one frame's joints into level nodes positioned at member means."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2 or frame.shape[1] != 3:
        raise LayoutMismatch("frame must have shape (joints, 3)")
    if frame.shape[0] != table.joint_count:
        raise LayoutMismatch(
            f"frame has {frame.shape[0]} joints, grouping expects {table.joint_count}"
        )
    table.joint_to_node()  # raises UncoveredJoint on partial covers
    n = table.node_count
    positions = np.empty((n, 3))
    for node, members in enumerate(table.groups):
        positions[node] = frame[list(members)].mean(axis=0)
    normalized = []
    for a, b in edges:
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise LayoutMismatch(f"edge ({a}, {b}) invalid for {n} nodes")
        normalized.append((min(a, b), max(a, b)))
    return LevelGraph(
        level=table.level, node_positions=positions, edges=tuple(sorted(set(normalized)))
    )


def neighbor_mask(graph: LevelGraph) -> np.ndarray:
    """Boolean (n, n) mask: self plus direct neighbors."""
    return adjacency_mask(graph.node_count, graph.edges)


def adjacency_mask(node_count: int, edges) -> np.ndarray:
    mask = np.eye(node_count, dtype=bool)
    for a, b in edges:
        mask[a, b] = True
        mask[b, a] = True
    return mask


def derive_level_edges(joint_edges, groups) -> tuple:
    """Edges of a grouped level: nodes touch iff any member joints touch."""
    node_of: dict[int, int] = {}
    for node, members in enumerate(groups):
        for j in members:
            node_of[j] = node
    out = set()
    for a, b in joint_edges:
        na, nb = node_of[a], node_of[b]
        if na != nb:
            out.add((min(na, nb), max(na, nb)))
    return tuple(sorted(out))


def is_connected(node_count: int, edges) -> bool:
    if node_count == 0:
        return False
    seen = {0}
    frontier = [0]
    neighbors: dict[int, list[int]] = {i: [] for i in range(node_count)}
    for a, b in edges:
        neighbors[a].append(b)
        neighbors[b].append(a)
    while frontier:
        cur = frontier.pop()
        for nxt in neighbors[cur]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return len(seen) == node_count


def node_positions_batch(frames: np.ndarray, membership: np.ndarray) -> np.ndarray:
    """Batched group means: frames (B, J, 3) x membership (n, J) -> (B, n, 3)."""
    return np.einsum("nj,bjd->bnd", membership, frames)
