"""Bundled joint layouts: names, rest poses, groupings, and level topology.

Each layout ships as three versioned CSV tables under ``skelgait/tables``:

* ``<name>_skeleton.csv``: ``index,name,parent,dx,dy,dz`` rows (offsets from
  the parent joint; parent -1 marks the root) plus a ``# reference_joint=i``
  header naming the joint subtracted during normalization.
* ``<name>_groups.csv``: ``level,node_index,member_joint_indices`` rows for
  levels 2 (body parts) and 3 (body regions); members are space-separated.
  Level 1 is always the singleton grouping and is not stored.
* ``<name>_topology.csv``: ``level,node_a,node_b`` undirected edges for all
  three levels. The level-2/3 rows are frozen outputs of
  :func:`skelgait.graphs.derive_level_edges` (tests re-derive them).
"""

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import InvalidConfig, LayoutMismatch, UncoveredJoint

LAYOUT_NAMES = ("kinect20", "kinect25", "casia14", "toy6")
LEVELS = (1, 2, 3)


@dataclass(frozen=True)
class JointLayout:
    name: str
    joint_names: tuple[str, ...]
    parents: np.ndarray
    rest_offsets: np.ndarray
    reference_joint: int
    groups: dict
    edges: dict

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    def node_count(self, level: int) -> int:
        return len(self.groups[level])

    def joint_to_node(self, level: int) -> np.ndarray:
        """Map joint index -> containing node index at ``level``."""
        out = np.full(self.joint_count, -1, dtype=np.intp)
        for node, members in enumerate(self.groups[level]):
            for j in members:
                out[j] = node
        if (out < 0).any():
            missing = int(np.nonzero(out < 0)[0][0])
            raise UncoveredJoint(f"joint {missing} belongs to no level-{level} node")
        return out

    def membership_matrix(self, level: int) -> np.ndarray:
        """(n_level, J) row-stochastic matrix; M @ joints = group means."""
        m = np.zeros((self.node_count(level), self.joint_count))
        for node, members in enumerate(self.groups[level]):
            m[node, list(members)] = 1.0 / len(members)
        return m

    def rest_pose(self, offset_scale: np.ndarray | None = None) -> np.ndarray:
        """Absolute joint positions from parent offsets (optionally scaled)."""
        offsets = self.rest_offsets
        if offset_scale is not None:
            offsets = offsets * np.asarray(offset_scale, dtype=np.float64)[:, None]
        pos = np.full((self.joint_count, 3), np.nan)
        done = np.zeros(self.joint_count, dtype=bool)
        remaining = self.joint_count
        while remaining:
            progressed = False
            for j in range(self.joint_count):
                if done[j]:
                    continue
                p = self.parents[j]
                if p < 0:
                    pos[j] = offsets[j]
                elif done[p]:
                    pos[j] = pos[p] + offsets[j]
                else:
                    continue
                done[j] = True
                remaining -= 1
                progressed = True
            if not progressed:
                raise LayoutMismatch(f"parent pointers of layout {self.name!r} form a cycle")
        return pos


def _table_lines(filename: str) -> list[str]:
    text = resources.files("skelgait").joinpath("tables", filename).read_text()
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


def _parse_skeleton(name: str):
    names: list[str] = []
    parents: list[int] = []
    offsets: list[list[float]] = []
    reference = 0
    for line in _table_lines(f"{name}_skeleton.csv"):
        if line.startswith("#"):
            key, _, value = line.lstrip("# ").partition("=")
            if key.strip() == "reference_joint":
                reference = int(value)
            continue
        if line.startswith("index,"):
            continue
        idx, jname, parent, dx, dy, dz = line.split(",")
        if int(idx) != len(names):
            raise LayoutMismatch(f"{name}: skeleton rows out of order at {idx}")
        names.append(jname)
        parents.append(int(parent))
        offsets.append([float(dx), float(dy), float(dz)])
    return tuple(names), np.array(parents, dtype=np.intp), np.array(offsets), reference


def _parse_groups(name: str, joint_count: int) -> dict:
    groups: dict = {2: {}, 3: {}}
    for line in _table_lines(f"{name}_groups.csv"):
        if line.startswith("level,"):
            continue
        level_s, node_s, members_s = line.split(",")
        level, node = int(level_s), int(node_s)
        members = tuple(int(tok) for tok in members_s.split())
        groups[level][node] = members
    out = {1: tuple((j,) for j in range(joint_count))}
    for level in (2, 3):
        table = groups[level]
        if sorted(table) != list(range(len(table))):
            raise LayoutMismatch(f"{name}: non-contiguous node indices at level {level}")
        ordered = tuple(table[i] for i in range(len(table)))
        seen: set[int] = set()
        for members in ordered:
            for j in members:
                if j < 0 or j >= joint_count or j in seen:
                    raise LayoutMismatch(
                        f"{name}: level-{level} grouping is not a disjoint cover"
                    )
                seen.add(j)
        if len(seen) != joint_count:
            missing = min(set(range(joint_count)) - seen)
            raise UncoveredJoint(f"{name}: joint {missing} uncovered at level {level}")
        out[level] = ordered
    return out


def _parse_topology(name: str, node_counts: dict) -> dict:
    edges: dict = {1: [], 2: [], 3: []}
    for line in _table_lines(f"{name}_topology.csv"):
        if line.startswith("level,"):
            continue
        level_s, a_s, b_s = line.split(",")
        level, a, b = int(level_s), int(a_s), int(b_s)
        n = node_counts[level]
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise LayoutMismatch(f"{name}: bad level-{level} edge ({a}, {b})")
        edges[level].append((min(a, b), max(a, b)))
    return {level: tuple(sorted(set(e))) for level, e in edges.items()}


@lru_cache(maxsize=None)
def load_layout(name: str) -> JointLayout:
    if name not in LAYOUT_NAMES:
        raise InvalidConfig(f"unknown layout {name!r}; known: {', '.join(LAYOUT_NAMES)}")
    joint_names, parents, offsets, reference = _parse_skeleton(name)
    joint_count = len(joint_names)
    groups = _parse_groups(name, joint_count)
    node_counts = {level: len(groups[level]) for level in LEVELS}
    edges = _parse_topology(name, node_counts)
    parents.setflags(write=False)
    offsets.setflags(write=False)
    return JointLayout(
        name=name,
        joint_names=joint_names,
        parents=parents,
        rest_offsets=offsets,
        reference_joint=reference,
        groups=groups,
        edges=edges,
    )
