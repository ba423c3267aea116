"""Dodecahedral virtual-microphone graph and per-node projection of B-format frames."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

PHI = (1.0 + 5.0 ** 0.5) / 2.0


@dataclass(frozen=True)
class SphericalGraph:
    """Node positions (20, 3), undirected edges (30, 2) with i < j.

    ``senders``/``receivers`` list both orientations of every edge; the
    displacement of directed edge k is ``positions[receivers[k]] - positions[senders[k]]``,
    i.e. ``e_ij = p_i - p_j`` for a message from j to i.
    """

    positions: np.ndarray
    edges: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def senders(self) -> np.ndarray:
        return np.concatenate([self.edges[:, 1], self.edges[:, 0]])

    @property
    def receivers(self) -> np.ndarray:
        return np.concatenate([self.edges[:, 0], self.edges[:, 1]])

    def displacements(self, positions: np.ndarray | None = None) -> np.ndarray:
        pos = self.positions if positions is None else positions
        return pos[self.receivers] - pos[self.senders]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n_nodes)

    def neighbors(self, i: int) -> list[int]:
        out = [int(j) for a, j in self.edges if a == i] + [int(a) for a, j in self.edges if j == i]
        return sorted(out)

    def to_json(self) -> str:
        return json.dumps({"positions": self.positions.tolist(), "edges": self.edges.tolist()}, indent=2)


@lru_cache(maxsize=1)
def build_dodecahedron() -> SphericalGraph:
    """Regular dodecahedron inscribed in the unit sphere, nodes sorted lexicographically."""
    verts = [np.array(v, dtype=np.float64) for v in itertools.product((-1.0, 1.0), repeat=3)]
    inv = 1.0 / PHI
    for a, b in itertools.product((-inv, inv), (-PHI, PHI)):
        base = (0.0, a, b)
        for shift in range(3):
            verts.append(np.roll(np.array(base), shift))
    pos = np.array([v / np.linalg.norm(v) for v in verts])
    order = np.lexsort(pos.T[::-1])
    pos = pos[order]
    pos.setflags(write=False)

    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    iu = np.triu_indices(len(pos), k=1)
    threshold = dist[iu].min() + 1e-9
    edges = np.array([(i, j) for i, j in zip(*iu) if dist[i, j] <= threshold], dtype=np.intp)
    edges.setflags(write=False)
    return SphericalGraph(pos, edges)


def project_node_features(frame, graph: SphericalGraph | None = None) -> np.ndarray:
    """Per-node features ``[W, p_x X, p_y Y, p_z Z]``.

    ``frame`` is a 4-vector or an array whose leading axis has length 4
    (e.g. (4, N) samples). The result has shape (..., 20, 4) with the time
    axis, if any, first.
    """
    graph = graph or build_dodecahedron()
    a = np.asarray(frame, dtype=np.float64)
    a = np.moveaxis(a, 0, -1)  # (..., 4)
    scale = np.concatenate([np.ones((graph.n_nodes, 1)), graph.positions], axis=1)  # (20, 4)
    return a[..., None, :] * scale


def _is_signed_permutation(m: np.ndarray) -> bool:
    r = np.round(m)
    return np.allclose(m, r, atol=1e-12) and np.all(np.abs(r).sum(axis=0) == 1) and np.all(np.abs(r).sum(axis=1) == 1)


@lru_cache(maxsize=1)
def tetrahedral_rotations() -> tuple[np.ndarray, ...]:
    """The 12 proper rotations that are cyclic axis permutations with an even number of sign flips.

    These are exactly the rotations that map the dodecahedron's vertex set to
    itself while acting on coordinates as signed permutations.
    """
    rotations = []
    cyclic = [np.eye(3), np.roll(np.eye(3), 1, axis=0), np.roll(np.eye(3), 2, axis=0)]
    for perm in cyclic:
        for signs in itertools.product((1.0, -1.0), repeat=3):
            r = np.diag(signs) @ perm
            if np.isclose(np.linalg.det(r), 1.0):
                rotations.append(r)
    rotations.sort(key=lambda r: (not np.allclose(r, np.eye(3)), tuple(r.reshape(-1))))
    return tuple(rotations)


def vertex_permutation(rotation: np.ndarray, graph: SphericalGraph | None = None) -> np.ndarray:
    """``sigma`` with ``R p_i = p_sigma[i]``; raises if R does not preserve the vertex set."""
    graph = graph or build_dodecahedron()
    moved = graph.positions @ np.asarray(rotation).T
    dist = np.linalg.norm(moved[:, None, :] - graph.positions[None, :, :], axis=-1)
    sigma = dist.argmin(axis=1)
    if dist[np.arange(len(sigma)), sigma].max() > 1e-9:
        raise ValueError("rotation does not map the vertex set onto itself")
    return sigma


def axis_action(rotation: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For a signed permutation R return (pi, s) with ``(R v)_k = s_k v_pi[k]``."""
    rotation = np.asarray(rotation)
    if not _is_signed_permutation(rotation):
        raise ValueError("rotation is not a signed permutation")
    pi = np.abs(rotation).argmax(axis=1)
    signs = rotation[np.arange(3), pi]
    return pi, signs
