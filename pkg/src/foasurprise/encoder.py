"""Rotation-equivariant tensor-product message passing over the spherical graph.

Features are typed as ``n_scalar`` invariant channels (l=0) and ``n_vector``
3-vector channels (l=1). Messages combine a neighbour's features with the
degree-0 and degree-1 real spherical harmonics of the edge direction through
five paths::

    0 x 0 -> 0    s * Y0
    0 x 1 -> 1    s * Y1
    1 x 0 -> 1    v * Y0
    1 x 1 -> 0    v . Y1
    1 x 1 -> 1    v x Y1

Each path has its own weight matrix mixing input channels into output
channels. Scalars and vectors never mix except through the harmonics, so
co-rotating the geometry and the vector inputs rotates every vector output
and leaves every scalar output unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateEdgeError, InvalidFeatureError
from .graph import SphericalGraph, build_dodecahedron
from .numerics import Tensor, as_tensor, concat, cross, stack

PATHS = ("00_0", "01_1", "10_1", "11_0", "11_1")


@dataclass(frozen=True)
class IrrepsSpec:
    n_scalar: int
    n_vector: int

    def __post_init__(self):
        if self.n_scalar < 0 or self.n_vector < 0:
            raise InvalidFeatureError("channel counts must be non-negative")

    @property
    def dim(self) -> int:
        return self.n_scalar + 3 * self.n_vector


@dataclass
class IrrepsFeature:
    spec: IrrepsSpec
    scalars: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.scalars = np.asarray(self.scalars, dtype=np.float64).reshape(self.spec.n_scalar)
        self.vectors = np.asarray(self.vectors, dtype=np.float64).reshape(self.spec.n_vector, 3)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.scalars, self.vectors.reshape(-1)])


INPUT_SPEC = IrrepsSpec(32, 0)
HIDDEN_SPEC = IrrepsSpec(32, 8)
OUTPUT_SPEC = IrrepsSpec(64, 16)
LATENT_DIM = OUTPUT_SPEC.dim


def real_sh_l1(direction) -> tuple[float, np.ndarray]:
    """Degree-0 and degree-1 real harmonics of ``direction`` (unnormalised: Y0 = 1, Y1 = unit vector)."""
    d = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(d))
    if norm <= 1e-12:
        raise DegenerateEdgeError("zero-length edge direction")
    return 1.0, d / norm


def edge_harmonics(displacements: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(displacements, axis=-1, keepdims=True)
    if (norms <= 1e-12).any():
        raise DegenerateEdgeError("zero-length edge direction")
    return displacements / norms


def _paths_for(spec_in: IrrepsSpec, spec_out: IrrepsSpec, n_gates: int) -> dict[str, tuple[int, int]]:
    """Weight shapes of the allowed message paths for an input/output spec pair."""
    s_in, v_in = spec_in.n_scalar, spec_in.n_vector
    s_out, v_out = spec_out.n_scalar + n_gates, spec_out.n_vector
    shapes = {}
    if s_in and s_out:
        shapes["00_0"] = (s_in, s_out)
    if s_in and v_out:
        shapes["01_1"] = (s_in, v_out)
    if v_in and v_out:
        shapes["10_1"] = (v_in, v_out)
        shapes["11_1"] = (v_in, v_out)
    if v_in and s_out:
        shapes["11_0"] = (v_in, s_out)
    return shapes


def tensor_product_messages(s_j, v_j, y1, weights: dict) -> tuple[Tensor, Tensor | None]:
    """Batched messages.

    ``s_j`` (..., S_in), ``v_j`` (..., V_in, 3) or None, ``y1`` broadcastable to (..., 3).
    Returns scalars (..., S_out) and vectors (..., V_out, 3) (None if no vector paths).
    """
    y1 = as_tensor(y1)
    scalars = None
    vectors = None

    def add(acc, term):
        return term if acc is None else acc + term

    if "00_0" in weights:
        scalars = add(scalars, s_j @ weights["00_0"])
    if "01_1" in weights:
        coeff = s_j @ weights["01_1"]  # (..., V_out)
        vectors = add(vectors, coeff.reshape(*coeff.shape, 1) * y1.reshape(*y1.shape[:-1], 1, 3))
    if v_j is not None:
        y1v = y1.reshape(*y1.shape[:-1], 1, 3)
        if "10_1" in weights:
            vectors = add(vectors, _mix_vectors(v_j, weights["10_1"]))
        if "11_0" in weights:
            dots = (v_j * y1v).sum(axis=-1)  # (..., V_in)
            scalars = add(scalars, dots @ weights["11_0"])
        if "11_1" in weights:
            crossed = cross(v_j, y1v)
            vectors = add(vectors, _mix_vectors(crossed, weights["11_1"]))
    return scalars, vectors


def _mix_vectors(v: Tensor, w: Tensor) -> Tensor:
    """Channel mixing (..., V_in, 3) x (V_in, V_out) -> (..., V_out, 3)."""
    lead = v.shape[:-2]
    v_in = v.shape[-2]
    flat = v.reshape(-1, v_in, 3).transpose(0, 2, 1)  # (B, 3, V_in)
    out = flat @ w  # (B, 3, V_out)
    return out.transpose(0, 2, 1).reshape(*lead, w.shape[-1], 3)


def tp_message(f_j: IrrepsFeature, e_ij, weights: dict) -> IrrepsFeature:
    """Message along a single edge for an explicit set of path weights.

    ``weights`` maps path names from :data:`PATHS` to (C_in, C_out) matrices;
    missing paths are treated as zero.
    """
    _, y1 = real_sh_l1(e_ij)
    weights = {k: as_tensor(np.asarray(v, dtype=np.float64)) for k, v in weights.items()}
    for name, w in weights.items():
        if name not in PATHS:
            raise InvalidFeatureError(f"unknown path {name!r}")
        c_in = f_j.spec.n_scalar if name[0] == "0" else f_j.spec.n_vector
        if w.shape[0] != c_in:
            raise InvalidFeatureError(f"path {name} expects {w.shape[0]} input channels, feature has {c_in}")
    s_out = {w.shape[1] for k, w in weights.items() if k.endswith("_0")}
    v_out = {w.shape[1] for k, w in weights.items() if k.endswith("_1")}
    if len(s_out) > 1 or len(v_out) > 1:
        raise InvalidFeatureError("paths disagree on output channel counts")
    s_j = Tensor(f_j.scalars.reshape(1, -1))
    v_j = Tensor(f_j.vectors.reshape(1, -1, 3)) if f_j.spec.n_vector else None
    scal, vec = tensor_product_messages(s_j, v_j, y1.reshape(1, 3), weights)
    spec = IrrepsSpec(s_out.pop() if s_out else 0, v_out.pop() if v_out else 0)
    return IrrepsFeature(
        spec,
        scal.data.reshape(-1) if scal is not None else np.zeros(spec.n_scalar),
        vec.data.reshape(-1, 3) if vec is not None else np.zeros((spec.n_vector, 3)),
    )


def gated_nonlinearity(scalars, vectors, gates) -> tuple[Tensor, Tensor]:
    """SiLU on scalars; each vector channel scaled by sigmoid of its gate scalar."""
    scalars, vectors, gates = as_tensor(scalars), as_tensor(vectors), as_tensor(gates)
    if gates.shape[-1] != vectors.shape[-2]:
        raise InvalidFeatureError(f"{gates.shape[-1]} gates for {vectors.shape[-2]} vector channels")
    g = gates.sigmoid()
    return scalars.silu(), vectors * g.reshape(*g.shape, 1)


def _linear(x: Tensor, w: Tensor) -> Tensor:
    """Mix the last axis of ``x`` with ``w`` (C_in, C_out) as one 2-D matmul."""
    lead = x.shape[:-1]
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(*lead, w.shape[-1])


def _node_mm(m: np.ndarray, x: Tensor) -> Tensor:
    """Apply a constant (N, N) node operator to a node-major tensor (N, ...)."""
    return (Tensor(m) @ x.reshape(x.shape[0], -1)).reshape(x.shape)


@dataclass(frozen=True)
class GraphOperators:
    """Node-level operators equivalent to gather -> per-edge harmonic -> mean aggregation.

    ``mean`` averages incoming neighbours; ``directional[k]`` does the same
    with each message weighted by component k of that edge's unit direction.
    """

    mean: np.ndarray
    directional: np.ndarray  # (3, N, N)

    @classmethod
    def build(cls, graph: SphericalGraph, positions: np.ndarray | None = None) -> GraphOperators:
        senders, receivers = graph.senders, graph.receivers
        n, e = graph.n_nodes, len(senders)
        y1 = edge_harmonics(graph.displacements(positions))
        deg = np.bincount(receivers, minlength=n).astype(np.float64)
        aggregate = np.zeros((n, e))
        aggregate[receivers, np.arange(e)] = 1.0 / deg[receivers]
        gather = np.zeros((e, n))
        gather[np.arange(e), senders] = 1.0
        mean = aggregate @ gather
        directional = np.stack([(aggregate * y1[:, k]) @ gather for k in range(3)])
        return cls(mean, directional)


class EquivariantLayer:
    """One message-passing round: mean of incoming tensor-product messages plus self-interaction.

    Works on node-major features: scalars (N, B, S) and vectors (3, N, B, V).
    Because every path is linear in the neighbour's features, the
    gather/harmonic/aggregate chain collapses into the fixed operators of
    :class:`GraphOperators`; :func:`tensor_product_messages` is the per-edge
    reference form of the same computation.
    """

    def __init__(self, spec_in: IrrepsSpec, spec_out: IrrepsSpec, gated: bool, rng: np.random.Generator,
                 prefix: str):
        self.spec_in, self.spec_out, self.gated = spec_in, spec_out, gated
        n_gates = spec_out.n_vector if gated else 0
        self.n_gates = n_gates
        self.path_shapes = _paths_for(spec_in, spec_out, n_gates)
        s_out_total = spec_out.n_scalar + n_gates

        # paths feeding each output type, self-interaction included
        n_scalar_paths = sum(k.endswith("_0") for k in self.path_shapes) + (spec_in.n_scalar > 0)
        n_vector_paths = sum(k.endswith("_1") for k in self.path_shapes) + (spec_in.n_vector > 0)
        self.params: dict[str, Tensor] = {}
        for name, (c_in, c_out) in self.path_shapes.items():
            n_paths = n_scalar_paths if name.endswith("_0") else n_vector_paths
            std = (1.0 / (c_in * n_paths)) ** 0.5
            self.params[f"{prefix}.path_{name}"] = Tensor(rng.normal(0.0, std, (c_in, c_out)), True)
        if spec_in.n_scalar:
            std = (1.0 / (spec_in.n_scalar * n_scalar_paths)) ** 0.5
            self.params[f"{prefix}.self_scalar"] = Tensor(rng.normal(0.0, std, (spec_in.n_scalar, s_out_total)), True)
        if spec_in.n_vector and spec_out.n_vector:
            std = (1.0 / (spec_in.n_vector * n_vector_paths)) ** 0.5
            self.params[f"{prefix}.self_vector"] = Tensor(
                rng.normal(0.0, std, (spec_in.n_vector, spec_out.n_vector)), True)
        self.params[f"{prefix}.bias"] = Tensor(np.zeros(s_out_total), True)
        self.prefix = prefix

    def _p(self, name: str) -> Tensor | None:
        return self.params.get(f"{self.prefix}.{name}")

    def __call__(self, scalars: Tensor, vectors: Tensor | None, ops: GraphOperators
                 ) -> tuple[Tensor, Tensor | None]:
        m, d = ops.mean, ops.directional
        out_s = _linear(scalars, self._p("self_scalar")) + self._p("bias")
        out_v = None

        def add_v(term):
            nonlocal out_v
            out_v = term if out_v is None else out_v + term

        if "00_0" in self.path_shapes:
            out_s = out_s + _node_mm(m, _linear(scalars, self._p("path_00_0")))
        if "01_1" in self.path_shapes:
            coeff = _linear(scalars, self._p("path_01_1"))
            add_v(stack([_node_mm(d[k], coeff) for k in range(3)]))
        if vectors is not None:
            comps = [vectors[k] for k in range(3)]
            if "10_1" in self.path_shapes:
                add_v(_linear(stack([_node_mm(m, c) for c in comps]), self._p("path_10_1")))
            if "11_0" in self.path_shapes:
                dots = _node_mm(d[0], comps[0]) + _node_mm(d[1], comps[1]) + _node_mm(d[2], comps[2])
                out_s = out_s + _linear(dots, self._p("path_11_0"))
            if "11_1" in self.path_shapes:
                x, y, z = comps
                crossed = stack([
                    _node_mm(d[2], y) - _node_mm(d[1], z),
                    _node_mm(d[0], z) - _node_mm(d[2], x),
                    _node_mm(d[1], x) - _node_mm(d[0], y),
                ])
                add_v(_linear(crossed, self._p("path_11_1")))
            if self._p("self_vector") is not None:
                add_v(_linear(vectors, self._p("self_vector")))

        if self.gated:
            n_s = self.spec_out.n_scalar
            gates = out_s[..., n_s:]  # (N, B, V), broadcasts over the leading component axis
            out_s, out_v = out_s[..., :n_s].silu(), out_v * gates.sigmoid()
        return out_s, out_v


class Encoder:
    """Two equivariant layers, (32, 0) -> (32, 8) gated -> (64, 16), mean-pooled over nodes."""

    def __init__(self, seed: int = 0, graph: SphericalGraph | None = None,
                 spec_in: IrrepsSpec = INPUT_SPEC, hidden: IrrepsSpec = HIDDEN_SPEC,
                 spec_out: IrrepsSpec = OUTPUT_SPEC):
        self.graph = graph or build_dodecahedron()
        self.spec_in, self.hidden, self.spec_out = spec_in, hidden, spec_out
        gen = np.random.default_rng(np.random.SeedSequence([seed, 0xE1C0]))
        self.layer1 = EquivariantLayer(spec_in, hidden, True, gen, "encoder.layer1")
        self.layer2 = EquivariantLayer(hidden, spec_out, False, gen, "encoder.layer2")
        self._ops = GraphOperators.build(self.graph)

    @property
    def params(self) -> dict[str, Tensor]:
        return {**self.layer1.params, **self.layer2.params}

    def _forward(self, scalars, vectors, positions) -> tuple[Tensor, Tensor]:
        scalars = as_tensor(scalars)
        if scalars.ndim == 2:
            scalars = scalars.reshape(1, *scalars.shape)
        n = self.graph.n_nodes
        if scalars.ndim != 3 or scalars.shape[1] != n or scalars.shape[2] != self.spec_in.n_scalar:
            raise InvalidFeatureError(
                f"expected (B, {n}, {self.spec_in.n_scalar}) scalar input, got {scalars.shape}")
        if vectors is not None:
            if self.spec_in.n_vector == 0:
                raise InvalidFeatureError("encoder input spec has no vector channels")
            vectors = as_tensor(vectors)
            if vectors.ndim == 3:
                vectors = vectors.reshape(1, *vectors.shape)
            vectors = vectors.transpose(3, 1, 0, 2)  # (B, N, V, 3) -> (3, N, B, V)
        elif self.spec_in.n_vector:
            raise InvalidFeatureError("vector input required by encoder spec")
        ops = self._ops if positions is None else GraphOperators.build(self.graph, positions)
        s, v = self.layer1(scalars.transpose(1, 0, 2), vectors, ops)
        return self.layer2(s, v, ops)

    def node_features(self, scalars, vectors=None, positions: np.ndarray | None = None
                      ) -> tuple[Tensor, Tensor]:
        """Per-node output features before pooling: (B, 20, 64) and (B, 20, 16, 3)."""
        s, v = self._forward(scalars, vectors, positions)
        return s.transpose(1, 0, 2), v.transpose(2, 1, 3, 0)

    def __call__(self, scalars, vectors=None, positions: np.ndarray | None = None) -> Tensor:
        """Pooled latent z (B, 112): 64 scalars then 16 flattened vectors."""
        s, v = self._forward(scalars, vectors, positions)
        pooled_s = s.mean(axis=0)  # (B, 64)
        pooled_v = v.mean(axis=1).transpose(1, 2, 0)  # (B, 16, 3)
        return concat([pooled_s, pooled_v.reshape(pooled_v.shape[0], -1)], axis=-1)


def encode_frame(node_inputs, graph: SphericalGraph, encoder: Encoder, vectors=None) -> np.ndarray:
    """Latent for one frame of per-node inputs (20, C) -> (112,)."""
    if graph.n_nodes != encoder.graph.n_nodes:
        raise ConfigError("graph and encoder disagree on node count")
    v = None if vectors is None else np.asarray(vectors)[None]
    z = encoder(np.asarray(node_inputs)[None], v, positions=graph.positions)
    return z.data[0]


def split_latent(z: np.ndarray, spec: IrrepsSpec = OUTPUT_SPEC) -> tuple[np.ndarray, np.ndarray]:
    """(..., 112) -> scalars (..., 64), vectors (..., 16, 3)."""
    z = np.asarray(z)
    return z[..., : spec.n_scalar], z[..., spec.n_scalar:].reshape(*z.shape[:-1], spec.n_vector, 3)
