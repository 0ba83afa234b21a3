"""Binary-tree topology and trainable parameters of the material network.

Blocks are addressed by ``(layer, index)`` with both counters 1-based,
layer 1 being the root. Storage is breadth-first: block ``(i, k)`` sits at
flat position ``2**(i-1) - 1 + (k-1)``. The network of depth ``N`` has
``2**N - 1`` blocks and ``2**N`` leaves; leaf ``k`` (1-based) is phase 1
when odd and phase 2 when even, and the children of block ``(N, k)`` are
leaves ``2k-1`` and ``2k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateNetwork, DegeneratePhase, DepthMismatch, ZeroBlock

CONVENTION = "mandel-v1"


def block_index(layer: int, index: int) -> int:
    """Flat breadth-first position of block ``(layer, index)``."""
    return 2 ** (layer - 1) - 1 + (index - 1)


def block_address(flat: int) -> tuple[int, int]:
    layer = int(np.floor(np.log2(flat + 1))) + 1
    return layer, flat - (2 ** (layer - 1) - 1) + 1


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DmnParams:
    """Trainable state: leaf activations ``z`` and per-block angles.

    Parameters
    ----------
    depth : int
        Number of block layers ``N >= 1``.
    z : array_like, shape (2**N,)
        Leaf activations; leaf weights are ``max(z, 0)``.
    angles : array_like, shape (2**N - 1, 3)
        ``(alpha, beta, gamma)`` per block in breadth-first order.
    """

    depth: int
    z: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise ValueError(f"depth must be a positive integer, got {self.depth}")
        object.__setattr__(self, "depth", int(self.depth))
        z = _frozen(self.z).reshape(-1)
        angles = _frozen(self.angles).reshape(-1, 3) if np.size(self.angles) else _frozen(self.angles)
        if z.shape != (self.n_leaves,):
            raise ValueError(f"expected {self.n_leaves} leaf activations, got {z.shape[0]}")
        if angles.shape != (self.n_blocks, 3):
            raise ValueError(f"expected {self.n_blocks} angle triples, got shape {angles.shape}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "angles", angles)

    @property
    def n_leaves(self) -> int:
        return 2 ** self.depth

    @property
    def n_blocks(self) -> int:
        return 2 ** self.depth - 1

    @cached_property
    def weights(self) -> "NodeWeights":
        return propagate_weights(self)

    @property
    def is_degenerate(self) -> bool:
        """True if one phase parity carries no weight at all."""
        w = self.weights.leaves
        return not (np.any(w[0::2] > 0) and np.any(w[1::2] > 0))

    @cached_property
    def pruned(self) -> "PrunedTree":
        return prune(self)

    def block_angles(self, layer: int, index: int) -> np.ndarray:
        return self.angles[block_index(layer, index)]

    def replace(self, z=None, angles=None) -> "DmnParams":
        return DmnParams(self.depth, self.z if z is None else z,
                         self.angles if angles is None else angles)

    def flat(self) -> np.ndarray:
        """Concatenate ``z`` and the raveled angles into one parameter vector."""
        return np.concatenate([self.z, self.angles.ravel()])

    @classmethod
    def from_flat(cls, depth: int, theta) -> "DmnParams":
        n = 2 ** depth
        theta = np.asarray(theta, float)
        return cls(depth, theta[:n], theta[n:].reshape(-1, 3))

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "z": [float(x) for x in self.z],
            "angles": [[float(x) for x in row] for row in self.angles],
            "convention": CONVENTION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DmnParams":
        conv = d.get("convention", CONVENTION)
        if conv != CONVENTION:
            raise ValueError(f"unsupported parameter convention {conv!r}")
        return cls(int(d["depth"]), d["z"], d["angles"])

    def __eq__(self, other):
        if not isinstance(other, DmnParams):
            return NotImplemented
        return (self.depth == other.depth and np.array_equal(self.z, other.z)
                and np.array_equal(self.angles, other.angles))

    __hash__ = None


def leaf_weights(z) -> np.ndarray:
    """ReLU activation of the leaf parameters."""
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"number of leaf activations must be a power of two, got {n}")
    return np.maximum(z, 0.0)


class NodeWeights:
    """Accumulated weights of every node.

    ``layers[i]`` holds the weights of layer ``i`` (1-based) for
    ``i = 1..N``; ``layers[N + 1]`` are the leaf weights.
    """

    def __init__(self, layers: dict[int, np.ndarray]):
        self.layers = layers
        self.depth = len(layers) - 1

    @property
    def leaves(self) -> np.ndarray:
        return self.layers[self.depth + 1]

    @property
    def root(self) -> float:
        return float(self.layers[1][0])

    def at(self, layer: int, index: int) -> float:
        return float(self.layers[layer][index - 1])

    def children(self, layer: int, index: int) -> tuple[float, float]:
        child = self.layers[layer + 1]
        return float(child[2 * index - 2]), float(child[2 * index - 1])


def propagate_weights(params: DmnParams) -> NodeWeights:
    """Sum leaf weights upward: parent weight = sum of its two children."""
    w = leaf_weights(params.z)
    layers = {params.depth + 1: w}
    for i in range(params.depth, 0, -1):
        w = w[0::2] + w[1::2]
        layers[i] = w
    return NodeWeights(layers)


def block_fractions(weights: NodeWeights, layer: int, index: int) -> tuple[float, float]:
    """Volume fractions ``(f1, f2)`` of the two children of block ``(layer, index)``."""
    w1, w2 = weights.children(layer, index)
    total = w1 + w2
    if total <= 0.0:
        raise ZeroBlock(f"block ({layer}, {index}) has two zero-weight children")
    f1 = w1 / total
    return f1, 1.0 - f1


def fractions_array(w_children: np.ndarray):
    """Vectorized fractions for consecutive child pairs; zero blocks get 0.5/0.5.

    Returns ``(f1, f2, total)`` arrays over the blocks of one layer.
    """
    w1, w2 = w_children[0::2], w_children[1::2]
    total = w1 + w2
    safe = np.where(total > 0.0, total, 1.0)
    f1 = np.where(total > 0.0, w1 / safe, 0.5)
    f2 = 1.0 - f1
    return f1, f2, total


def phase_volume_fractions(params: DmnParams) -> tuple[float, float]:
    """Phase fractions carried by odd (phase 1) and even (phase 2) leaves."""
    w = params.weights.leaves
    total = float(np.sum(w))
    if total <= 0.0:
        raise DegenerateNetwork("all leaf weights are zero")
    vf1 = float(np.sum(w[0::2])) / total
    return vf1, 1.0 - vf1


def rescale_to_volume_fraction(params: DmnParams, vf_new: float) -> DmnParams:
    """Rescale odd/even leaf weights so that the phase-2 fraction becomes ``vf_new``."""
    _, vf_trained = phase_volume_fractions(params)
    if not 0.0 < vf_trained < 1.0:
        raise DegeneratePhase(f"trained phase-2 fraction is {vf_trained}")
    if not 0.0 < vf_new < 1.0:
        raise ValueError(f"vf_new must lie in (0, 1), got {vf_new}")
    w = leaf_weights(params.z).copy()
    w[0::2] *= (1.0 - vf_new) / (1.0 - vf_trained)
    w[1::2] *= vf_new / vf_trained
    return params.replace(z=w)


def interpolation_coefficient(vf_low: float, vf_high: float, vf_new: float) -> float:
    """Weight of the low model: ``(vf_high - vf_new) / (vf_high - vf_low)``."""
    if vf_high == vf_low:
        raise ValueError("vf_high and vf_low must differ")
    return (vf_high - vf_new) / (vf_high - vf_low)


def interpolate_params(low: DmnParams, high: DmnParams, rho: float) -> DmnParams:
    """Convex combination of two pre-trained networks.

    Leaf weights mix as ``rho*relu(z_low) + (1-rho)*relu(z_high)`` and every
    angle as ``rho*theta_low + (1-rho)*theta_high``.
    """
    if low.depth != high.depth:
        raise DepthMismatch(f"depths differ: {low.depth} vs {high.depth}")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if rho == 1.0:
        return low.replace(z=leaf_weights(low.z))
    if rho == 0.0:
        return high.replace(z=leaf_weights(high.z))
    z = rho * leaf_weights(low.z) + (1.0 - rho) * leaf_weights(high.z)
    angles = rho * low.angles + (1.0 - rho) * high.angles
    return DmnParams(low.depth, z, angles)


@dataclass(frozen=True)
class TreeNode:
    """Node of the pruned tree.

    ``leaf`` is the 0-based leaf position for material nodes and ``None``
    for blocks. ``children`` are node ids into ``PrunedTree.nodes``; a
    block with one live child is a pass-through.
    """

    layer: int
    index: int
    leaf: int | None = None
    children: tuple[int, ...] = ()
    f1: float = 1.0
    f2: float = 0.0
    angles: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    @property
    def address(self) -> tuple[int, int]:
        return self.layer, self.index


@dataclass(frozen=True)
class PrunedTree:
    """Active part of the network in post-order (children before parents)."""

    nodes: tuple[TreeNode, ...]
    root: int
    leaves: tuple[int, ...]  # node ids of active leaves, left to right

    @property
    def active_leaves(self) -> list[int]:
        """0-based leaf positions that carry nonzero weight."""
        return [self.nodes[n].leaf for n in self.leaves]


def prune(params: DmnParams) -> PrunedTree:
    """Drop zero-weight leaves and zero blocks; keep single-child pass-throughs."""
    weights = params.weights
    if weights.root <= 0.0:
        raise DegenerateNetwork("all leaf weights are zero")
    nodes: list[TreeNode] = []
    leaves: list[int] = []
    N = params.depth

    def visit(layer, index):
        if layer == N + 1:
            if weights.at(layer, index) <= 0.0:
                return None
            nodes.append(TreeNode(layer, index, leaf=index - 1))
            leaves.append(len(nodes) - 1)
            return len(nodes) - 1
        if weights.at(layer, index) <= 0.0:
            return None
        c1 = visit(layer + 1, 2 * index - 1)
        c2 = visit(layer + 1, 2 * index)
        f1, f2 = block_fractions(weights, layer, index)
        children = tuple(c for c in (c1, c2) if c is not None)
        nodes.append(TreeNode(layer, index, children=children, f1=f1, f2=f2,
                              angles=tuple(float(a) for a in params.block_angles(layer, index))))
        return len(nodes) - 1

    root = visit(1, 1)
    return PrunedTree(tuple(nodes), root, tuple(leaves))
