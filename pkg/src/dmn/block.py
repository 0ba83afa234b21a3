"""Two-phase laminate building block and the offline forward pass.

Inside a block the interface normal is the local 3-direction: the in-plane
strain components (1, 2, 6) are continuous and the traction components
(3, 4, 5) are continuous. With ``C_hat = f2*C1 + f1*C2`` the phase-1 strain
concentration ``s1`` is the identity on rows 1, 2, 6 and

    s1[345, :] = C_hat[345, 345]^-1 (C2[345, :] - C_hat[345, :] P_126)

where ``P_126`` keeps only columns 1, 2, 6. The block stiffness follows as
``C = C2 + f1 (C1 - C2) s1``.

Every kernel here works on arbitrary leading batch dimensions so that the
training loop can push a whole mini-batch and a whole tree layer through a
handful of numpy calls.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNetwork, SingularInterfaceBlock
from .mandel import rotation_matrix, rotation_matrix_grad
from .network import DmnParams, fractions_array

COND_LIMIT = 1e12
IN_PLANE = [0, 1, 5]
NORMAL = slice(2, 5)


def inv3(A):
    """Closed-form (adjugate) inverse of stacked 3x3 matrices, with determinants."""
    a00, a01, a02, a10, a11, a12, a20, a21, a22 = (A[..., i, j] for i in range(3) for j in range(3))
    adj = np.empty(A.shape)
    adj[..., 0, 0] = a11 * a22 - a12 * a21
    adj[..., 0, 1] = a02 * a21 - a01 * a22
    adj[..., 0, 2] = a01 * a12 - a02 * a11
    adj[..., 1, 0] = a12 * a20 - a10 * a22
    adj[..., 1, 1] = a00 * a22 - a02 * a20
    adj[..., 1, 2] = a02 * a10 - a00 * a12
    adj[..., 2, 0] = a10 * a21 - a11 * a20
    adj[..., 2, 1] = a01 * a20 - a00 * a21
    adj[..., 2, 2] = a00 * a11 - a01 * a10
    det = a00 * adj[..., 0, 0] + a01 * adj[..., 1, 0] + a02 * adj[..., 2, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        return adj / det[..., None, None], det


def cond3(A, Ainv):
    """Frobenius condition number estimate used for singularity screening."""
    return np.linalg.norm(A, axis=(-2, -1)) * np.linalg.norm(Ainv, axis=(-2, -1))


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _bcast(f):
    return np.asarray(f, dtype=float)[..., None, None]


def _concentration(C1, C2, f1, f2):
    F1, F2 = _bcast(f1), _bcast(f2)
    C_hat = F2 * C1 + F1 * C2
    A = C_hat[..., NORMAL, NORMAL]
    B = C2[..., NORMAL, :].copy()
    B[..., IN_PLANE] -= C_hat[..., NORMAL, IN_PLANE]
    A_inv, _ = inv3(A)
    S = A_inv @ B
    s1 = np.broadcast_to(np.eye(6), S.shape[:-2] + (6, 6)).copy()
    s1[..., NORMAL, :] = S
    return s1, A, A_inv, S


def _pair_forward(C1, C2, f1, f2):
    """Batched block homogenization; returns ``(C, cache, cond)``."""
    s1, A, A_inv, S = _concentration(C1, C2, f1, f2)
    dC = C1 - C2
    C = _sym(C2 + _bcast(f1) * (dC @ s1))
    # a one-child block passes that child through exactly
    C = np.where(_bcast(f1) == 0.0, C2, C)
    C = np.where(_bcast(f2) == 0.0, C1, C)
    cache = dict(C1=C1, C2=C2, f1=np.asarray(f1, float), f2=np.asarray(f2, float),
                 s1=s1, A_inv=A_inv, S=S, dC=dC)
    return C, cache, cond3(A, A_inv)


def _pair_backward(gC, cache):
    """Reverse pass of :func:`_pair_forward`; returns ``(gC1, gC2, gf1, gf2)``."""
    C1, C2, s1, A_inv, S, dC = (cache[k] for k in ("C1", "C2", "s1", "A_inv", "S", "dC"))
    f1, f2 = cache["f1"], cache["f2"]
    F1, F2 = _bcast(f1), _bcast(f2)
    g = _sym(gC)
    gs1_term = g @ np.swapaxes(s1, -1, -2)
    gC1 = F1 * gs1_term
    gC2 = g - F1 * gs1_term
    gf1 = np.einsum("...ij,...ij->...", g, dC @ s1)
    gS = (F1 * (np.swapaxes(dC, -1, -2) @ g))[..., NORMAL, :]
    gB = np.swapaxes(A_inv, -1, -2) @ gS
    gA = -gB @ np.swapaxes(S, -1, -2)
    gC2[..., NORMAL, :] += gB
    g_hat = np.zeros_like(gC)
    g_hat[..., NORMAL, IN_PLANE] -= gB[..., IN_PLANE]
    g_hat[..., NORMAL, NORMAL] += gA
    gC1 += F2 * g_hat
    gC2 += F1 * g_hat
    gf2 = np.einsum("...ij,...ij->...", g_hat, C1)
    gf1 = gf1 + np.einsum("...ij,...ij->...", g_hat, C2)
    gC1 = np.where(F1 == 0.0, 0.0, gC1)
    gC2 = np.where(F2 == 0.0, 0.0, gC2)
    return gC1, gC2, gf1, gf2


def _check_fractions(f1, f2):
    if not (0.0 <= f1 <= 1.0 and 0.0 <= f2 <= 1.0) or abs(f1 + f2 - 1.0) > 1e-12:
        raise ValueError(f"volume fractions must be in [0, 1] and sum to 1, got ({f1}, {f2})")


def strain_concentration(C1, C2, f1: float, f2: float) -> np.ndarray:
    """Phase-1 strain concentration ``s1`` with ``eps1 = s1 @ eps``."""
    _check_fractions(f1, f2)
    s1, A, A_inv, _ = _concentration(np.asarray(C1, float), np.asarray(C2, float), f1, f2)
    if not cond3(A, A_inv) < COND_LIMIT:
        raise SingularInterfaceBlock("interface block C_hat[345, 345] is singular")
    return s1


def phase2_concentration(s1, f1: float, f2: float) -> np.ndarray:
    """Phase-2 concentration from the averaging rule ``f1 s1 + f2 s2 = I``."""
    return (np.eye(6) - f1 * np.asarray(s1)) / f2


def homogenize_pair(C1, C2, f1: float, f2: float) -> np.ndarray:
    """Intermediate (un-rotated) stiffness of a two-phase laminate block."""
    _check_fractions(f1, f2)
    C, _, cond = _pair_forward(np.asarray(C1, float), np.asarray(C2, float), f1, f2)
    if not cond < COND_LIMIT:
        raise SingularInterfaceBlock("interface block C_hat[345, 345] is singular")
    return C


@dataclass(frozen=True)
class BlockResult:
    C_intermediate: np.ndarray
    C_rotated: np.ndarray
    s1: np.ndarray
    f1: float
    f2: float


def evaluate_block(C1, C2, f1, f2, angles) -> BlockResult:
    """Homogenize then rotate one block, keeping all intermediate quantities."""
    C = homogenize_pair(C1, C2, f1, f2)
    s1 = strain_concentration(C1, C2, f1, f2)
    R = rotation_matrix(*angles)
    return BlockResult(C, R.T @ C @ R, s1, f1, f2)


def _layer_slice(layer):
    return slice(2 ** (layer - 1) - 1, 2 ** layer - 1)


def forward_batch(params: DmnParams, C_p1, C_p2, keep: bool = False):
    """Forward homogenization of a batch of phase pairs.

    Parameters
    ----------
    params : DmnParams
    C_p1, C_p2 : array_like, shape (B, 6, 6)
    keep : bool
        Also return the per-layer caches needed by :func:`backward_batch`.

    Returns
    -------
    C_dmn : numpy.ndarray, shape (B, 6, 6)
    tape : list or None
    """
    C_p1, C_p2 = np.asarray(C_p1, float), np.asarray(C_p2, float)
    weights = params.weights
    if weights.root <= 0.0:
        raise DegenerateNetwork("all leaf weights are zero")
    n_batch = C_p1.shape[0]
    X = np.empty((n_batch, params.n_leaves, 6, 6))
    X[:, 0::2] = C_p1[:, None]
    X[:, 1::2] = C_p2[:, None]
    tape = []
    for layer in range(params.depth, 0, -1):
        f1, f2, total = fractions_array(weights.layers[layer + 1])
        C, cache, cond = _pair_forward(X[:, 0::2], X[:, 1::2], f1, f2)
        bad = ~(cond < COND_LIMIT) & (total > 0.0)
        if np.any(bad):
            k = int(np.nonzero(np.any(bad, axis=0))[0][0]) + 1
            raise SingularInterfaceBlock("interface block C_hat[345, 345] is singular",
                                         address=(layer, k))
        ang = params.angles[_layer_slice(layer)]
        R = rotation_matrix(ang[:, 0], ang[:, 1], ang[:, 2])
        X = np.swapaxes(R, -1, -2) @ C @ R
        if keep:
            tape.append(dict(layer=layer, cache=cache, C=C, R=R, total=total, ang=ang))
    return X[:, 0], (tape if keep else None)


def backward_batch(params: DmnParams, tape, g_root):
    """Reverse sweep through a recorded forward pass.

    Parameters
    ----------
    g_root : array_like, shape (B, 6, 6)
        Gradient of the scalar objective with respect to ``C_dmn``.

    Returns
    -------
    gz, gangles : numpy.ndarray
        Gradients with respect to ``params.z`` and ``params.angles``
        (ReLU subgradient 0 at and below zero).
    """
    gX = np.asarray(g_root, float)[:, None]
    g_angles = np.zeros_like(params.angles)
    g_frac = {}
    for rec in reversed(tape):
        layer, cache, C, R = rec["layer"], rec["cache"], rec["C"], rec["R"]
        Rt = np.swapaxes(R, -1, -2)
        gC = R @ gX @ Rt
        gR = C @ R @ np.swapaxes(gX, -1, -2) + np.swapaxes(C, -1, -2) @ R @ gX
        gR = gR.sum(axis=0)
        ang = rec["ang"]
        _, dA, dB, dG = rotation_matrix_grad(ang[:, 0], ang[:, 1], ang[:, 2])
        g_angles[_layer_slice(layer)] = np.stack(
            [np.einsum("kij,kij->k", gR, d) for d in (dA, dB, dG)], axis=-1)
        gC1, gC2, gf1, gf2 = _pair_backward(gC, cache)
        gf1, gf2 = gf1.sum(axis=0), gf2.sum(axis=0)
        g_frac[layer] = gf1 - gf2  # f2 = 1 - f1
        n = gC1.shape[1]
        gX = np.empty((gC1.shape[0], 2 * n, 6, 6))
        gX[:, 0::2] = gC1
        gX[:, 1::2] = gC2
    weights = params.weights
    g_node = np.zeros(1)
    for layer in range(1, params.depth + 1):
        w = weights.layers[layer + 1]
        w1, w2 = w[0::2], w[1::2]
        total = w1 + w2
        scale = np.where(total > 0.0, g_frac[layer] / np.where(total > 0.0, total, 1.0) ** 2, 0.0)
        g_child = np.empty(w.shape)
        g_child[0::2] = g_node + scale * w2
        g_child[1::2] = g_node - scale * w1
        g_node = g_child
    gz = np.where(params.z > 0.0, g_node, 0.0)
    return gz, g_angles


def forward(params: DmnParams, C_p1, C_p2) -> np.ndarray:
    """Homogenized stiffness ``C_dmn`` for one phase pair (or a stacked batch)."""
    C_p1, C_p2 = np.asarray(C_p1, float), np.asarray(C_p2, float)
    single = C_p1.ndim == 2
    if single:
        C_p1, C_p2 = C_p1[None], C_p2[None]
    C, _ = forward_batch(params, C_p1, C_p2)
    return C[0] if single else C
