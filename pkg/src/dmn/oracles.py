"""Brute-force reference solutions.

Everything here is deliberately slow and self-contained: tensors are
handled as full 3x3 / 3x3x3x3 arrays, rotations as 3x3 matrices, and every
linear problem is assembled densely and handed to a pivoted LU solve. No
code is shared with the production Mandel, block, materials or online
modules; only the plain data containers of ``program`` are reused.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .program import LoadingProgram, MacroResponse, increment_targets

# Mandel slot -> tensor index pair, and the weight of that slot
_PAIRS = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]
_W = [1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)]


def vec_to_tensor(v) -> np.ndarray:
    T = np.zeros((3, 3))
    for m, (i, j) in enumerate(_PAIRS):
        T[i, j] = v[m] / _W[m]
        T[j, i] = v[m] / _W[m]
    return T


def tensor_to_vec(T) -> np.ndarray:
    return np.array([_W[m] * T[i, j] for m, (i, j) in enumerate(_PAIRS)])


def stiffness_to_tensor(C) -> np.ndarray:
    """6x6 Mandel stiffness to a 3x3x3x3 array with minor symmetries."""
    T = np.zeros((3, 3, 3, 3))
    for m, (i, j) in enumerate(_PAIRS):
        for n, (k, l) in enumerate(_PAIRS):
            val = C[m][n] / (_W[m] * _W[n])
            for a, b in ((i, j), (j, i)):
                for c, d in ((k, l), (l, k)):
                    T[a, b, c, d] = val
    return T


def tensor_to_stiffness(T) -> np.ndarray:
    C = np.zeros((6, 6))
    for m, (i, j) in enumerate(_PAIRS):
        for n, (k, l) in enumerate(_PAIRS):
            C[m, n] = _W[m] * _W[n] * T[i, j, k, l]
    return C


def tait_bryan(alpha, beta, gamma) -> np.ndarray:
    """3x3 change-of-basis matrix ``Q = Qx(alpha) Qy(beta) Qz(gamma)``.

    A tensor given in the rotated frame maps to the local block frame as
    ``T_local = Q T Q^T``.
    """
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    Qx = np.array([[1.0, 0.0, 0.0], [0.0, ca, sa], [0.0, -sa, ca]])
    Qy = np.array([[cb, 0.0, -sb], [0.0, 1.0, 0.0], [sb, 0.0, cb]])
    Qz = np.array([[cg, sg, 0.0], [-sg, cg, 0.0], [0.0, 0.0, 1.0]])
    return Qx @ Qy @ Qz


def mandel_rotation_oracle(Q) -> np.ndarray:
    """6x6 matrix of ``T -> Q T Q^T`` built column by column on basis tensors."""
    M = np.zeros((6, 6))
    for m in range(6):
        e = np.zeros(6)
        e[m] = 1.0
        T = vec_to_tensor(e)
        M[:, m] = tensor_to_vec(Q @ T @ Q.T)
    return M


def rotate_stiffness_tensor_oracle(C, Q) -> np.ndarray:
    """Rotate all four indices: ``C'_ijkl = Q_ip Q_jq Q_kr Q_ls C_pqrs``."""
    T = stiffness_to_tensor(C)
    R = np.zeros((3, 3, 3, 3))
    for i, j, k, l in itertools.product(range(3), repeat=4):
        acc = 0.0
        for p, q, r, s in itertools.product(range(3), repeat=4):
            w = Q[i, p] * Q[j, q] * Q[k, r] * Q[l, s]
            if w != 0.0:
                acc += w * T[p, q, r, s]
        R[i, j, k, l] = acc
    return tensor_to_stiffness(R)


@dataclass(frozen=True)
class LaminateSpec:
    """Two-phase laminate.

    ``phases`` is a list of ``(material, fraction)``. For the linear oracle
    the material is a 6x6 Mandel stiffness; for the incremental oracle it is
    either a stiffness or an object exposing ``elastic.E``, ``elastic.nu``,
    ``sigma_y0`` and ``H`` (J2 plasticity). The laminate normal is the local
    3-axis of the frame described by ``angles``; phase stiffnesses are
    given in the global frame.
    """

    phases: list
    angles: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.phases) != 2:
            raise ValueError("reference laminates have exactly two phases")
        f = [p[1] for p in self.phases]
        if min(f) <= 0.0 or abs(sum(f) - 1.0) > 1e-12:
            raise ValueError(f"fractions must be positive and sum to 1, got {f}")

    def frame(self):
        Q = tait_bryan(*self.angles)
        return Q[2], Q[0], Q[1]  # normal, tangent 1, tangent 2 in global coordinates


def _interface_rows(eps1, eps2, sig1, sig2, n, t1, t2):
    """Compatibility (tangential strain jump = 0) and traction continuity."""
    jump_e, jump_s = eps1 - eps2, sig1 - sig2
    compat = [t1 @ jump_e @ t1, t2 @ jump_e @ t2, t1 @ jump_e @ t2]
    return np.concatenate([compat, jump_s @ n])


def laminate_effective_stiffness(laminate: LaminateSpec) -> np.ndarray:
    """Effective stiffness from the dense 12-unknown interface problem."""
    (C1, f1), (C2, f2) = laminate.phases
    T1, T2 = stiffness_to_tensor(np.asarray(C1)), stiffness_to_tensor(np.asarray(C2))
    n, t1, t2 = laminate.frame()

    def equations(x, eps_bar):
        e1, e2 = vec_to_tensor(x[:6]), vec_to_tensor(x[6:])
        s1 = np.einsum("ijkl,kl->ij", T1, e1)
        s2 = np.einsum("ijkl,kl->ij", T2, e2)
        avg = tensor_to_vec(f1 * e1 + f2 * e2 - eps_bar)
        return np.concatenate([avg, _interface_rows(e1, e2, s1, s2, n, t1, t2)])

    zero = np.zeros((3, 3))
    # the system is linear: assemble its matrix from unit vectors
    A = np.column_stack([equations(np.eye(12)[c], zero) for c in range(12)])
    lu = scipy.linalg.lu_factor(A)
    C = np.zeros((6, 6))
    for col in range(6):
        e = np.zeros(6)
        e[col] = 1.0
        rhs = -equations(np.zeros(12), vec_to_tensor(e))
        x = scipy.linalg.lu_solve(lu, rhs)
        e1, e2 = vec_to_tensor(x[:6]), vec_to_tensor(x[6:])
        sig = f1 * np.einsum("ijkl,kl->ij", T1, e1) + f2 * np.einsum("ijkl,kl->ij", T2, e2)
        C[:, col] = tensor_to_vec(sig)
    return C


def _lame(E, nu):
    return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


def _j2_tensor_return(mat, eps, eps_p, p):
    """Closed-form radial return in full tensor notation.

    Returns ``(sigma, eps_p_new, p_new)``.
    """
    lam, mu = _lame(mat.elastic.E, mat.elastic.nu)
    ee = eps - eps_p
    sig = lam * np.trace(ee) * np.eye(3) + 2 * mu * ee
    s = sig - np.trace(sig) / 3 * np.eye(3)
    q = np.sqrt(1.5 * np.sum(s * s))
    f = q - (mat.sigma_y0 + mat.H * p)
    if f <= 0.0:
        return sig, eps_p, p
    dp = f / (3 * mu + mat.H)
    flow = 1.5 * s / q
    return sig - 2 * mu * dp * flow, eps_p + dp * flow, p + dp


def pointwise_j2_oracle(mat, strain_history):
    """Stress history of one J2 material point under a Mandel strain history.

    Each row of ``strain_history`` is a total strain; returns the matching
    Mandel stresses.
    """
    eps_p, p = np.zeros((3, 3)), 0.0
    out = []
    for e in np.atleast_2d(np.asarray(strain_history, float)):
        sig, eps_p, p = _j2_tensor_return(mat, vec_to_tensor(e), eps_p, p)
        out.append(tensor_to_vec(sig))
    return np.array(out)


class _OraclePhase:
    def __init__(self, law):
        self.law = law
        self.elastic = not hasattr(law, "sigma_y0")
        if self.elastic:
            self.T = stiffness_to_tensor(np.asarray(law, float))
        self.eps_p, self.p = np.zeros((3, 3)), 0.0

    def stress(self, eps):
        if self.elastic:
            return np.einsum("ijkl,kl->ij", self.T, eps), None
        sig, ep, p = _j2_tensor_return(self.law, eps, self.eps_p, self.p)
        return sig, (ep, p)

    def commit(self, state):
        if state is not None:
            self.eps_p, self.p = state


def laminate_incremental_response(laminate: LaminateSpec, program: LoadingProgram,
                                  tol: float = 1e-13, max_iter: int = 100) -> MacroResponse:
    """Incremental nonlinear laminate response under a mixed-control program.

    Unknowns per increment are both phase strains and the macro strain
    (18 values); equations are strain averaging, interface compatibility,
    traction continuity and the six control conditions. Each increment is
    solved by Newton's method with a forward-difference Jacobian.
    """
    (law1, f1), (law2, f2) = laminate.phases
    phases = [_OraclePhase(law1), _OraclePhase(law2)]
    n, t1, t2 = laminate.frame()
    x = np.zeros(18)
    eps_bar, sig_bar = np.zeros(6), np.zeros(6)
    out = MacroResponse()

    def residual(x, targets, mask, scale):
        e1, e2, eb = vec_to_tensor(x[:6]), vec_to_tensor(x[6:12]), x[12:]
        (s1, st1), (s2, st2) = phases[0].stress(e1), phases[1].stress(e2)
        sb = tensor_to_vec(f1 * s1 + f2 * s2)
        avg = tensor_to_vec(f1 * e1 + f2 * e2) - eb
        inter = _interface_rows(e1, e2, s1, s2, n, t1, t2)
        inter[3:] /= scale
        ctrl = np.where(mask, eb - targets, (sb - targets) / scale)
        return np.concatenate([avg, inter, ctrl]), sb, (st1, st2)

    for step, frac in program.increments():
        if frac == 1.0 / step.increments:
            eps_start, sig_start = eps_bar.copy(), sig_bar.copy()
        mask = step.strain_mask
        targets = increment_targets(step, frac, eps_start, sig_start)
        scale = max(np.max(np.abs(phases[0].T)) if phases[0].elastic else phases[0].law.elastic.E,
                    np.max(np.abs(phases[1].T)) if phases[1].elastic else phases[1].law.elastic.E)
        it = 0
        for it in range(1, max_iter + 1):
            r, sb, states = residual(x, targets, mask, scale)
            h = 1e-8 * max(1e-3, np.max(np.abs(x)))
            J = np.empty((18, 18))
            for c in range(18):
                xp = x.copy()
                xp[c] += h
                J[:, c] = (residual(xp, targets, mask, scale)[0] - r) / h
            dx = scipy.linalg.solve(J, -r)
            x = x + dx
            if np.max(np.abs(dx)) <= tol * max(1e-3, np.max(np.abs(x))):
                break
        else:
            raise RuntimeError("laminate oracle did not converge")
        r, sb, states = residual(x, targets, mask, scale)
        for ph, st in zip(phases, states):
            ph.commit(st)
        eps_bar, sig_bar = x[12:].copy(), sb
        out.append(eps_bar, sig_bar, it, float(np.max(np.abs(r))))
    return out
