"""Mandel-notation tensor algebra.

Symmetric second-order tensors are stored as 6-vectors ordered
``(11, 22, 33, sqrt2*23, sqrt2*13, sqrt2*12)``; fourth-order tensors with
minor symmetries as 6x6 matrices in the same basis. With this scaling
rotations are orthogonal matrices and energies are plain dot products.

Rotations follow the Tait-Bryan composition ``R = X(alpha) Y(beta) Z(gamma)``
built from the in-plane block ``r_p`` and the out-of-plane block ``r_v``.
A stiffness in a block's local frame is mapped to its output frame by
``R^T C R``; strain vectors transform as ``eps_local = R eps_out``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPhysicalMaterial

SQRT2 = np.sqrt(2.0)

# Index triples (0-based) of the r_p / r_v blocks for the X, Y, Z rotations.
_X_P, _X_V = (1, 2, 3), (4, 5)
_Y_P, _Y_V = (0, 2, 4), (3, 5)
_Z_P, _Z_V = (0, 1, 5), (3, 4)

IN_PLANE = (0, 1, 5)
NORMAL = (2, 3, 4)

IDENTITY6 = np.eye(6)
HYDROSTATIC = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class IsotropicElastic:
    """Isotropic linear elastic constants.

    Parameters
    ----------
    E : float
        Young's modulus.
    nu : float
        Poisson ratio, strictly inside (-1, 0.5).
    """

    E: float
    nu: float

    def __post_init__(self):
        if not self.E > 0.0:
            raise NonPhysicalMaterial(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise NonPhysicalMaterial(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")

    @property
    def shear_modulus(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def bulk_modulus(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def lame(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))


def iso_stiffness(mat: IsotropicElastic) -> np.ndarray:
    """Mandel stiffness of an isotropic material.

    Shear diagonal entries are ``2G`` because of the sqrt(2) scaling.
    """
    if not isinstance(mat, IsotropicElastic):
        mat = IsotropicElastic(*mat)
    lam, mu = mat.lame, mat.shear_modulus
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[np.arange(6), np.arange(6)] += 2.0 * mu
    return C


def ortho_stiffness(E1, E2, E3, nu12, nu13, nu23, G12, G13, G23) -> np.ndarray:
    """Mandel stiffness of an orthotropic material from engineering constants."""
    S = np.zeros((6, 6))
    S[0, 0], S[1, 1], S[2, 2] = 1.0 / E1, 1.0 / E2, 1.0 / E3
    S[0, 1] = S[1, 0] = -nu12 / E1
    S[0, 2] = S[2, 0] = -nu13 / E1
    S[1, 2] = S[2, 1] = -nu23 / E2
    # Mandel shear compliance is 1/(2G)
    S[3, 3], S[4, 4], S[5, 5] = 0.5 / G23, 0.5 / G13, 0.5 / G12
    C = np.linalg.inv(S)
    return 0.5 * (C + C.T)


def to_tensor(v) -> np.ndarray:
    """Mandel 6-vector(s) to symmetric 3x3 tensor(s); supports leading batch dims."""
    v = np.asarray(v, dtype=float)
    T = np.empty(v.shape[:-1] + (3, 3))
    T[..., 0, 0], T[..., 1, 1], T[..., 2, 2] = v[..., 0], v[..., 1], v[..., 2]
    T[..., 1, 2] = T[..., 2, 1] = v[..., 3] / SQRT2
    T[..., 0, 2] = T[..., 2, 0] = v[..., 4] / SQRT2
    T[..., 0, 1] = T[..., 1, 0] = v[..., 5] / SQRT2
    return T


def from_tensor(T) -> np.ndarray:
    """Symmetric 3x3 tensor(s) to Mandel 6-vector(s)."""
    T = np.asarray(T, dtype=float)
    return np.stack(
        [T[..., 0, 0], T[..., 1, 1], T[..., 2, 2],
         SQRT2 * T[..., 1, 2], SQRT2 * T[..., 0, 2], SQRT2 * T[..., 0, 1]],
        axis=-1,
    )


# Voigt conversions exist for file boundaries only; internal code is Mandel.
_VOIGT_SCALE = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])


def mandel_to_voigt_stiffness(C) -> np.ndarray:
    """Mandel stiffness -> Voigt stiffness (engineering shear strains)."""
    return np.asarray(C) / np.outer(_VOIGT_SCALE, _VOIGT_SCALE)


def voigt_to_mandel_stiffness(C) -> np.ndarray:
    """Voigt stiffness (engineering shear strains) -> Mandel stiffness."""
    return np.asarray(C) * np.outer(_VOIGT_SCALE, _VOIGT_SCALE)


def _rp(theta):
    c, s = np.cos(theta), np.sin(theta)
    cs = SQRT2 * s * c
    z = np.empty(np.shape(theta) + (3, 3))
    z[..., 0, 0], z[..., 0, 1], z[..., 0, 2] = c * c, s * s, cs
    z[..., 1, 0], z[..., 1, 1], z[..., 1, 2] = s * s, c * c, -cs
    z[..., 2, 0], z[..., 2, 1], z[..., 2, 2] = -cs, cs, c * c - s * s
    return z


def _drp(theta):
    c, s = np.cos(theta), np.sin(theta)
    d = SQRT2 * (c * c - s * s)
    z = np.empty(np.shape(theta) + (3, 3))
    z[..., 0, 0], z[..., 0, 1], z[..., 0, 2] = -2 * s * c, 2 * s * c, d
    z[..., 1, 0], z[..., 1, 1], z[..., 1, 2] = 2 * s * c, -2 * s * c, -d
    z[..., 2, 0], z[..., 2, 1], z[..., 2, 2] = -d, d, -4 * s * c
    return z


def _rv(theta):
    c, s = np.cos(theta), np.sin(theta)
    z = np.empty(np.shape(theta) + (2, 2))
    z[..., 0, 0], z[..., 0, 1] = c, -s
    z[..., 1, 0], z[..., 1, 1] = s, c
    return z


def _drv(theta):
    c, s = np.cos(theta), np.sin(theta)
    z = np.empty(np.shape(theta) + (2, 2))
    z[..., 0, 0], z[..., 0, 1] = -s, -c
    z[..., 1, 0], z[..., 1, 1] = c, -s
    return z


def _place(p_idx, v_idx, rp, rv, fixed):
    shape = rp.shape[:-2]
    M = np.zeros(shape + (6, 6))
    M[..., fixed, fixed] = 1.0
    for a, i in enumerate(p_idx):
        for b, j in enumerate(p_idx):
            M[..., i, j] = rp[..., a, b]
    for a, i in enumerate(v_idx):
        for b, j in enumerate(v_idx):
            M[..., i, j] = rv[..., a, b]
    return M


def _elemental(alpha, beta, gamma, derivative=False):
    alpha, beta, gamma = np.asarray(alpha, float), np.asarray(beta, float), np.asarray(gamma, float)
    X = _place(_X_P, _X_V, _rp(alpha), _rv(alpha), 0)
    Y = _place(_Y_P, _Y_V, _rp(-beta), _rv(-beta), 1)
    Z = _place(_Z_P, _Z_V, _rp(gamma), _rv(gamma), 2)
    if not derivative:
        return X, Y, Z
    dX = _place(_X_P, _X_V, _drp(alpha), _drv(alpha), 0)
    dX[..., 0, 0] = 0.0
    dY = _place(_Y_P, _Y_V, -_drp(-beta), -_drv(-beta), 1)
    dY[..., 1, 1] = 0.0
    dZ = _place(_Z_P, _Z_V, _drp(gamma), _drv(gamma), 2)
    dZ[..., 2, 2] = 0.0
    return X, Y, Z, dX, dY, dZ


def rotation_matrix(alpha, beta, gamma) -> np.ndarray:
    """Mandel rotation ``X(alpha) @ Y(beta) @ Z(gamma)``.

    Angles may be scalars or equally shaped arrays; the result then has
    shape ``angles.shape + (6, 6)``.
    """
    X, Y, Z = _elemental(alpha, beta, gamma)
    return X @ Y @ Z


def rotation_matrix_grad(alpha, beta, gamma):
    """Rotation matrix and its partial derivatives with respect to each angle.

    Returns
    -------
    R, dR_dalpha, dR_dbeta, dR_dgamma : numpy.ndarray
    """
    X, Y, Z, dX, dY, dZ = _elemental(alpha, beta, gamma, derivative=True)
    YZ = Y @ Z
    XY = X @ Y
    return XY @ Z, dX @ YZ, X @ dY @ Z, XY @ dZ


def rotate_stiffness(C, alpha, beta, gamma) -> np.ndarray:
    """Map a local-frame stiffness to the rotated frame, ``R^T C R``."""
    R = rotation_matrix(alpha, beta, gamma)
    return np.swapaxes(R, -1, -2) @ np.asarray(C, float) @ R


def rotate_vec(v, alpha, beta, gamma, inverse=False) -> np.ndarray:
    """Apply ``R`` (or ``R^T`` when ``inverse``) to a Mandel vector."""
    R = rotation_matrix(alpha, beta, gamma)
    if inverse:
        R = np.swapaxes(R, -1, -2)
    return (R @ np.asarray(v, float)[..., None])[..., 0]


def is_symmetric(C, rtol=1e-12) -> bool:
    C = np.asarray(C)
    return bool(np.max(np.abs(C - C.T)) <= rtol * max(np.max(np.abs(C)), 1e-300))


def is_spd(C) -> bool:
    C = np.asarray(C)
    if not is_symmetric(C, 1e-10):
        return False
    return bool(np.min(np.linalg.eigvalsh(0.5 * (C + C.T))) > 0.0)


def display_angle(theta):
    """Reduce an angle to [0, 2pi) for output; stored angles stay unwrapped."""
    return np.mod(theta, 2.0 * np.pi)
