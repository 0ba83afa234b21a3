"""Leaf constitutive laws for online prediction.

Small-strain laws in Mandel notation. Every update starts from the last
committed state and receives the *total* strain increment of the current
load increment, so repeated fixed-point iterations never accumulate.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .mandel import HYDROSTATIC, IsotropicElastic, iso_stiffness

_P_DEV = np.eye(6) - np.outer(HYDROSTATIC, HYDROSTATIC) / 3.0
_ZERO6 = np.zeros(6)


@dataclass(frozen=True)
class MaterialState:
    eps: np.ndarray = field(default_factory=lambda: _ZERO6.copy())
    sig: np.ndarray = field(default_factory=lambda: _ZERO6.copy())
    eps_p: np.ndarray = field(default_factory=lambda: _ZERO6.copy())
    p_acc: float = 0.0


@dataclass(frozen=True)
class J2Params:
    """Von Mises plasticity with linear isotropic hardening."""

    elastic: IsotropicElastic
    sigma_y0: float
    H: float = 0.0

    def __post_init__(self):
        if not self.sigma_y0 > 0.0:
            raise ValueError(f"sigma_y0 must be positive, got {self.sigma_y0}")
        if not self.H >= 0.0:
            raise ValueError(f"hardening modulus must be non-negative, got {self.H}")


def elastic_update(C, d_eps, state: MaterialState):
    """Linear elastic update; returns ``(d_sig, tangent, new_state)``."""
    C = np.asarray(C, float)
    d_eps = np.asarray(d_eps, float)
    d_sig = C @ d_eps
    new = replace(state, eps=state.eps + d_eps, sig=state.sig + d_sig)
    return d_sig, C, new


def j2_update(mat: J2Params, d_eps, state: MaterialState):
    """Elastic predictor / radial return with the consistent tangent.

    Returns ``(d_sig, tangent, new_state)``.
    """
    G, K = mat.elastic.shear_modulus, mat.elastic.bulk_modulus
    C_e = iso_stiffness(mat.elastic)
    eps = state.eps + np.asarray(d_eps, float)
    sig_trial = C_e @ (eps - state.eps_p)
    s = _P_DEV @ sig_trial
    s_norm = np.linalg.norm(s)
    q_trial = np.sqrt(1.5) * s_norm
    f = q_trial - (mat.sigma_y0 + mat.H * state.p_acc)
    if f <= 0.0:
        new = replace(state, eps=eps, sig=sig_trial)
        return sig_trial - state.sig, C_e, new
    dp = f / (3.0 * G + mat.H)
    n = s / s_norm
    d_eps_p = np.sqrt(1.5) * dp * n
    sig = sig_trial - 2.0 * G * d_eps_p
    theta = 1.0 - 3.0 * G * dp / q_trial
    theta_bar = 3.0 * G / (3.0 * G + mat.H) - (1.0 - theta)
    tangent = (K * np.outer(HYDROSTATIC, HYDROSTATIC) + 2.0 * G * theta * _P_DEV
               - 2.0 * G * theta_bar * np.outer(n, n))
    new = MaterialState(eps=eps, sig=sig, eps_p=state.eps_p + d_eps_p, p_acc=state.p_acc + dp)
    return sig - state.sig, 0.5 * (tangent + tangent.T), new


def von_mises(sig) -> float:
    return float(np.sqrt(1.5) * np.linalg.norm(_P_DEV @ np.asarray(sig, float)))


class LinearElastic:
    """Elastic leaf law with a fixed Mandel stiffness."""

    kind = "elastic"

    def __init__(self, C):
        self.C = np.array(C, dtype=float).reshape(6, 6)

    @classmethod
    def isotropic(cls, E, nu):
        return cls(iso_stiffness(IsotropicElastic(E, nu)))

    def update(self, d_eps, state):
        return elastic_update(self.C, d_eps, state)

    @property
    def stiffness(self):
        return self.C


class J2Plasticity:
    """J2 leaf law wrapping :func:`j2_update`."""

    kind = "j2"

    def __init__(self, params: J2Params):
        self.params = params

    @classmethod
    def from_constants(cls, E, nu, sigma_y0, H=0.0):
        return cls(J2Params(IsotropicElastic(E, nu), sigma_y0, H))

    def update(self, d_eps, state):
        return j2_update(self.params, d_eps, state)

    @property
    def stiffness(self):
        return iso_stiffness(self.params.elastic)


def material_from_dict(d: dict):
    """Build a leaf law from ``{"type": "elastic"|"j2", ...}``.

    Elastic laws take either ``E``/``nu`` or a 36-entry Mandel ``C``.
    """
    kind = d.get("type")
    if kind == "elastic":
        if "C" in d:
            return LinearElastic(d["C"])
        return LinearElastic.isotropic(float(d["E"]), float(d["nu"]))
    if kind == "j2":
        return J2Plasticity.from_constants(float(d["E"]), float(d["nu"]),
                                           float(d["sigma_y0"]), float(d.get("H", 0.0)))
    raise ValueError(f"unknown material type {kind!r}")


def material_to_dict(m) -> dict:
    if isinstance(m, J2Plasticity):
        p = m.params
        return {"type": "j2", "E": p.elastic.E, "nu": p.elastic.nu,
                "sigma_y0": p.sigma_y0, "H": p.H}
    return {"type": "elastic", "C": [float(x) for x in m.C.ravel()]}


class MaterialMap:
    """Binds leaves to laws by phase parity, with optional per-leaf overrides.

    Leaf positions are 0-based in the API: even positions (odd 1-based
    index) are phase 1. Override keys in the JSON form are 1-based leaf
    indices.
    """

    def __init__(self, phase1, phase2, overrides=None):
        self.phase1, self.phase2 = phase1, phase2
        self.overrides = dict(overrides or {})

    def for_leaf(self, leaf: int):
        if leaf in self.overrides:
            return self.overrides[leaf]
        return self.phase1 if leaf % 2 == 0 else self.phase2

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialMap":
        overrides = {int(k) - 1: material_from_dict(v) for k, v in d.get("overrides", {}).items()}
        return cls(material_from_dict(d["phase1"]), material_from_dict(d["phase2"]), overrides)

    def to_dict(self) -> dict:
        d = {"phase1": material_to_dict(self.phase1), "phase2": material_to_dict(self.phase2)}
        if self.overrides:
            d["overrides"] = {str(k + 1): material_to_dict(v) for k, v in sorted(self.overrides.items())}
        return d
