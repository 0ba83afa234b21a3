"""Oracle-agreement suites behind ``dmn verify``.

Each suite returns a list of :class:`Check` rows. Sample counts are kept
small enough for an interactive run; the test suite exercises the same
comparisons at larger sizes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracles
from .block import forward, homogenize_pair
from .mandel import IsotropicElastic, iso_stiffness, rotate_stiffness, rotation_matrix
from .materials import J2Plasticity, LinearElastic, MaterialMap
from .network import DmnParams
from .online import OnlinePredictor
from .program import LoadingProgram
from .training import fd_gradient, gradient, sample_phases

SUITES = ("mandel", "block", "gradient", "online")


@dataclass
class Check:
    suite: str
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.threshold)


def random_spd(rng, scale=1.0):
    A = rng.normal(size=(6, 6))
    return scale * (A @ A.T / 6.0 + 0.5 * np.eye(6))


def random_params(rng, depth, z_low=0.1):
    n = 2 ** depth
    return DmnParams(depth, rng.uniform(z_low, 1.0, n), rng.uniform(-np.pi, np.pi, (n - 1, 3)))


def suite_mandel(n=200, seed=0):
    rng = np.random.default_rng(seed)
    err_r = err_c = orth = 0.0
    for _ in range(n):
        a, b, g = rng.uniform(-np.pi, np.pi, 3)
        R = rotation_matrix(a, b, g)
        Q = oracles.tait_bryan(a, b, g)
        err_r = max(err_r, np.max(np.abs(R - oracles.mandel_rotation_oracle(Q))))
        C = random_spd(rng)
        ref = oracles.rotate_stiffness_tensor_oracle(C, Q.T)
        err_c = max(err_c, np.max(np.abs(rotate_stiffness(C, a, b, g) - ref)))
        orth = max(orth, np.max(np.abs(R.T @ R - np.eye(6))))
    return [Check("mandel", "rotation matrix vs tensor oracle", err_r, 1e-10),
            Check("mandel", "stiffness rotation vs 4th-order oracle", err_c, 1e-10),
            Check("mandel", "orthogonality |R^T R - I|", orth, 1e-12)]


def suite_block(n=100, seed=1):
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(n):
        C1, C2 = random_spd(rng, 10.0 ** rng.uniform(-1, 1)), random_spd(rng)
        f1 = rng.uniform(0.05, 0.95)
        ref = oracles.laminate_effective_stiffness(oracles.LaminateSpec([(C1, f1), (C2, 1 - f1)]))
        got = homogenize_pair(C1, C2, f1, 1 - f1)
        err = max(err, np.linalg.norm(got - ref) / np.linalg.norm(ref))
    return [Check("block", "homogenize_pair vs laminate oracle (rel. Frobenius)", err, 1e-9)]


def _grad_rel_error(params, batch, lam):
    gz, ga = gradient(params, batch, lam)
    g = np.concatenate([gz, ga.ravel()])
    g_fd = fd_gradient(params, batch, lam)
    mask = np.abs(g) > 1e-10
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(g[mask] - g_fd[mask]) / np.maximum(np.abs(g[mask]), np.abs(g_fd[mask]))))


def suite_gradient(depth=4, seed=2):
    from .training import Dataset

    rng = np.random.default_rng(seed)
    params = random_params(rng, depth, z_low=0.2)
    C1, C2 = sample_phases(rng, 4)
    target = random_params(rng, depth)
    C_dns = forward(target, C1, C2)
    err = _grad_rel_error(params, Dataset(C1, C2, C_dns), 1e-2)
    return [Check("gradient", f"adjoint vs central FD, depth {depth}", err, 1e-6)]


def suite_online(seed=3):
    rng = np.random.default_rng(seed)
    checks = []
    # linear leaves: online tangent equals the offline forward pass
    params = random_params(rng, 4)
    C1 = iso_stiffness(IsotropicElastic(20.0, 0.3))
    C2 = iso_stiffness(IsotropicElastic(1.0, 0.25))
    pred = OnlinePredictor(params, MaterialMap(LinearElastic(C1), LinearElastic(C2)))
    C_on = pred.tangent()
    C_off = forward(params, C1, C2)
    checks.append(Check("online", "linear tangent vs forward (rel.)",
                        np.max(np.abs(C_on - C_off)) / np.max(np.abs(C_off)), 1e-12))
    # depth 1, J2 + elastic, against the incremental laminate oracle
    angles = rng.uniform(-np.pi, np.pi, 3)
    p1 = DmnParams(1, [0.6, 0.4], [angles])
    j2 = J2Plasticity.from_constants(10.0, 0.3, 0.02, 0.5)
    prog = LoadingProgram.uniaxial_strain(0.02, 20)
    got = OnlinePredictor(p1, MaterialMap(j2, LinearElastic(C2))).run(prog).stress_array()
    ref = oracles.laminate_incremental_response(
        oracles.LaminateSpec([(j2.params, 0.6), (C2, 0.4)], tuple(angles)), prog).stress_array()
    rel = np.max(np.linalg.norm(got - ref, axis=1) / np.linalg.norm(ref, axis=1))
    checks.append(Check("online", "depth-1 J2 laminate vs incremental oracle", rel, 1e-6))
    # single active leaf against the pointwise J2 oracle
    p0 = DmnParams(1, [1.0, 0.0], [angles])
    got = OnlinePredictor(p0, MaterialMap(j2, LinearElastic(C2))).run(prog).stress_array()
    strain = np.outer(np.linspace(0.001, 0.02, 20), np.eye(6)[0])
    ref = oracles.pointwise_j2_oracle(j2.params, strain)
    checks.append(Check("online", "single-leaf J2 vs pointwise oracle",
                        np.max(np.abs(got - ref)) / np.max(np.abs(ref)), 1e-10))
    return checks


_RUNNERS = {"mandel": suite_mandel, "block": suite_block, "gradient": suite_gradient,
            "online": suite_online}


def run_suites(name: str = "all"):
    names = SUITES if name == "all" else (name,)
    checks = []
    for s in names:
        checks.extend(_RUNNERS[s]())
    return checks


def format_table(checks) -> str:
    w = max(len(c.name) for c in checks)
    lines = [f"{'suite':<9} {'check':<{w}} {'value':>11} {'limit':>9}  result"]
    for c in checks:
        lines.append(f"{c.suite:<9} {c.name:<{w}} {c.value:11.3e} {c.threshold:9.1e}  "
                     f"{'PASS' if c.passed else 'FAIL'}")
    return "\n".join(lines)
