"""Offline training on linear-elastic stiffness triplets.

The loss over a batch of ``n`` samples is

    total = 1/(2n) * sum_s ||C_dns - C_dmn||_F^2 / ||C_dns||_F^2
            + lambda * (sum_j relu(z_j) - S0)^2

and its gradient is obtained by one reverse sweep through the recorded
forward pass (see :func:`dmn.block.backward_batch`).
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .block import backward_batch, forward_batch
from .errors import DmnError, NonFinite
from .mandel import IsotropicElastic, iso_stiffness
from .network import DmnParams, leaf_weights, phase_volume_fractions

GRADIENT_MODES = ("adjoint", "finite-difference")


@dataclass(frozen=True)
class TrainingSample:
    C_p1: np.ndarray
    C_p2: np.ndarray
    C_dns: np.ndarray


class Dataset:
    """Stacked stiffness triplets, arrays of shape ``(n, 6, 6)``."""

    def __init__(self, C_p1, C_p2, C_dns, meta=None):
        self.C_p1 = np.asarray(C_p1, float).reshape(-1, 6, 6)
        self.C_p2 = np.asarray(C_p2, float).reshape(-1, 6, 6)
        self.C_dns = np.asarray(C_dns, float).reshape(-1, 6, 6)
        if not len(self.C_p1) == len(self.C_p2) == len(self.C_dns):
            raise ValueError("triplet arrays must have equal length")
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.C_p1)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return TrainingSample(self.C_p1[idx], self.C_p2[idx], self.C_dns[idx])
        return Dataset(self.C_p1[idx], self.C_p2[idx], self.C_dns[idx], self.meta)

    @classmethod
    def from_samples(cls, samples, meta=None):
        samples = list(samples)
        return cls([s.C_p1 for s in samples], [s.C_p2 for s in samples],
                   [s.C_dns for s in samples], meta)

    def to_jsonl(self) -> str:
        lines = []
        for a, b, c in zip(self.C_p1, self.C_p2, self.C_dns):
            lines.append(json.dumps({"C_p1": [float(x) for x in a.ravel()],
                                     "C_p2": [float(x) for x in b.ravel()],
                                     "C_dns": [float(x) for x in c.ravel()]}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Dataset":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows:
            raise ValueError("dataset is empty")
        return cls([r["C_p1"] for r in rows], [r["C_p2"] for r in rows], [r["C_dns"] for r in rows])


@dataclass
class TrainConfig:
    lr: float = 1.0
    lr_decay: float = 0.995
    batch_size: int = 16
    epochs: int = 500
    lambda_reg: float = 1e-3
    weight_target: float | None = None  # S0; default 2**(N-2)
    seed: int = 7
    gradient_mode: str = "adjoint"
    momentum: float = 0.0
    val_fraction: float = 0.1

    def __post_init__(self):
        if not self.lr >= 0.0:
            raise ValueError("lr must be non-negative")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.lambda_reg < 0.0:
            raise ValueError("lambda_reg must be non-negative")
        if self.weight_target is not None and not self.weight_target > 0.0:
            raise ValueError("weight_target must be positive")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def target(self, depth: int) -> float:
        return float(2.0 ** (depth - 2)) if self.weight_target is None else float(self.weight_target)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)   # mean L_stiff on the training split
    val_loss: list = field(default_factory=list)     # mean L_stiff on the validation split
    reg: list = field(default_factory=list)
    vf1: list = field(default_factory=list)
    best_val: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    best_epoch: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        rows = ["epoch,train_loss,val_loss,reg,vf1"]
        for i, (t, v, r, f) in enumerate(zip(self.train_loss, self.val_loss, self.reg, self.vf1)):
            rows.append(f"{i + 1},{t!r},{v!r},{r!r},{f!r}")
        return "\n".join(rows) + "\n"


def _stiff_terms(C_dmn, C_dns):
    diff = C_dns - C_dmn
    norm2 = np.sum(C_dns * C_dns, axis=(1, 2))
    return np.sum(diff * diff, axis=(1, 2)) / norm2, diff, norm2


def _reg(params, lam, S0):
    return lam * (float(np.sum(leaf_weights(params.z))) - S0) ** 2


def loss(params: DmnParams, batch: Dataset, lambda_reg: float = 0.0, weight_target=None):
    """Return ``(total, mean_L_stiff, reg)`` on ``batch``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    S0 = 2.0 ** (params.depth - 2) if weight_target is None else weight_target
    C, _ = forward_batch(params, batch.C_p1, batch.C_p2)
    terms, _, _ = _stiff_terms(C, batch.C_dns)
    _raise_nonfinite(terms)
    reg = _reg(params, lambda_reg, S0)
    return 0.5 * float(np.mean(terms)) + reg, float(np.mean(terms)), reg


def _raise_nonfinite(terms, epoch=None, offset=None):
    bad = ~np.isfinite(terms)
    if np.any(bad):
        k = int(np.nonzero(bad)[0][0])
        sample = k if offset is None else int(offset[k])
        raise NonFinite(f"non-finite loss for sample {sample}", epoch=epoch, sample=sample)


def gradient(params: DmnParams, batch: Dataset, lambda_reg: float = 0.0, weight_target=None,
             stiff_only: bool = False):
    """Exact gradient of :func:`loss` by reverse accumulation.

    Returns
    -------
    gz : numpy.ndarray, shape (2**N,)
    gangles : numpy.ndarray, shape (2**N - 1, 3)
    """
    S0 = 2.0 ** (params.depth - 2) if weight_target is None else weight_target
    C, tape = forward_batch(params, batch.C_p1, batch.C_p2, keep=True)
    terms, diff, norm2 = _stiff_terms(C, batch.C_dns)
    _raise_nonfinite(terms)
    n = len(batch)
    g_root = -diff / (n * norm2[:, None, None])  # d/dC of (1/2n) sum ||.||^2/||C_dns||^2
    gz, ga = backward_batch(params, tape, g_root)
    if not stiff_only and lambda_reg:
        excess = float(np.sum(leaf_weights(params.z))) - S0
        gz = gz + np.where(params.z > 0.0, 2.0 * lambda_reg * excess, 0.0)
    return gz, ga


def fd_gradient(params: DmnParams, batch: Dataset, lambda_reg: float = 0.0, weight_target=None,
                rel_step: float | None = None, order: int = 4):
    """Finite-difference gradient of :func:`loss`, flattened.

    ``order=2`` is a plain central difference (default step ``1e-6`` relative);
    ``order=4`` Richardson-extrapolates central differences at ``h`` and ``h/2``
    (default step ``1e-3`` relative), which keeps round-off well below the
    truncation error even when the loss is large compared to a gradient entry.
    """
    if order not in (2, 4):
        raise ValueError(f"order must be 2 or 4, got {order}")
    if rel_step is None:
        rel_step = 1e-6 if order == 2 else 1e-3
    theta = params.flat()

    def central(i, h):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        lp = loss(DmnParams.from_flat(params.depth, tp), batch, lambda_reg, weight_target)[0]
        lm = loss(DmnParams.from_flat(params.depth, tm), batch, lambda_reg, weight_target)[0]
        return (lp - lm) / (2.0 * h)

    g = np.empty_like(theta)
    for i in range(theta.size):
        h = rel_step * max(1.0, abs(theta[i]))
        g[i] = central(i, h) if order == 2 else (4.0 * central(i, 0.5 * h) - central(i, h)) / 3.0
    return g


def init_params(depth: int, seed: int, weight_target: float | None = None) -> DmnParams:
    """Random initial parameters with ``sum(relu(z))`` close to ``S0``."""
    rng = np.random.default_rng(seed)
    S0 = 2.0 ** (depth - 2) if weight_target is None else weight_target
    n = 2 ** depth
    z = rng.uniform(0.4, 0.6, n) * (S0 * 2.0 / n)
    angles = rng.uniform(-np.pi / 4, np.pi / 4, (n - 1, 3))
    return DmnParams(depth, z, angles)


def teacher_params(depth: int, rng) -> DmnParams:
    """Random reference network with well-populated leaves."""
    n = 2 ** depth
    z = rng.uniform(0.2, 1.0, n)
    angles = rng.uniform(-np.pi, np.pi, (n - 1, 3))
    return DmnParams(depth, z, angles)


def sample_phases(rng, n: int):
    """Isotropic phase pairs: ``log10(E1/E2) ~ U(-2, 2)``, ``E2 = 1``, ``nu ~ U(0.2, 0.45)``."""
    C1, C2 = np.empty((n, 6, 6)), np.empty((n, 6, 6))
    for s in range(n):
        E1 = 10.0 ** rng.uniform(-2.0, 2.0)
        nu1, nu2 = rng.uniform(0.2, 0.45, 2)
        C1[s] = iso_stiffness(IsotropicElastic(E1, nu1))
        C2[s] = iso_stiffness(IsotropicElastic(1.0, nu2))
    return C1, C2


def generate_dataset(kind: str, n_samples: int, depth: int = 4, seed: int = 0) -> Dataset:
    """Synthetic triplets labelled by a teacher network or the laminate oracle.

    The generating parameters are stored in ``dataset.meta``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "teacher":
        teacher = teacher_params(depth, rng)
        C1, C2 = sample_phases(rng, n_samples)
        C_dns, _ = forward_batch(teacher, C1, C2)
        meta = {"kind": kind, "seed": seed, "teacher": teacher.to_dict(),
                "vf": list(phase_volume_fractions(teacher))}
    elif kind in ("laminate", "laminate-oracle"):
        from .oracles import LaminateSpec, laminate_effective_stiffness

        angles = tuple(float(a) for a in rng.uniform(-np.pi, np.pi, 3))
        f1 = float(rng.uniform(0.2, 0.8))
        C1, C2 = sample_phases(rng, n_samples)
        C_dns = np.stack([laminate_effective_stiffness(LaminateSpec([(a, f1), (b, 1.0 - f1)], angles))
                          for a, b in zip(C1, C2)])
        meta = {"kind": "laminate", "seed": seed, "angles": list(angles), "vf": [f1, 1.0 - f1]}
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    C_dns = 0.5 * (C_dns + np.swapaxes(C_dns, -1, -2))
    return Dataset(C1, C2, C_dns, meta)


def split_dataset(dataset: Dataset, val_fraction: float, seed: int):
    """Seeded shuffle and split into ``(train, validation)``.

    A single-sample dataset is used for both roles.
    """
    n = len(dataset)
    if n < 2:
        return dataset, dataset
    perm = np.random.default_rng(seed).permutation(n)
    n_val = min(n - 1, max(1, int(round(val_fraction * n))))
    return dataset[np.sort(perm[n_val:])], dataset[np.sort(perm[:n_val])]


def _batch_grad(params, batch, cfg, S0):
    if cfg.gradient_mode == "adjoint":
        gz, ga = gradient(params, batch, cfg.lambda_reg, S0)
        return np.concatenate([gz, ga.ravel()])
    return fd_gradient(params, batch, cfg.lambda_reg, S0)


def train(params0: DmnParams, dataset: Dataset, config: TrainConfig | None = None, log=None):
    """Mini-batch SGD with per-epoch learning-rate decay and best-validation checkpointing.

    Returns
    -------
    best : DmnParams
    report : TrainReport
    """
    cfg = config or TrainConfig()
    S0 = cfg.target(params0.depth)
    train_set, val_set = split_dataset(dataset, cfg.val_fraction, cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    params = params0
    theta = params.flat()
    velocity = np.zeros_like(theta)
    lr = cfg.lr
    report = TrainReport()
    best, best_val = params, np.inf
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                g = _batch_grad(params, train_set[idx], cfg, S0)
            except NonFinite as exc:
                raise NonFinite(str(exc), epoch=epoch, sample=int(idx[exc.sample or 0])) from None
            except DmnError as exc:
                raise NonFinite(f"forward pass failed: {exc}", epoch=epoch) from None
            if not np.all(np.isfinite(g)):
                raise NonFinite("non-finite gradient", epoch=epoch, sample=int(idx[0]))
            if lr == 0.0:
                continue
            velocity = cfg.momentum * velocity + g
            theta = theta - lr * velocity
            params = DmnParams.from_flat(params.depth, theta)
        lr *= cfg.lr_decay
        try:
            _, tr, reg = loss(params, train_set, cfg.lambda_reg, S0)
            va = tr if val_set is train_set else loss(params, val_set, cfg.lambda_reg, S0)[1]
            vf1 = phase_volume_fractions(params)[0]
        except DmnError as exc:
            raise NonFinite(f"evaluation failed: {exc}", epoch=epoch) from None
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise NonFinite("non-finite epoch loss", epoch=epoch)
        if va < best_val:
            best, best_val, report.best_epoch = params, va, epoch
        report.train_loss.append(tr)
        report.val_loss.append(va)
        report.reg.append(reg)
        report.vf1.append(vf1)
        report.best_val.append(best_val)
        report.wall_time.append(time.perf_counter() - t0)
        if log is not None:
            log(epoch, tr, va, reg, vf1)
    return best, report
