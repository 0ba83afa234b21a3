"""Macroscopic loading programs and response records shared by the online
solver and the nonlinear oracles."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

CONTROLS = ("strain", "stress")


@dataclass(frozen=True)
class LoadStep:
    """One program step: per-component control and end-of-step targets.

    ``targets[i]`` is the macro strain (Mandel) at the end of the step where
    ``control[i] == "strain"`` and the macro stress where it is ``"stress"``.
    The step is applied in ``increments`` equal sub-increments starting
    from the state reached by the previous step.
    """

    control: tuple[str, ...]
    targets: np.ndarray
    increments: int = 1

    def __post_init__(self):
        control = tuple(self.control)
        if len(control) != 6 or any(c not in CONTROLS for c in control):
            raise ValueError(f"control must be six entries from {CONTROLS}, got {control}")
        targets = np.array(self.targets, dtype=float).reshape(-1)
        if targets.shape != (6,) or not np.all(np.isfinite(targets)):
            raise ValueError("targets must be six finite numbers")
        if int(self.increments) != self.increments or self.increments < 1:
            raise ValueError(f"increments must be a positive integer, got {self.increments}")
        targets.setflags(write=False)
        object.__setattr__(self, "control", control)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "increments", int(self.increments))

    @property
    def strain_mask(self) -> np.ndarray:
        return np.array([c == "strain" for c in self.control])


@dataclass(frozen=True)
class LoadingProgram:
    steps: tuple[LoadStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValueError("a loading program needs at least one step")

    @property
    def n_increments(self) -> int:
        return sum(s.increments for s in self.steps)

    def increments(self):
        """Yield ``(step, fraction_of_step)`` for every increment in order."""
        for step in self.steps:
            for k in range(1, step.increments + 1):
                yield step, k / step.increments

    def to_dict(self) -> dict:
        return {"steps": [{"control": list(s.control), "targets": [float(t) for t in s.targets],
                           "increments": s.increments} for s in self.steps]}

    @classmethod
    def from_dict(cls, d: dict) -> "LoadingProgram":
        return cls(tuple(LoadStep(s["control"], s["targets"], s.get("increments", 1))
                         for s in d["steps"]))

    @classmethod
    def from_json(cls, text: str) -> "LoadingProgram":
        return cls.from_dict(json.loads(text))

    @classmethod
    def uniaxial_strain(cls, eps11: float, increments: int, component: int = 0) -> "LoadingProgram":
        """Ramp one strain component with the other five strains held at zero."""
        t = np.zeros(6)
        t[component] = eps11
        return cls((LoadStep(("strain",) * 6, t, increments),))

    @classmethod
    def uniaxial_stress(cls, eps11: float, increments: int) -> "LoadingProgram":
        """Ramp the 11 strain with all other stress components held at zero."""
        t = np.zeros(6)
        t[0] = eps11
        return cls((LoadStep(("strain",) + ("stress",) * 5, t, increments),))


def increment_targets(step: LoadStep, frac: float, eps_start, sig_start):
    """Absolute controlled values after ``frac`` of ``step`` (linear ramp)."""
    start = np.where(step.strain_mask, eps_start, sig_start)
    return start + frac * (step.targets - start)


@dataclass
class MacroResponse:
    """Per-increment macroscopic history."""

    strain: list = field(default_factory=list)
    stress: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    p_acc_max: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    converged: bool = True

    def append(self, eps, sig, iters=0, res=0.0, p_max=0.0, dissipation=0.0):
        self.strain.append(np.array(eps, dtype=float))
        self.stress.append(np.array(sig, dtype=float))
        self.iterations.append(int(iters))
        self.residual.append(float(res))
        self.p_acc_max.append(float(p_max))
        self.dissipation.append(float(dissipation))

    def __len__(self):
        return len(self.strain)

    def strain_array(self) -> np.ndarray:
        return np.array(self.strain).reshape(-1, 6)

    def stress_array(self) -> np.ndarray:
        return np.array(self.stress).reshape(-1, 6)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "increments": [
                {"increment": i + 1, "eps": [float(x) for x in e], "sig": [float(x) for x in s],
                 "iters": it, "resnorm": r, "p_acc_max": p, "dissipation": d}
                for i, (e, s, it, r, p, d) in enumerate(zip(
                    self.strain, self.stress, self.iterations, self.residual,
                    self.p_acc_max, self.dissipation))
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["increment"] + [f"eps_{i}" for i in range(1, 7)]
                   + [f"sig_{i}" for i in range(1, 7)] + ["iters", "resnorm"])
        for i, (e, s, it, r) in enumerate(zip(self.strain, self.stress, self.iterations, self.residual)):
            w.writerow([i + 1] + [repr(float(x)) for x in e] + [repr(float(x)) for x in s]
                       + [it, repr(r)])
        return buf.getvalue()
