"""Experiment configuration: flat ``key = value`` files with dotted keys.

Every key has a default (the AMBER-style setting); a file only lists the
keys it changes. Unknown keys are rejected so typos cannot silently fall
back to defaults.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .hlip import HlipParams
from .plant import PlantConfig
from .sets import BoxSet
from .textio import dumps_kv, loads_kv

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "plant.z0": 0.7,
    "plant.T": 0.4,
    "plant.m": 40.0,
    "plant.g": 9.81,
    "plant.kp_z": 400.0,
    "plant.kd_z": 40.0,
    "plant.bezier_degree": 5,
    "plant.impact_loss": 0.97,
    "plant.substeps": 400,
    "plant.nl_eps": 0.02,
    "gait.v_d": 1.0,
    "sets.u": [-0.7, 0.7],
    "sets.x_lo": [-0.4, -0.5],
    "sets.x_hi": [0.8, 2.5],
    "sets.s0": "auto",
    "push.f_max": 50.0,
    "push.direction": "positive",
    "push.n_push": 8,
    "push.steps": [10],
    "push.force": None,
    "sls.nf": 4,
    "sls.q": [1.0, 1.0],
    "sls.r": 1.0,
    "sls.tail": 1,
    "sls.s0_inflation": 0.05,
    "sls.s0_growth": 1.5,
    "sls.s0_max_factor": 200.0,
    "learn.v_min": -1.0,
    "learn.v_max": 1.0,
    "learn.n_v": 9,
    "learn.steps": 30,
    "learn.dither": 0.03,
    "learn.holdout": 0.2,
    "lqr.q": [1.0, 1.0],
    "lqr.r": 1.0,
    "episode.steps": 24,
}

PUSH_DIRECTIONS = ("positive", "negative", "both")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __post_init__(self):
        unknown = sorted(set(self.values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        self.values = {**DEFAULTS, **self.values}
        self._validate()

    def __getitem__(self, key: str):
        return self.values[key]

    # --- construction --------------------------------------------------------

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        return cls(loads_kv(text, source))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), str(path))

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with changes; keyword names use ``__`` for dots (``push__f_max``)."""
        vals = dict(self.values)
        for k, v in changes.items():
            vals[k.replace("__", ".")] = v
        return ExperimentConfig(vals)

    def to_text(self) -> str:
        return dumps_kv({k: self.values[k] for k in sorted(self.values)})

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    # --- typed views ---------------------------------------------------------

    def plant(self) -> PlantConfig:
        v = self.values
        return PlantConfig(
            z0=float(v["plant.z0"]), T=float(v["plant.T"]), m=float(v["plant.m"]), g=float(v["plant.g"]),
            kp_z=float(v["plant.kp_z"]), kd_z=float(v["plant.kd_z"]),
            bezier_degree=int(v["plant.bezier_degree"]), impact_loss=float(v["plant.impact_loss"]),
            dt=float(v["plant.T"]) / int(v["plant.substeps"]), nl_eps=float(v["plant.nl_eps"]),
        )

    def hlip(self) -> HlipParams:
        return HlipParams(z0=float(self["plant.z0"]), T=float(self["plant.T"]), m=float(self["plant.m"]),
                          g=float(self["plant.g"]))

    @property
    def v_d(self) -> float:
        return float(self["gait.v_d"])

    @property
    def U(self) -> BoxSet:
        lo, hi = self["sets.u"]
        return BoxSet([lo], [hi])

    @property
    def X(self) -> BoxSet:
        return BoxSet(self["sets.x_lo"], self["sets.x_hi"])

    @property
    def nf(self) -> int:
        return int(self["sls.nf"])

    @property
    def n_push(self) -> int:
        return int(self["push.n_push"])

    @property
    def weights(self) -> tuple:
        return (tuple(float(q) for q in self["sls.q"]), float(self["sls.r"]))

    @property
    def push_force(self) -> float:
        f = self["push.force"]
        return float(self["push.f_max"] if f is None else f)

    def push_schedule(self, force: float | None = None) -> list[tuple[int, float]]:
        F = self.push_force if force is None else float(force)
        return [(int(k), F) for k in self["push.steps"]]

    def velocity_grid(self) -> np.ndarray:
        return np.linspace(float(self["learn.v_min"]), float(self["learn.v_max"]), int(self["learn.n_v"]))

    # --- checks --------------------------------------------------------------

    def _validate(self) -> None:
        v = self.values
        if self.nf > self.n_push:
            raise ConfigError(f"sls.nf={self.nf} must not exceed push.n_push={self.n_push}")
        if self.nf < 2:
            raise ConfigError("sls.nf must be at least 2")
        if float(v["push.f_max"]) < 0:
            raise ConfigError("push.f_max must be nonnegative")
        if v["push.direction"] not in PUSH_DIRECTIONS:
            raise ConfigError(f"push.direction must be one of {PUSH_DIRECTIONS}")
        if v["push.force"] is not None and abs(float(v["push.force"])) > float(v["push.f_max"]) + 1e-12:
            raise ConfigError("push.force exceeds push.f_max")
        steps = sorted(int(k) for k in v["push.steps"])
        if steps and steps[0] < self.nf:
            raise ConfigError(f"first push must come after at least sls.nf={self.nf} settling steps")
        if any(b - a < self.n_push for a, b in zip(steps, steps[1:])):
            raise ConfigError("pushes closer than push.n_push steps")
        if steps and steps[-1] >= int(v["episode.steps"]):
            raise ConfigError("a push is scheduled after the episode ends")
        s0 = v["sets.s0"]
        if s0 != "auto" and not (isinstance(s0, (list, tuple)) and len(s0) == 2):
            raise ConfigError("sets.s0 must be 'auto' or [[lo_p, lo_v], [hi_p, hi_v]]")
        if not (0.0 <= float(v["learn.holdout"]) < 1.0):
            raise ConfigError("learn.holdout must lie in [0, 1)")
        if float(v["sls.s0_growth"]) <= 1.0:
            raise ConfigError("sls.s0_growth must exceed 1")
        try:
            self.plant()
            self.hlip()
            self.U
            self.X
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


AMBER_STYLE: dict = {}

CASSIE_STYLE: dict = {
    "plant.z0": 0.9,
    "plant.T": 0.35,
    "plant.m": 36.0,
    "gait.v_d": 0.0,
    "sets.x_lo": [-0.5, -1.5],
    "sets.x_hi": [0.5, 1.5],
    "push.f_max": 120.0,
}
