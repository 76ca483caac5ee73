"""Synthetic planar walker used as ground truth.

A point-mass pendulum on a massless telescoping stance leg. The height is
regulated by a PD law that is deliberately imperfect (a phase-locked
excitation plus a velocity-dependent vertical kick at every foot strike),
so the true step-to-step map is smooth, nonlinear and close to the H-LIP.
The swing foot follows a Bezier blend towards the commanded step size and
lands exactly at the end of each fixed-duration step.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from math import comb, isfinite, pi, sin
from typing import Callable, Optional, Sequence

import numpy as np

from .hlip import DiscreteState, HlipParams


class SwingPhaseClamped(UserWarning):
    pass


class PlantFall(RuntimeError):
    pass


class PushScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class PlantConfig:
    z0: float = 0.7
    T: float = 0.4
    m: float = 40.0
    g: float = 9.81
    kp_z: float = 400.0
    kd_z: float = 40.0
    bezier_degree: int = 5
    impact_loss: float = 0.97
    dt: Optional[float] = None  # defaults to T / 400
    nl_eps: float = 0.02
    perfect_height: bool = False
    swing_tol: float = 1e-6

    def __post_init__(self):
        if self.dt is None:
            object.__setattr__(self, "dt", self.T / 400.0)
        if not (0 < self.dt <= self.T / 10 + 1e-15):
            raise ValueError(f"dt must lie in (0, T/10], got {self.dt}")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError("T must be an integer multiple of dt")
        if not (0 < self.impact_loss <= 1):
            raise ValueError("impact_loss must lie in (0, 1]")
        if self.bezier_degree < 3:
            raise ValueError("bezier_degree must be >= 3")
        if self.z0 <= 0 or self.T <= 0 or self.m <= 0 or self.g <= 0:
            raise ValueError("z0, T, m and g must be positive")

    @property
    def n_substeps(self) -> int:
        return round(self.T / self.dt)

    def hlip(self) -> HlipParams:
        return HlipParams(z0=self.z0, T=self.T, m=self.m, g=self.g)


@dataclass(frozen=True)
class PlantState:
    x: float
    z: float
    vx: float
    vz: float
    swing_x: float
    t_phase: float
    stance_world_x: float = 0.0

    @classmethod
    def standstill(cls, cfg: PlantConfig) -> "PlantState":
        return cls(x=0.0, z=cfg.z0, vx=0.0, vz=0.0, swing_x=0.0, t_phase=0.0)


@dataclass(frozen=True)
class StepRecord:
    k: int
    x_pre: DiscreteState
    u_cmd: float
    u_real: float
    F_push: float
    duration: float


@dataclass
class StepTrace:
    """Per-substep samples of one step (time since episode start)."""

    t: np.ndarray
    x: np.ndarray
    vx: np.ndarray
    z: np.ndarray
    swing_x: np.ndarray


@dataclass
class PlantEpisode:
    records: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    fell: bool = False
    fall_reason: str = ""


# --- swing foot ----------------------------------------------------------------


def _bezier_coeffs(degree: int) -> np.ndarray:
    i = np.arange(degree + 1)
    half = degree / 2.0
    return np.where(i < half, 0.0, np.where(i > half, 1.0, 0.5))


def bezier_transition(t: float, T: float, degree: int = 5) -> float:
    """Smooth 0 -> 1 blend over ``[0, T]`` with zero slope at both ends."""
    if t < -1e-12 or t > T + 1e-12:
        warnings.warn(f"swing phase {t} outside [0, {T}], clamped", SwingPhaseClamped, stacklevel=2)
    s = min(max(t / T, 0.0), 1.0)
    b = _bezier_coeffs(degree)
    n = degree
    return float(sum(b[i] * comb(n, i) * s**i * (1.0 - s) ** (n - i) for i in range(n + 1)))


def desired_swing_x(x_sw_plus: float, u: float, t: float, cfg: PlantConfig) -> float:
    c = bezier_transition(t, cfg.T, cfg.bezier_degree)
    return (1.0 - c) * x_sw_plus + c * u


# --- dynamics ------------------------------------------------------------------


def _deriv(y, t: float, F: float, cfg: PlantConfig) -> tuple:
    x, z, vx, vz = y
    if cfg.perfect_height:
        return (vx, 0.0, x * cfg.g / cfg.z0 + F / cfg.m, 0.0)
    az = cfg.kp_z * (cfg.z0 - z) - cfg.kd_z * vz + cfg.nl_eps * cfg.g * sin(2.0 * pi * t / cfg.T)
    ax = (x / z) * (az + cfg.g) + F / cfg.m
    return (vx, vz, ax, az)


def _rk4(y, t, h, F, cfg) -> tuple:
    # plain floats: this is the inner loop of every simulation
    k1 = _deriv(y, t, F, cfg)
    k2 = _deriv(tuple(a + 0.5 * h * b for a, b in zip(y, k1)), t + 0.5 * h, F, cfg)
    k3 = _deriv(tuple(a + 0.5 * h * b for a, b in zip(y, k2)), t + 0.5 * h, F, cfg)
    k4 = _deriv(tuple(a + h * b for a, b in zip(y, k3)), t + h, F, cfg)
    return tuple(a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def impact_map(s: PlantState, u_real: float, cfg: PlantConfig) -> PlantState:
    """Foot strike: the swing foot becomes the stance foot ``u_real`` ahead."""
    x_plus = s.x - u_real
    kappa = cfg.impact_loss
    vx_plus = kappa * s.vx
    if cfg.perfect_height:
        z, vz = cfg.z0, 0.0
    else:
        z = s.z
        # horizontal momentum lost at strike partly reappears along the new leg
        vz = s.vz + (1.0 - kappa) * s.vx * x_plus / s.z
    return PlantState(
        x=x_plus, z=z, vx=vx_plus, vz=vz, swing_x=-u_real, t_phase=0.0,
        stance_world_x=s.stance_world_x + u_real,
    )


def pre_impact_state(p: float, v: float, cfg: PlantConfig) -> PlantState:
    """A pre-impact plant state at nominal height with the given horizontal state."""
    return PlantState(x=p, z=cfg.z0, vx=v, vz=0.0, swing_x=0.0, t_phase=cfg.T)


def integrate_step(
    s0: PlantState,
    controller_callback: Callable[[DiscreteState, float], float],
    F_push: float,
    cfg: PlantConfig,
    k: int = 0,
    t_start: float = 0.0,
    keep_trace: bool = False,
):
    """Simulate one single-support phase and the foot strike that ends it.

    ``s0`` must be a post-impact state (``t_phase == 0``). The callback is
    queried after every substep with the current horizontal state, so the
    commanded step may evolve during the swing; the value returned at
    ``t_phase == T`` is the one realized.

    Returns ``(post_impact_state, record, trace_or_None)``.
    """
    if abs(s0.t_phase) > 1e-12:
        raise ValueError("integrate_step expects a post-impact state (t_phase == 0)")
    if s0.z <= 0:
        raise ValueError("COM height must be positive")
    n = cfg.n_substeps
    h = cfg.dt
    y = (float(s0.x), float(s0.z), float(s0.vx), float(s0.vz))
    x_sw_plus = s0.swing_x
    swing = x_sw_plus
    u = x_sw_plus
    if keep_trace:
        tr = np.empty((n + 1, 5))
        tr[0] = (t_start, y[0], y[2], y[1], swing)
    for i in range(n):
        t = i * h
        y = _rk4(y, t, h, F_push, cfg)
        t_next = cfg.T if i == n - 1 else (i + 1) * h
        if not all(isfinite(a) for a in y):
            raise PlantFall(f"non-finite state at step {k}")
        if y[1] <= 0.1 * cfg.z0:
            raise PlantFall(f"COM height {y[1]:.4g} m below 10% of z0 at step {k}")
        u = float(controller_callback(DiscreteState(float(y[0]), float(y[2])), t_next))
        swing = desired_swing_x(x_sw_plus, u, t_next, cfg)
        if keep_trace:
            tr[i + 1] = (t_start + t_next, y[0], y[2], y[1], swing)
    pre = PlantState(x=float(y[0]), z=float(y[1]), vx=float(y[2]), vz=float(y[3]),
                     swing_x=swing, t_phase=cfg.T, stance_world_x=s0.stance_world_x)
    u_real = swing
    if abs(u_real - u) > cfg.swing_tol:
        raise RuntimeError(f"swing foot missed the commanded step by {abs(u_real - u):.3g} m")
    record = StepRecord(k=k, x_pre=DiscreteState(pre.x, pre.vx), u_cmd=u, u_real=u_real,
                        F_push=float(F_push), duration=cfg.T)
    trace = StepTrace(tr[:, 0], tr[:, 1], tr[:, 2], tr[:, 3], tr[:, 4]) if keep_trace else None
    return impact_map(pre, u_real, cfg), record, trace


def check_push_schedule(push_schedule: Sequence[tuple], n_push: int) -> dict:
    pushes = sorted((int(k), float(F)) for k, F in push_schedule)
    for k, _ in pushes:
        if k < 1:
            raise PushScheduleError(f"push at step {k}: pushes must start at step 1 or later")
    for (k0, _), (k1, _) in zip(pushes, pushes[1:]):
        if k1 - k0 < n_push:
            raise PushScheduleError(f"pushes at steps {k0} and {k1} are closer than N_push={n_push}")
    return dict(pushes)


def run_episode(
    cfg: PlantConfig,
    controller,
    n_steps: int,
    push_schedule: Sequence[tuple] = (),
    n_push: int = 8,
    initial: Optional[PlantState] = None,
    keep_trace: bool = False,
) -> PlantEpisode:
    """Walk ``n_steps`` steps from standstill (or ``initial``).

    ``controller`` is called as ``controller(x_now, t_phase)``; if it has an
    ``on_impact(record)`` method that is called after every foot strike.
    """
    pushes = check_push_schedule(push_schedule, n_push)
    ep = PlantEpisode()
    s = initial if initial is not None else PlantState.standstill(cfg)
    on_impact = getattr(controller, "on_impact", None)
    for k in range(n_steps):
        F = pushes.get(k, 0.0)
        try:
            s, rec, tr = integrate_step(s, controller, F, cfg, k=k, t_start=k * cfg.T,
                                        keep_trace=keep_trace)
        except PlantFall as exc:
            ep.fell = True
            ep.fall_reason = str(exc)
            break
        ep.records.append(rec)
        if tr is not None:
            ep.traces.append(tr)
        if on_impact is not None:
            on_impact(rec)
    return ep


def with_limits(cfg: PlantConfig) -> PlantConfig:
    """The idealized plant whose step map coincides with the H-LIP."""
    return replace(cfg, nl_eps=0.0, perfect_height=True, impact_loss=1.0)
