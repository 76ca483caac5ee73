"""Stepping controllers that drive the plant.

Every controller is called during the swing with the current horizontal
state and the time into the step. It predicts the pre-impact state with the
H-LIP flow over the remaining time and returns a step size for that
prediction; at the end of the swing the prediction is exact, so the realized
step is the controller's answer for the true pre-impact state. ``on_impact``
commits the step and advances any internal state.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import sls
from .hlip import DiscreteState, HlipParams, ssp_flow


def _predict(x_now: DiscreteState, t_phase: float, params: HlipParams) -> np.ndarray:
    rest = max(params.T - t_phase, 0.0)
    return ssp_flow(x_now, rest, params).as_array()


class FeedbackStepper:
    """``u = u* + K (x - x*)`` with an optional per-step dither.

    Used for the deadbeat and LQR baselines and, with dither, for data
    collection.
    """

    def __init__(self, params: HlipParams, K, x_ref, u_ref: float, name: str = "feedback",
                 dither: float = 0.0, rng: Optional[np.random.Generator] = None):
        self.params = params
        self.K = np.asarray(K, dtype=float).reshape(-1)
        self.x_ref = np.asarray(x_ref, dtype=float).ravel()
        self.u_ref = float(u_ref)
        self.name = name
        self.dither = float(dither)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._offset = self._draw()
        self._peak = 0.0
        self.log: list = []

    def _draw(self) -> float:
        return float(self.rng.uniform(-self.dither, self.dither)) if self.dither > 0 else 0.0

    def error(self, x: np.ndarray) -> np.ndarray:
        return x - self.x_ref

    def __call__(self, x_now: DiscreteState, t_phase: float) -> float:
        x = _predict(x_now, t_phase, self.params)
        u = self.u_ref + float(self.K @ self.error(x)) + self._offset
        self._peak = max(self._peak, abs(u))
        return u

    def on_impact(self, rec) -> None:
        e = self.error(rec.x_pre.as_array())
        self.log.append({"e": e, "u_e": rec.u_real - self.u_ref, "u_peak": self._peak})
        self._offset = self._draw()
        self._peak = 0.0


class SlsStepper:
    """Runs a synthesized FIR controller around an orbit ``(x*, u*)``."""

    name = "sls"

    def __init__(self, params: HlipParams, controller: sls.FirController, x_ref, u_ref: float):
        self.params = params
        self.controller = controller
        self.x_ref = np.asarray(x_ref, dtype=float).ravel()
        self.u_ref = float(u_ref)
        self.state = sls.controller_reset(controller)
        self._peak = 0.0
        self.log: list = []

    def __call__(self, x_now: DiscreteState, t_phase: float) -> float:
        e = _predict(x_now, t_phase, self.params) - self.x_ref
        u_e, _ = sls.controller_step(self.controller, self.state, e)
        u = self.u_ref + float(u_e[0])
        self._peak = max(self._peak, abs(u))
        return u

    def on_impact(self, rec) -> None:
        e = rec.x_pre.as_array() - self.x_ref
        u_e, self.state = sls.controller_step(self.controller, self.state, e)
        self.log.append({"e": e, "u_e": float(u_e[0]), "u_peak": self._peak,
                         "w_hat": self.state.buffer[0].copy()})
        self._peak = 0.0
