"""SVG figures of push episodes: velocity, step size, and model residuals."""
from __future__ import annotations

import io
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import hlip  # noqa: E402
from .textio import atomic_write_text  # noqa: E402

KINDS = ("velocity", "input", "residual")
_STYLE = {"sls": ("tab:blue", "-"), "deadbeat": ("tab:red", "--"), "lqr": ("tab:green", ":")}


def _style(name):
    return _STYLE.get(name, ("tab:gray", "-"))


def _velocity(ax, logs, cfg):
    for log in logs:
        color, ls = _style(log.controller)
        if log.traces:
            t = np.concatenate([tr.t for tr in log.traces])
            v = np.concatenate([tr.vx for tr in log.traces])
        else:
            t = (log.k + 1) * (cfg.hlip().T if cfg is not None else 1.0)
            v = log.x[:, 1]
        ax.plot(t, v, color=color, ls=ls, lw=1.2, label=log.controller)
    if cfg is not None:
        ax.axhline(cfg.v_d, color="k", lw=0.6, alpha=0.5)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("COM velocity [m/s]")


def _input(ax, logs, cfg):
    for log in logs:
        color, ls = _style(log.controller)
        ax.plot(log.k, log.u_real, color=color, ls=ls, marker="o", ms=3, lw=1.2, label=log.controller)
    if cfg is not None:
        for b in (cfg.U.lo[0], cfg.U.hi[0]):
            ax.axhline(b, color="k", lw=0.8, ls="-.")
    ax.set_xlabel("step k")
    ax.set_ylabel("step size u [m]")


def _residual(axes, logs, cfg, model):
    if cfg is None or model is None:
        raise ValueError("the residual plot needs the config and the learned model")
    A, B = hlip.s2s_matrices(cfg.hlip())
    # one episode keeps the two residuals readable; prefer the SLS run
    logs = [next((lg for lg in logs if lg.controller == "sls"), logs[0])]
    for log in logs:
        if len(log) < 2:
            continue
        color, _ = _style(log.controller)
        x, u, xn = log.x[:-1], log.u_real[:-1], log.x[1:]
        eps = xn - (x @ model.Abar.T + np.outer(u, model.Bbar[:, 0]) + model.Cbar)
        w_m = xn - (x @ A.T + np.outer(u, B[:, 0]))
        k = log.k[1:]
        for j, ax in enumerate(axes):
            ax.plot(k, eps[:, j], color=color, ls="-", lw=1.2, marker=".", label=f"{log.controller}: eps")
            ax.plot(k, w_m[:, j], color=color, ls=":", lw=1.0, label=f"{log.controller}: w_m")
    for j, ax in enumerate(axes):
        d = model.dstar[j]
        ax.axhline(d, color="k", lw=0.6, ls="-.")
        ax.axhline(-d, color="k", lw=0.6, ls="-.")
    axes[0].set_ylabel("p residual [m]")
    axes[1].set_ylabel("v residual [m/s]")
    axes[1].set_xlabel("step k")


def render(logs: Sequence, kind: str, cfg=None, model=None) -> str:
    """Figure as SVG text; identical inputs give identical bytes."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    logs = [log for log in logs if len(log)]
    if not logs:
        raise ValueError("nothing to plot: every log is empty")
    with plt.rc_context({"svg.hashsalt": "s2s-sls", "svg.fonttype": "none"}):
        if kind == "residual":
            fig, axes = plt.subplots(2, 1, figsize=(6.4, 5.2), sharex=True)
            _residual(axes, logs, cfg, model)
            axes[0].legend(fontsize=7, ncol=2)
        else:
            fig, ax = plt.subplots(figsize=(6.4, 3.6))
            (_velocity if kind == "velocity" else _input)(ax, logs, cfg)
            ax.legend(fontsize=8)
            ax.grid(alpha=0.3)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def emit_plot(logs: Sequence, kind: str, path, cfg=None, model=None) -> None:
    atomic_write_text(path, render(logs, kind, cfg, model))
