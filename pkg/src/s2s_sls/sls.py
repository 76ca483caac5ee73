"""Constrained system-level synthesis of a finite-impulse-response stepping controller.

The controller acts on the error dynamics ``e[k+1] = Abar e[k] + Bbar u[k] + w[k]``
around a target orbit. Its closed-loop maps are optimized directly:

    e[k] = sum_i Phi_x[i] w[k-i],    u[k] = sum_i Phi_u[i] w[k-i],   i = 1..N_F

subject to the achievability recursion, a FIR closure, and robust state and
input constraints over a per-lag disturbance profile. The robust constraints
use the multiplier form ``H Phi = Lambda G``, ``sum Lambda g <= h`` with
``Lambda >= 0``, which keeps the whole synthesis a single LP.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import lp
from .sets import BoxSet, minkowski_sum, to_halfspaces, vertices
from .textio import read_kv, write_kv

FAMILIES = ("state", "terminal", "input")


class SynthesisInfeasible(RuntimeError):
    """No FIR controller satisfies the constraints for these sets and horizon."""

    def __init__(self, family: Optional[str], message: str = ""):
        self.family = family
        super().__init__(message or f"SLS synthesis infeasible (binding family: {family})")


@dataclass(frozen=True)
class DisturbanceProfile:
    """Bound on the disturbance at each lag of the synthesis window."""

    sets: tuple

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(self.sets))
        if not self.sets:
            raise ValueError("profile must contain at least one set")
        dims = {s.dim for s in self.sets}
        if len(dims) != 1:
            raise ValueError("profile sets must share one dimension")

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, i):
        return self.sets[i]


def build_profile(S0: BoxSet, Wext: BoxSet, D: BoxSet, N_F: int) -> DisturbanceProfile:
    """``[S0, Wext + D, D, ..., D]`` of length ``N_F``: the push lands at index 1."""
    if N_F < 2:
        raise ValueError("N_F must be at least 2 to place a push in the profile")
    return DisturbanceProfile([S0, minkowski_sum(Wext, D)] + [D] * (N_F - 2))


@dataclass
class FirController:
    phi_x: np.ndarray  # (N_F, n, n)
    phi_u: np.ndarray  # (N_F, m, n)
    Abar: np.ndarray
    Bbar: np.ndarray
    weights: tuple = ((1.0, 1.0), 1.0)
    objective: float = float("nan")
    model_hash: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.Abar = np.atleast_2d(np.asarray(self.Abar, dtype=float))
        n = self.Abar.shape[0]
        self.Bbar = np.asarray(self.Bbar, dtype=float).reshape(n, -1)
        m = self.Bbar.shape[1]
        self.phi_x = np.asarray(self.phi_x, dtype=float).reshape(-1, n, n)
        self.phi_u = np.asarray(self.phi_u, dtype=float).reshape(-1, m, n)
        if self.phi_x.shape[0] != self.phi_u.shape[0]:
            raise ValueError("phi_x and phi_u must have the same horizon")

    @property
    def nf(self) -> int:
        return self.phi_x.shape[0]

    @property
    def n(self) -> int:
        return self.Abar.shape[0]

    def recursion_residual(self) -> float:
        """Largest violation of the achievability recursion and the FIR closure."""
        A, B = self.Abar, self.Bbar
        res = [np.max(np.abs(self.phi_x[0] - np.eye(self.n)))]
        for i in range(self.nf - 1):
            res.append(np.max(np.abs(self.phi_x[i + 1] - A @ self.phi_x[i] - B @ self.phi_u[i])))
        res.append(np.max(np.abs(A @ self.phi_x[-1] + B @ self.phi_u[-1])))
        return float(max(res))

    def response(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Convolution ``e[k], u[k]`` for ``k = 1..len(w)`` given ``w[0..]``."""
        w = np.asarray(w, dtype=float)
        K = w.shape[0]
        e = np.zeros((K, self.n))
        u = np.zeros((K, self.phi_u.shape[1]))
        for k in range(1, K + 1):
            for i in range(1, self.nf + 1):
                if k - i >= 0:
                    e[k - 1] += self.phi_x[i - 1] @ w[k - i]
                    u[k - 1] += self.phi_u[i - 1] @ w[k - i]
        return e, u

    def save(self, path) -> None:
        q, r = self.weights
        write_kv(path, {
            "nf": self.nf,
            "phi_x": self.phi_x.reshape(self.nf, -1),
            "phi_u": self.phi_u.reshape(self.nf, -1),
            "abar": self.Abar.ravel(),
            "bbar": self.Bbar.ravel(),
            "model_hash": self.model_hash,
            "weights.q": list(q),
            "weights.r": float(r),
            "objective": self.objective,
            **{f"meta.{k}": v for k, v in sorted(self.meta.items())},
        }, header="FIR stepping controller (system-level synthesis)")

    @classmethod
    def load(cls, path) -> "FirController":
        kv = read_kv(path)
        nf = int(kv["nf"])
        A = np.asarray(kv["abar"], dtype=float)
        n = int(round(np.sqrt(A.size)))
        return cls(
            phi_x=np.asarray(kv["phi_x"], dtype=float).reshape(nf, n, n),
            phi_u=np.asarray(kv["phi_u"], dtype=float).reshape(nf, -1, n),
            Abar=A.reshape(n, n),
            Bbar=np.asarray(kv["bbar"], dtype=float).reshape(n, -1),
            weights=(tuple(float(v) for v in kv["weights.q"]), float(kv["weights.r"])),
            objective=float(kv["objective"]),
            model_hash=kv["model_hash"],
            meta={k[5:]: v for k, v in kv.items() if k.startswith("meta.")},
        )


# --- synthesis -----------------------------------------------------------------


class _Layout:
    """Column bookkeeping for the synthesis LP."""

    def __init__(self, nf, n, m, h_rows, g_rows, tail=0):
        self.nf, self.n, self.m = nf, n, m
        self.per = n * n + m * n
        self.n_phi = nf * self.per
        self.lam = {}
        col = self.n_phi
        for i in range(1, nf + tail + 1):
            for j in range(max(0, i - nf), i):
                self.lam[i, j] = col
                col += h_rows[i] * g_rows[min(j, len(g_rows) - 1)]
        self.n_lam = col - self.n_phi
        self.t0 = col
        self.size = col + self.n_phi

    def px(self, i, r, c):
        return (i - 1) * self.per + r * self.n + c

    def pu(self, i, r, c):
        return (i - 1) * self.per + self.n * self.n + r * self.n + c

    def phi(self, i, s, c):
        """Column of entry ``(s, c)`` of the stacked ``[Phi_x[i]; Phi_u[i]]``."""
        return self.px(i, s, c) if s < self.n else self.pu(i, s - self.n, c)


def _constraint_rows(i, nf, Xe, Ue, S0, active):
    """``H[i]``, ``h[i]`` on ``[e; u]`` and the family label of each row."""
    blocks, rhs, labels = [], [], []
    state_set, fam = (S0, "terminal") if i >= nf else (Xe, "state")
    if state_set is not None and fam in active:
        P = to_halfspaces(state_set)
        blocks.append(("x", P.G))
        rhs.append(P.g)
        labels += [fam] * P.G.shape[0]
    if Ue is not None and "input" in active:
        P = to_halfspaces(Ue)
        blocks.append(("u", P.G))
        rhs.append(P.g)
        labels += ["input"] * P.G.shape[0]
    return blocks, (np.concatenate(rhs) if rhs else np.zeros(0)), labels


def _build_lp(A, B, profile, Xe, Ue, S0, weights, active, tail=0):
    n = A.shape[0]
    m = B.shape[1]
    nf = len(profile) if profile is not None else None
    if nf is None:
        raise ValueError("a disturbance profile is required")
    G = [to_halfspaces(s) for s in profile.sets]
    Hs = {}
    for i in range(1, nf + tail + 1):
        blocks, h, labels = _constraint_rows(i, nf, Xe, Ue, S0, active)
        H = np.zeros((h.size, n + m))
        r = 0
        for kind, Gb in blocks:
            k = Gb.shape[0]
            if kind == "x":
                H[r:r + k, :n] = Gb
            else:
                H[r:r + k, n:] = Gb
            r += k
        Hs[i] = (H, h, labels)
    lay = _Layout(nf, n, m, {i: Hs[i][0].shape[0] for i in Hs}, [g.G.shape[0] for g in G], tail)

    eq_rows, eq_rhs = [], []
    ub_rows, ub_rhs, ub_labels = [], [], []

    def new_row():
        return np.zeros(lay.size)

    # Phi_x[1] = I
    for r in range(n):
        for c in range(n):
            row = new_row()
            row[lay.px(1, r, c)] = 1.0
            eq_rows.append(row)
            eq_rhs.append(1.0 if r == c else 0.0)
    # Phi_x[i+1] = A Phi_x[i] + B Phi_u[i];  closure A Phi_x[N] + B Phi_u[N] = 0
    for i in range(1, nf + 1):
        for r in range(n):
            for c in range(n):
                row = new_row()
                if i < nf:
                    row[lay.px(i + 1, r, c)] = 1.0
                for s in range(n):
                    row[lay.px(i, s, c)] -= A[r, s]
                for s in range(m):
                    row[lay.pu(i, s, c)] -= B[r, s]
                eq_rows.append(row)
                eq_rhs.append(0.0)
    # robust constraints; lags past the profile reuse its last set
    for i in range(1, nf + tail + 1):
        H, h, labels = Hs[i]
        nh = H.shape[0]
        if nh == 0:
            continue
        for j in range(max(0, i - nf), i):
            Gj = G[min(j, nf - 1)].G
            ng = Gj.shape[0]
            base = lay.lam[i, j]
            for r in range(nh):
                for c in range(n):
                    row = new_row()
                    for s in range(n + m):
                        if H[r, s] != 0.0:
                            row[lay.phi(i - j, s, c)] += H[r, s]
                    for l in range(ng):
                        if Gj[l, c] != 0.0:
                            row[base + r * ng + l] -= Gj[l, c]
                    eq_rows.append(row)
                    eq_rhs.append(0.0)
        for r in range(nh):
            row = new_row()
            for j in range(max(0, i - nf), i):
                gj = G[min(j, nf - 1)].g
                ng = gj.size
                base = lay.lam[i, j]
                row[base + r * ng: base + (r + 1) * ng] = gj
            ub_rows.append(row)
            ub_rhs.append(h[r])
            ub_labels.append((labels[r], i))
    # |phi| <= t
    for k in range(lay.n_phi):
        for sgn in (1.0, -1.0):
            row = new_row()
            row[k] = sgn
            row[lay.t0 + k] = -1.0
            ub_rows.append(row)
            ub_rhs.append(0.0)
            ub_labels.append(("abs", 0))

    q, rw = weights
    q = np.broadcast_to(np.asarray(q, dtype=float), (n,))
    cost = np.zeros(lay.size)
    for i in range(1, nf + 1):
        for r in range(n):
            for c in range(n):
                cost[lay.t0 + lay.px(i, r, c)] = q[r]
        for r in range(m):
            for c in range(n):
                cost[lay.t0 + lay.pu(i, r, c)] = rw
    bounds = [(None, None)] * lay.n_phi + [(0.0, None)] * (lay.n_lam + lay.n_phi)
    problem = lp.LpProblem(
        cost,
        np.array(ub_rows) if ub_rows else None,
        np.array(ub_rhs) if ub_rhs else None,
        np.array(eq_rows),
        np.array(eq_rhs),
        bounds,
    )
    return problem, lay


def synthesize(
    model,
    profile: DisturbanceProfile,
    Xe: Optional[BoxSet],
    Ue: Optional[BoxSet],
    S0: Optional[BoxSet],
    weights=None,
    diagnose: bool = True,
    tail: int = 0,
) -> FirController:
    """Solve the constrained synthesis LP.

    ``model`` is anything with ``Abar`` and ``Bbar`` (an ``S2SModel`` or a
    ``(A, B)`` pair). Passing ``None`` for a set drops that constraint
    family. ``tail > 0`` adds constraints for the ``tail`` steps after the
    window, where the oldest disturbances have shifted past the profile and
    the state must stay in ``S0``; this certifies a controller that keeps
    running instead of restarting at every window. Raises
    :class:`SynthesisInfeasible` naming the first family
    (state, terminal, input) whose removal restores feasibility.
    """
    if isinstance(model, tuple):
        A, B = model
        model_hash = ""
    else:
        A, B = model.Abar, model.Bbar
        model_hash = model.digest() if hasattr(model, "digest") else ""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if weights is None:
        weights = ((1.0,) * A.shape[0], 1.0)
    if S0 is not None and Xe is not None and not S0.issubset(Xe):
        raise ValueError("S0 must be a subset of Xe")
    problem, lay = _build_lp(A, B, profile, Xe, Ue, S0, weights, set(FAMILIES), tail)
    sol = lp.solve(problem)
    if sol.status is lp.LpStatus.UNBOUNDED:
        raise RuntimeError("synthesis LP is unbounded, which indicates malformed weights")
    if not sol.ok:
        family = _diagnose(A, B, profile, Xe, Ue, S0, weights, tail) if diagnose else None
        raise SynthesisInfeasible(family)
    nf, n, m = lay.nf, lay.n, lay.m
    phi = sol.x[: lay.n_phi].reshape(nf, lay.per)
    phi_x = phi[:, : n * n].reshape(nf, n, n).copy()
    phi_u = phi[:, n * n:].reshape(nf, m, n).copy()
    phi_x[0] = np.eye(n)
    return FirController(phi_x, phi_u, A, B, weights=(tuple(np.broadcast_to(weights[0], (n,)).tolist()),
                                                      float(weights[1])),
                         objective=sol.objective, model_hash=model_hash)


def _diagnose(A, B, profile, Xe, Ue, S0, weights, tail=0) -> Optional[str]:
    for fam in FAMILIES:
        active = set(FAMILIES) - {fam}
        problem, _ = _build_lp(A, B, profile, Xe, Ue, S0, weights, active, tail)
        if lp.solve(problem).ok:
            return fam
    return None


# --- runtime -------------------------------------------------------------------


@dataclass(frozen=True)
class ControllerState:
    buffer: np.ndarray  # row i-1 holds w_hat[k-i]
    e_prev: np.ndarray
    u_prev: np.ndarray
    initialized: bool = False


def controller_reset(c: FirController) -> ControllerState:
    m = c.phi_u.shape[1]
    return ControllerState(np.zeros((c.nf, c.n)), np.zeros(c.n), np.zeros(m), False)


def controller_step(c: FirController, s: ControllerState, e_k, reconstruction: str = "response"
                    ) -> tuple[np.ndarray, ControllerState]:
    """One step of the convolution controller.

    The disturbance that produced ``e_k`` is reconstructed, pushed into the
    history buffer, and the new input is the convolution of ``Phi_u`` with
    that history. Returns ``(u_e, new_state)``; ``s`` is left untouched so a
    caller may evaluate without committing.

    Two reconstructions are available and agree exactly whenever the
    achievability recursion holds:

    * ``"model"``: ``w[k-1] = e[k] - Abar e[k-1] - Bbar u[k-1]``.
    * ``"response"`` (default): ``w[k-1] = e[k] - sum_{i>=2} Phi_x[i] w[k-i]``.

    The model form cancels the unstable mode of ``Abar`` inside the loop, so
    LP round-off in the closure grows like ``|eig(Abar)|^k`` and the walker
    eventually drifts away. The response form has no such hidden mode.
    """
    e_k = np.asarray(e_k, dtype=float).ravel()
    if not np.all(np.isfinite(e_k)):
        raise ValueError("non-finite error state")
    if not s.initialized:
        w_hat = e_k  # the first error plays the role of w[0]
    elif reconstruction == "model":
        w_hat = e_k - c.Abar @ s.e_prev - c.Bbar @ s.u_prev
    elif reconstruction == "response":
        w_hat = e_k - np.einsum("inm,im->n", c.phi_x[1:], s.buffer[:-1])
    else:
        raise ValueError(f"unknown reconstruction {reconstruction!r}")
    buf = np.empty_like(s.buffer)
    buf[0] = w_hat
    buf[1:] = s.buffer[:-1]
    u = np.einsum("imn,in->m", c.phi_u, buf)
    return u, ControllerState(buf, e_k.copy(), u.copy(), True)


# --- verification --------------------------------------------------------------


@dataclass
class RobustReport:
    passed: bool
    state_margin: np.ndarray  # (N_F, n) worst distance to the state (or terminal) bounds
    input_margin: np.ndarray  # (N_F, m)
    worst_u: np.ndarray  # (N_F, m) largest |u| seen at each step
    violation: Optional[dict] = None
    n_sequences: int = 0

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "n_sequences": int(self.n_sequences),
            "state_margin": self.state_margin.tolist(),
            "input_margin": self.input_margin.tolist(),
            "worst_u": self.worst_u.tolist(),
            "violation": self.violation,
        }


def _box_margin(s: BoxSet, x) -> np.ndarray:
    return np.minimum(s.hi - x, x - s.lo)


def rollout(c: FirController, ws: Sequence[np.ndarray]):
    """Closed loop on the linear model: ``e[1] = w[0]``, ``e[k+1] = A e[k] + B u[k] + w[k]``."""
    st = controller_reset(c)
    e = np.asarray(ws[0], dtype=float)
    es, us = [], []
    for k in range(len(ws)):
        u, st = controller_step(c, st, e)
        es.append(e)
        us.append(u)
        if k + 1 < len(ws):
            e = c.Abar @ e + c.Bbar @ u + ws[k + 1]
    return np.array(es), np.array(us)


def verify_robust(c: FirController, profile: DisturbanceProfile, Xe: BoxSet, Ue: BoxSet, S0: BoxSet,
                  tol: float = 1e-9) -> RobustReport:
    """Check every vertex disturbance sequence of the profile on the linear closed loop."""
    nf = c.nf
    if len(profile) != nf:
        raise ValueError("profile length must equal the FIR horizon")
    m = c.phi_u.shape[1]
    state_margin = np.full((nf, c.n), np.inf)
    input_margin = np.full((nf, m), np.inf)
    worst_u = np.zeros((nf, m))
    violation = None
    count = 0
    for seq in itertools.product(*[vertices(s) for s in profile.sets]):
        count += 1
        es, us = rollout(c, seq)
        for i in range(nf):
            target = S0 if i == nf - 1 else Xe
            sm = _box_margin(target, es[i])
            um = _box_margin(Ue, us[i])
            state_margin[i] = np.minimum(state_margin[i], sm)
            input_margin[i] = np.minimum(input_margin[i], um)
            worst_u[i] = np.maximum(worst_u[i], np.abs(us[i]))
            if violation is None and (np.any(sm < -tol) or np.any(um < -tol)):
                violation = {
                    "step": i + 1,
                    "constraint": ("terminal" if i == nf - 1 else "state") if np.any(sm < -tol) else "input",
                    "sequence": [np.asarray(w).tolist() for w in seq],
                }
    return RobustReport(violation is None, state_margin, input_margin, worst_u, violation, count)


def theorem1_certificate(c: Optional[FirController], S0: BoxSet, Xe: BoxSet, Ue: BoxSet, N_F: int, N_push: int,
                         profile: Optional[DisturbanceProfile] = None) -> dict:
    """Check the hypotheses of the push-recovery guarantee and report them."""
    hyp = {
        "synthesis_feasible": c is not None,
        "N_F <= N_push": N_F <= N_push,
        "S0 subset of Xe": S0.issubset(Xe),
    }
    report = None
    if c is not None and profile is not None:
        report = verify_robust(c, profile, Xe, Ue, S0)
        hyp["robust_verification"] = report.passed
    else:
        hyp["robust_verification"] = False
    failing = [k for k, ok in hyp.items() if not ok]
    return {
        "passed": not failing,
        "failing": failing,
        "hypotheses": {k: bool(v) for k, v in hyp.items()},
        "N_F": int(N_F),
        "N_push": int(N_push),
        "S0": {"lo": S0.lo.tolist(), "hi": S0.hi.tolist()},
        "Xe": {"lo": Xe.lo.tolist(), "hi": Xe.hi.tolist()},
        "Ue": {"lo": Ue.lo.tolist(), "hi": Ue.hi.tolist()},
        "margins": report.to_dict() if report is not None else None,
    }


def multi_push_monte_carlo(c: FirController, S0: BoxSet, Wext: BoxSet, D: BoxSet, Xe: BoxSet, Ue: BoxSet,
                           n_steps: int = 10_000, push_steps: Sequence[int] = (), seed: int = 0,
                           tol: float = 1e-9) -> dict:
    """Run the controller on ``e[k+1] = Abar e[k] + Bbar u[k] + w[k]`` for many steps.

    ``w`` is drawn uniformly from ``D`` except at the listed steps, where a
    push drawn from ``Wext`` is added; the walk starts at a random point of
    ``S0``. Counts steps where ``e`` leaves ``Xe`` or ``u`` leaves ``Ue``.
    """
    rng = np.random.default_rng(seed)
    pushes = set(int(k) for k in push_steps)
    st = controller_reset(c)
    e = rng.uniform(S0.lo, S0.hi)
    x_viol = u_viol = 0
    max_u = 0.0
    for k in range(n_steps):
        u, st = controller_step(c, st, e)
        if np.any(e < Xe.lo - tol) or np.any(e > Xe.hi + tol):
            x_viol += 1
        if np.any(u < Ue.lo - tol) or np.any(u > Ue.hi + tol):
            u_viol += 1
        max_u = max(max_u, float(np.max(np.abs(u))))
        w = rng.uniform(D.lo, D.hi)
        if k in pushes:
            w = w + rng.uniform(Wext.lo, Wext.hi)
        e = c.Abar @ e + c.Bbar @ u + w
    return {"steps": n_steps, "state_violations": x_viol, "input_violations": u_viol, "max_abs_u_e": max_u}
