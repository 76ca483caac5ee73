"""Dense two-phase simplex.

Solves ``min c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi``.
Pricing is Dantzig's rule with a fallback to Bland's rule during runs of
degenerate pivots, so runs are reproducible and cannot cycle. The tableau is
rebuilt from the original data every few pivots to limit round-off, and a
composite phase 1 repairs any feasibility lost to it. Problem sizes in this
package are a few hundred variables at most.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TOL = 1e-9
FEAS_TOL = 1e-7
BLAND_AFTER = 50
PIVOT_TOL = 1e-11
FEAS_SLACK = 1e-9
REFRESH_EVERY = 20
MAX_REFRESH_ROUNDS = 20
MAX_PIVOTS = 1_000_000


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpNumericalError(ArithmeticError):
    """The basis does not reproduce a feasible point to working accuracy."""


class LpIterationLimit(ArithmeticError):
    pass


@dataclass
class LpProblem:
    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    bounds: Optional[Sequence[tuple]] = None  # per variable; defaults to (0, inf)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "ub")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "eq")
        if self.bounds is None:
            self.bounds = [(0.0, np.inf)] * n
        elif len(self.bounds) != n:
            raise ValueError(f"bounds has {len(self.bounds)} entries for {n} variables")
        lo = np.array([-np.inf if b[0] is None else float(b[0]) for b in self.bounds])
        hi = np.array([np.inf if b[1] is None else float(b[1]) for b in self.bounds])
        if np.any(lo > hi):
            raise ValueError("a variable has lower bound above upper bound")
        self.bounds = list(zip(lo.tolist(), hi.tolist()))
        for arr in (self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq):
            if np.any(np.isnan(arr)):
                raise ValueError("LP data contains NaN")

    @property
    def n(self) -> int:
        return self.c.size

    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def residual(self, x) -> float:
        """Largest violation of any constraint or bound at ``x``."""
        x = np.asarray(x, dtype=float)
        viol = [0.0]
        if self.A_ub.shape[0]:
            viol.append(np.max(self.A_ub @ x - self.b_ub))
        if self.A_eq.shape[0]:
            viol.append(np.max(np.abs(self.A_eq @ x - self.b_eq)))
        viol.append(np.max(self.lower() - x, initial=0.0))
        viol.append(np.max(x - self.upper(), initial=0.0))
        return float(max(viol))


def _rows(A, b, n, tag):
    if A is None:
        if b is not None and np.size(b):
            raise ValueError(f"b_{tag} given without A_{tag}")
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError(f"A_{tag} has shape {A.shape}, expected (len(b_{tag})={b.size}, {n})")
    return A, b


@dataclass
class LpSolution:
    status: LpStatus
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    pivots: int = 0
    # standard-form rows left infeasible after phase 1 (diagnostic only)
    infeasible_rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    """Simplex tableau; last row holds reduced costs, last column the rhs.

    The original (row-scaled) constraint data is kept so the tableau can be
    rebuilt from the current basis every few pivots. If a rebuild reveals
    that round-off has pushed a basic variable negative, the composite
    phase 1 below steers it back.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: list[int]):
        m, nt = A.shape
        self.A = A
        self.b = b
        self.basis = basis
        self.cost = np.zeros(nt)
        self.T = np.zeros((m + 1, nt + 1))
        self.pivots = 0
        self._rebuild()

    @property
    def m(self) -> int:
        return len(self.basis)

    def x_basic(self) -> np.ndarray:
        return self.T[:-1, -1]

    def _rebuild(self) -> None:
        m = self.m
        T = self.T
        if m:
            Bm = self.A[:, self.basis]
            T[:m, :-1] = np.linalg.solve(Bm, self.A)
            xb = np.linalg.solve(Bm, self.b)
            T[:m, -1] = np.where(np.abs(xb) <= TOL, 0.0, xb)
            T[:m, self.basis] = np.eye(m)
        self._price()

    def _price(self) -> None:
        m = self.m
        T = self.T
        cb = self.cost[self.basis]
        T[m, :-1] = self.cost - cb @ T[:m, :-1]
        T[m, self.basis] = 0.0
        T[m, -1] = -cb @ T[:m, -1]

    def set_cost(self, cost: np.ndarray) -> None:
        self.cost = cost
        self._price()

    def drop_rows(self, keep: list[int]) -> None:
        self.A = self.A[keep]
        self.b = self.b[keep]
        self.basis = [self.basis[i] for i in keep]
        self.T = np.vstack([self.T[keep], self.T[-1:]])

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.pivots += 1
        if self.pivots > MAX_PIVOTS:
            raise LpIterationLimit(f"simplex exceeded {MAX_PIVOTS} pivots")

    def iterate(self, allowed: np.ndarray, cost_fn) -> str:
        """Pivot until optimal, unbounded, or (phase 2 only) feasibility is lost.

        ``cost_fn(tableau)`` returns the cost vector for the current basis;
        it is re-evaluated at every rebuild, which is how the composite
        phase 1 tracks which basic variables are negative. Pricing is
        Dantzig's rule with a fallback to Bland's rule after a run of
        degenerate pivots, which keeps the anti-cycling guarantee.
        """
        self._rebuild()
        self.set_cost(cost_fn(self))
        degenerate_run = 0
        since_rebuild = 0
        while True:
            T = self.T
            m = self.m
            red = T[m, :-1]
            cand = np.flatnonzero((red < -TOL) & allowed)
            if cand.size == 0:
                # confirm on a fresh tableau with fresh costs
                self._rebuild()
                new_cost = cost_fn(self)
                self.set_cost(new_cost)
                if not np.any((self.T[m, :-1] < -TOL) & allowed):
                    return "optimal"
                degenerate_run = since_rebuild = 0
                continue
            bland = degenerate_run >= BLAND_AFTER
            j = int(cand[0]) if bland else int(cand[np.argmin(red[cand])])
            colj = T[:m, j]
            rhs = T[:m, -1]
            # rows that block the step: feasible rows with a positive entry, and
            # infeasible (negative) rows that the step lifts back to zero
            feas = rhs >= -FEAS_SLACK
            up = np.flatnonzero(feas & (colj > PIVOT_TOL))
            lift = np.flatnonzero(~feas & (colj < -PIVOT_TOL))
            rows = np.concatenate([up, lift])
            if rows.size == 0:
                return "unbounded"
            ratios = np.empty(rows.size)
            ratios[: up.size] = np.maximum(rhs[up], 0.0) / colj[up]
            ratios[up.size:] = rhs[lift] / colj[lift]
            if bland:
                best = ratios.min()
                ties = rows[ratios <= best + TOL * max(1.0, abs(best))]
                r = int(min(ties, key=lambda i: self.basis[i]))
            else:
                # Harris two-pass test: bound the step with a small slack, then
                # take the largest pivot element within that bound
                slack = np.empty(rows.size)
                slack[: up.size] = (rhs[up] + FEAS_SLACK) / colj[up]
                slack[up.size:] = (rhs[lift] - FEAS_SLACK) / colj[lift]
                theta = slack.min()
                within = np.flatnonzero(ratios <= theta)
                k = within[np.argmax(np.abs(colj[rows[within]]))]
                r = int(rows[k])
                best = ratios[k]
            degenerate_run = degenerate_run + 1 if best <= TOL else 0
            self.pivot(r, j)
            since_rebuild += 1
            if since_rebuild >= REFRESH_EVERY:
                since_rebuild = 0
                self._rebuild()
                self.set_cost(cost_fn(self))
                if np.min(self.x_basic(), initial=0.0) < -FEAS_TOL and not self._phase1:
                    return "lost"

    _phase1 = False


def _standard_form(p: LpProblem):
    """Map to ``min c's  s.t.  A s (<=|=) b,  s >= 0``.

    Returns the pieces needed to recover ``x = offset + recover @ s``.
    """
    n = p.n
    lo, hi = p.lower(), p.upper()
    cols = []  # (original index, sign)
    offset = np.zeros(n)
    extra_rows, extra_rhs = [], []
    for j in range(n):
        if np.isfinite(lo[j]):
            offset[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(hi[j]):
                extra_rows.append(len(cols) - 1)
                extra_rhs.append(hi[j] - lo[j])
        elif np.isfinite(hi[j]):
            offset[j] = hi[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    recover = np.zeros((n, ns))
    for k, (j, sgn) in enumerate(cols):
        recover[j, k] = sgn
    c_s = p.c @ recover
    A_ub = p.A_ub @ recover
    b_ub = p.b_ub - p.A_ub @ offset
    if extra_rows:
        Ab = np.zeros((len(extra_rows), ns))
        Ab[np.arange(len(extra_rows)), extra_rows] = 1.0
        A_ub = np.vstack([A_ub, Ab])
        b_ub = np.concatenate([b_ub, extra_rhs])
    A_eq = p.A_eq @ recover
    b_eq = p.b_eq - p.A_eq @ offset
    const = float(p.c @ offset)
    return c_s, A_ub, b_ub, A_eq, b_eq, offset, recover, const


def solve(p: LpProblem) -> LpSolution:
    c_s, A_ub, b_ub, A_eq, b_eq, offset, recover, const = _standard_form(p)
    ns = c_s.size
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: structural | slacks (one per ub row) | artificials
    A = np.zeros((m, ns + m_ub))
    A[:m_ub, :ns] = A_ub
    A[:m_ub, ns:] = np.eye(m_ub)
    A[m_ub:, :ns] = A_eq
    b = np.concatenate([b_ub, b_eq])
    flip = b < 0
    A[flip] *= -1.0
    b = np.where(flip, -b, b)
    # equilibrate rows; this leaves the solution unchanged
    rs = np.max(np.abs(A), axis=1, initial=0.0)
    rs[rs == 0.0] = 1.0
    A /= rs[:, None]
    b = b / rs

    basis = [-1] * m
    for i in range(m_ub):
        if not flip[i]:
            basis[i] = ns + i
    need_art = [i for i in range(m) if basis[i] < 0]
    n_art = len(need_art)
    nt = ns + m_ub + n_art
    A_full = np.zeros((m, nt))
    A_full[:, : ns + m_ub] = A
    for k, i in enumerate(need_art):
        A_full[i, ns + m_ub + k] = 1.0
        basis[i] = ns + m_ub + k

    tab = _Tableau(A_full, b, basis)
    is_art = np.zeros(nt, dtype=bool)
    is_art[ns + m_ub:] = True
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    cost2 = np.zeros(nt)
    cost2[:ns] = c_s

    def phase1_cost(t: _Tableau) -> np.ndarray:
        # sum of artificials minus sum of (round-off) negative basic variables
        cost = is_art.astype(float)
        xb = t.x_basic()
        for i in np.flatnonzero(xb < -FEAS_SLACK):
            cost[t.basis[i]] -= 1.0
        return cost

    def infeasibility(t: _Tableau) -> float:
        xb = t.x_basic()
        art = np.array([is_art[j] for j in t.basis], dtype=bool)
        return float(np.sum(xb[art]) - np.sum(np.minimum(xb, 0.0)[~art])) if t.m else 0.0

    def run_phase1(first: bool) -> bool:
        tab._phase1 = True
        allowed = np.ones(nt, dtype=bool) if first else ~is_art
        tab.iterate(allowed, phase1_cost)
        tab._phase1 = False
        if infeasibility(tab) > FEAS_TOL * scale:
            return False
        # drive zero-level artificials out of the basis, dropping redundant rows
        keep = []
        for i in range(tab.m):
            if is_art[tab.basis[i]]:
                row = tab.T[i, :nt]
                cand = np.flatnonzero((np.abs(row) > PIVOT_TOL) & ~is_art)
                if cand.size:
                    tab.pivot(i, int(cand[np.argmax(np.abs(row[cand]))]))
                    keep.append(i)
            else:
                keep.append(i)
        if len(keep) < tab.m:
            tab.drop_rows(keep)
        return True

    if n_art and not run_phase1(first=True):
        return LpSolution(LpStatus.INFEASIBLE, pivots=tab.pivots, infeasible_rows=_art_rows(tab, is_art))

    for _ in range(MAX_REFRESH_ROUNDS):
        outcome = tab.iterate(~is_art, lambda t: cost2)
        if outcome == "unbounded":
            return LpSolution(LpStatus.UNBOUNDED, pivots=tab.pivots)
        if outcome == "optimal" and np.min(tab.x_basic(), initial=0.0) >= -FEAS_TOL:
            break
        # round-off left the basis infeasible: restore feasibility, then resume
        if not run_phase1(first=False):
            return LpSolution(LpStatus.INFEASIBLE, pivots=tab.pivots, infeasible_rows=_art_rows(tab, is_art))
    else:
        raise LpNumericalError("simplex could not keep a feasible basis")

    s = np.zeros(nt)
    s[tab.basis] = np.maximum(tab.x_basic(), 0.0)
    if np.any(s[is_art] > FEAS_TOL * scale):
        raise LpNumericalError("artificial variable left positive after phase 2")
    x = offset + recover @ s[:ns]
    if p.residual(x) > FEAS_TOL * scale:
        raise LpNumericalError(f"solution violates constraints by {p.residual(x):.3g}")
    return LpSolution(LpStatus.OPTIMAL, x=x, objective=float(p.c @ x), pivots=tab.pivots)


def _art_rows(tab: _Tableau, is_art: np.ndarray) -> list:
    return [i for i in range(tab.m) if is_art[tab.basis[i]] and tab.x_basic()[i] > TOL]


def dump(p: LpProblem, path) -> None:
    """Write the problem as fixed-format text for cross-checking elsewhere."""
    fmt = "%.17g"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"n {p.n}\n")
        fh.write("c " + " ".join(fmt % v for v in p.c) + "\n")
        for (lo, hi) in p.bounds:
            fh.write(f"bound {fmt % lo} {fmt % hi}\n")
        for row, rhs in zip(p.A_ub, p.b_ub):
            fh.write("ub " + " ".join(fmt % v for v in row) + f" <= {fmt % rhs}\n")
        for row, rhs in zip(p.A_eq, p.b_eq):
            fh.write("eq " + " ".join(fmt % v for v in row) + f" = {fmt % rhs}\n")
