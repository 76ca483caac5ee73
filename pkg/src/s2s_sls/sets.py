"""Axis-aligned boxes and their half-space form.

Every constraint and disturbance set used by the stepping controller is an
interval product, so boxes are the working type. ``Polytope`` only exists as
the ``G x <= g`` form handed to the synthesis LP.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MAX_VERTEX_DIM = 12


@dataclass(frozen=True)
class BoxSet:
    """Closed box ``{x : lo <= x <= hi}``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"lo and hi must be vectors of equal length, got {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError(f"empty box: lo={lo} exceeds hi={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def symmetric(cls, half_width) -> "BoxSet":
        h = np.abs(np.atleast_1d(np.asarray(half_width, dtype=float)))
        return cls(-h, h)

    @classmethod
    def point(cls, x) -> "BoxSet":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x, x)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def scale(self, factor: float) -> "BoxSet":
        """Scale both bounds about the origin."""
        if factor < 0:
            raise ValueError("scale factor must be nonnegative")
        return BoxSet(self.lo * factor, self.hi * factor)

    def intersect(self, other: "BoxSet") -> "BoxSet":
        _check_dims(self, other)
        return BoxSet(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi))

    def issubset(self, other: "BoxSet", tol: float = 0.0) -> bool:
        _check_dims(self, other)
        return bool(np.all(self.lo >= other.lo - tol) and np.all(self.hi <= other.hi + tol))

    def __eq__(self, other):
        if not isinstance(other, BoxSet):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        return f"BoxSet(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


@dataclass(frozen=True)
class Polytope:
    """H-representation ``{x : G x <= g}``."""

    G: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        if G.shape[0] != g.shape[0]:
            raise ValueError(f"G has {G.shape[0]} rows but g has length {g.shape[0]}")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.G @ x <= self.g + tol))


def _check_dims(a: BoxSet, b: BoxSet) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def minkowski_sum(a: BoxSet, b: BoxSet) -> BoxSet:
    _check_dims(a, b)
    return BoxSet(a.lo + b.lo, a.hi + b.hi)


def shift(s: BoxSet, c) -> BoxSet:
    """Translate a box by ``-c``."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != s.lo.shape:
        raise ValueError(f"dimension mismatch: box has dim {s.dim}, offset has shape {c.shape}")
    return BoxSet(s.lo - c, s.hi - c)


def to_halfspaces(s: BoxSet) -> Polytope:
    """Rows ``(+e_i, hi_i)`` for every coordinate, then ``(-e_i, -lo_i)``."""
    eye = np.eye(s.dim)
    return Polytope(np.vstack([eye, -eye]), np.concatenate([s.hi, -s.lo]))


def contains(s: BoxSet, x, tol: float = 0.0) -> bool:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != s.lo.shape:
        raise ValueError(f"dimension mismatch: box has dim {s.dim}, point has shape {x.shape}")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return bool(np.all(x >= s.lo - tol) and np.all(x <= s.hi + tol))


def vertices(s: BoxSet) -> list[np.ndarray]:
    """All ``2**dim`` corners; coordinate 0 toggles fastest, lo before hi."""
    if s.dim > MAX_VERTEX_DIM:
        raise ValueError(f"refusing to enumerate 2**{s.dim} vertices (max dim {MAX_VERTEX_DIM})")
    out = []
    for bits in itertools.product((0, 1), repeat=s.dim):
        bits = bits[::-1]
        out.append(np.where(np.array(bits, dtype=bool), s.hi, s.lo))
    return out


def linear_image_box(M, s: BoxSet) -> BoxSet:
    """Tightest box containing ``{M x : x in s}``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    c = M @ s.center
    h = np.abs(M) @ s.half_width
    return BoxSet(c - h, c + h)


def mrpi_outer(A, W: BoxSet, n_terms: int = 50, inflation: float = 0.05) -> BoxSet:
    """Box around the truncated sum ``W + A W + ... + A^(n-1) W``, scaled by ``1 + inflation``.

    This is only a starting proposal for the admissible error set at push
    arrival. It is not the minimal RPI set.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (W.dim, W.dim):
        raise ValueError(f"A must be {W.dim}x{W.dim}, got {A.shape}")
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if inflation < 0:
        raise ValueError("inflation must be nonnegative")
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    if rho >= 1.0:
        raise ValueError(f"A is not Schur stable (spectral radius {rho:.6g})")
    total = BoxSet.point(np.zeros(W.dim))
    Ai = np.eye(W.dim)
    for _ in range(n_terms):
        total = minkowski_sum(total, linear_image_box(Ai, W))
        Ai = A @ Ai
    return total.scale(1.0 + inflation)
