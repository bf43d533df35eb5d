"""Flat model phase spaces and their metrics.

Every computation happens in one global Euclidean chart.  Points and vectors
are float arrays whose last axis has length 2; all functions here broadcast
over leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainViolation

# slack on the disc boundary so that homothety images of the unit circle,
# exact in real arithmetic, are not rejected after rounding
_DISC_SLACK = 1e-12


def as_point(p) -> np.ndarray:
    """Validate and convert to a float array of shape (..., 2)."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape[-1:] != (2,):
        raise ValueError(f"expected trailing dimension 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point/vector components must be finite")
    return arr


def norm(v) -> np.ndarray | float:
    v = np.asarray(v, dtype=np.float64)
    out = np.hypot(v[..., 0], v[..., 1])
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Plane:
    """The whole Euclidean plane."""

    kind: str = field(default="plane", init=False)

    def contains(self, p) -> np.ndarray | bool:
        p = np.asarray(p, dtype=np.float64)
        out = np.all(np.isfinite(p), axis=-1)
        return bool(out) if out.ndim == 0 else out

    def wrap(self, p):
        return np.asarray(p, dtype=np.float64)

    def wrap_offset(self, e):
        return np.asarray(e, dtype=np.float64)

    @property
    def area(self) -> float:
        return math.inf


@dataclass(frozen=True)
class FlatTorus:
    """The square torus R^2 / (period Z)^2, fundamental domain [0, period)^2."""

    period: float = 1.0
    kind: str = field(default="torus", init=False)

    def __post_init__(self):
        if not (self.period > 0 and math.isfinite(self.period)):
            raise ValueError("torus period must be positive and finite")

    def contains(self, p) -> np.ndarray | bool:
        p = np.asarray(p, dtype=np.float64)
        out = np.all(np.isfinite(p), axis=-1)
        return bool(out) if out.ndim == 0 else out

    def wrap(self, p):
        return np.mod(np.asarray(p, dtype=np.float64), self.period)

    def wrap_offset(self, e):
        """Minimal representative of an offset, components in [-P/2, P/2)."""
        e = np.asarray(e, dtype=np.float64)
        return e - self.period * np.floor(e / self.period + 0.5)

    @property
    def area(self) -> float:
        return self.period**2

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(0.0, self.period, size=(count, 2))

    def grid(self, count: int) -> np.ndarray:
        side = math.ceil(math.sqrt(count))
        ticks = (np.arange(side) + 0.5) * (self.period / side)
        xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True)
class ClosedDisc:
    """Closed Euclidean disc."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    kind: str = field(default="disc", init=False)

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("disc radius must be positive and finite")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def contains(self, p) -> np.ndarray | bool:
        p = np.asarray(p, dtype=np.float64)
        r = np.hypot(p[..., 0] - self.center[0], p[..., 1] - self.center[1])
        out = r <= self.radius * (1.0 + _DISC_SLACK)
        return bool(out) if out.ndim == 0 else out

    def wrap(self, p):
        return np.asarray(p, dtype=np.float64)

    def wrap_offset(self, e):
        return np.asarray(e, dtype=np.float64)

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        # area-uniform: radius ~ R sqrt(U)
        r = self.radius * np.sqrt(rng.uniform(0.0, 1.0, size=count))
        t = rng.uniform(0.0, 2.0 * math.pi, size=count)
        return np.column_stack([self.center[0] + r * np.cos(t), self.center[1] + r * np.sin(t)])

    def grid(self, count: int) -> np.ndarray:
        # square lattice clipped to the disc; refine until at least `count` points survive
        side = math.ceil(math.sqrt(count * 4.0 / math.pi))
        while True:
            ticks = ((np.arange(side) + 0.5) / side * 2.0 - 1.0) * self.radius
            xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
            pts = np.column_stack([xx.ravel(), yy.ravel()])
            pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= self.radius]
            if len(pts) >= count:
                return pts + np.asarray(self.center)
            side += 1


Domain = Union[Plane, FlatTorus, ClosedDisc]


def check_in_domain(d: Domain, p) -> np.ndarray:
    p = as_point(p)
    if not np.all(d.contains(p)):
        raise DomainViolation(f"point(s) outside {d}")
    return p


def displacement(d: Domain, p, q) -> np.ndarray:
    """Vector from p to q; the minimal representative on the torus."""
    p = check_in_domain(d, p)
    q = check_in_domain(d, q)
    return d.wrap_offset(q - p)


def distance(d: Domain, p, q):
    return norm(displacement(d, p, q))
