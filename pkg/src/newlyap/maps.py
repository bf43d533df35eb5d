"""Map zoo, homothety conjugation and the disc-family construction.

A :class:`MapObject` bundles a vectorised forward map with optional exact
derivative and inverse.  Maps may also carry an ``offsets`` kernel computing
``f(x + e) - f(x)`` for a batch of offsets without cancellation; the
dynamical-ball estimators rely on it to resolve separations far below the
absolute precision of the coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .errors import BoundaryMismatch, DiscOverlap, DomainViolation, NotDifferentiable
from .geometry import ClosedDisc, Domain, FlatTorus, Plane, as_point, check_in_domain

ArrayFn = Callable[[np.ndarray], np.ndarray]
OffsetFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class MapObject:
    """A continuous self-map of ``domain``.

    ``forward``, ``inverse`` and ``derivative`` act on arrays of shape
    (..., 2); ``derivative`` returns (..., 2, 2).  ``forward`` may return an
    unwrapped lift on the torus; :func:`evaluate` reduces it.  ``support``,
    when given, lists discs outside of which the map is the identity.
    """

    domain: Domain
    forward: ArrayFn
    label: str
    derivative: Optional[ArrayFn] = None
    inverse: Optional[ArrayFn] = None
    offsets: Optional[OffsetFn] = None
    support: Optional[tuple[ClosedDisc, ...]] = None
    area_preserving: bool = False
    params: dict = field(default_factory=dict)

    def __repr__(self) -> str:
        return f"MapObject({self.label!r}, domain={self.domain})"


def evaluate(m: MapObject, p) -> np.ndarray:
    p = check_in_domain(m.domain, p)
    return m.domain.wrap(m.forward(p))


def evaluate_inverse(m: MapObject, p) -> np.ndarray:
    if m.inverse is None:
        raise ValueError(f"map {m.label!r} has no inverse")
    p = check_in_domain(m.domain, p)
    return m.domain.wrap(m.inverse(p))


def iterate(m: MapObject, p, n: int) -> np.ndarray:
    """Orbit ``[p, f(p), ..., f^n(p)]`` as an (n + 1, 2) array."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    p = check_in_domain(m.domain, p)
    out = np.empty((n + 1,) + p.shape)
    out[0] = p
    for j in range(n):
        out[j + 1] = m.domain.wrap(m.forward(out[j]))
    return out


def jacobian(m: MapObject, p) -> np.ndarray:
    if m.derivative is None:
        raise NotDifferentiable(f"map {m.label!r} has no derivative")
    p = check_in_domain(m.domain, p)
    return np.asarray(m.derivative(p), dtype=np.float64)


def step_offsets(m: MapObject, x: np.ndarray, e: np.ndarray) -> np.ndarray:
    """``f(x + e) - f(x)`` for an (M, 2) batch of offsets at one base point."""
    if m.offsets is not None:
        return m.offsets(x, e)
    fx = m.forward(x)
    return m.domain.wrap_offset(m.forward(x + e) - fx)


# ---------------------------------------------------------------------------
# elementary maps


def _const_jacobian(a: np.ndarray) -> ArrayFn:
    def derivative(p):
        p = np.asarray(p)
        return np.broadcast_to(a, p.shape[:-1] + (2, 2)).copy()

    return derivative


def linear_map(a, domain: Domain | None = None, label: str = "linear",
               area_preserving: bool | None = None) -> MapObject:
    """``p -> A p`` on the plane, or modulo the period on a torus."""
    a = np.array(a, dtype=np.float64).reshape(2, 2)
    domain = Plane() if domain is None else domain
    det = float(np.linalg.det(a))
    ainv = np.linalg.inv(a) if det != 0.0 else None
    if area_preserving is None:
        area_preserving = abs(abs(det) - 1.0) < 1e-12
    return MapObject(
        domain=domain,
        forward=lambda p: np.asarray(p) @ a.T,
        label=label,
        derivative=_const_jacobian(a),
        inverse=(lambda p: np.asarray(p) @ ainv.T) if ainv is not None else None,
        offsets=lambda x, e: K.linear_offsets(a, e),
        area_preserving=area_preserving,
        params={"matrix": a.tolist()},
    )


def identity(domain: Domain | None = None) -> MapObject:
    domain = FlatTorus(1.0) if domain is None else domain
    ident = lambda p: np.array(p, dtype=np.float64)  # noqa: E731
    return MapObject(
        domain=domain,
        forward=ident,
        label="identity",
        derivative=_const_jacobian(np.eye(2)),
        inverse=ident,
        offsets=lambda x, e: np.array(e, dtype=np.float64),
        area_preserving=True,
    )


def rotation(theta: float, domain: ClosedDisc | None = None) -> MapObject:
    """Rigid rotation by ``theta`` about the centre of a disc."""
    domain = ClosedDisc((0.0, 0.0), 1.0) if domain is None else domain
    c = np.asarray(domain.center)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    back = rot.T.copy()
    return MapObject(
        domain=domain,
        forward=lambda p: c + (np.asarray(p) - c) @ rot.T,
        label="rotation",
        derivative=_const_jacobian(rot),
        inverse=lambda p: c + (np.asarray(p) - c) @ back.T,
        offsets=lambda x, e: K.linear_offsets(rot, e),
        area_preserving=True,
        params={"theta": theta},
    )


def translation(alpha: float, beta: float, period: float = 1.0) -> MapObject:
    t = np.array([alpha, beta], dtype=np.float64)
    return MapObject(
        domain=FlatTorus(period),
        forward=lambda p: np.asarray(p) + t,
        label="translation",
        derivative=_const_jacobian(np.eye(2)),
        inverse=lambda p: np.asarray(p) - t,
        offsets=lambda x, e: np.array(e, dtype=np.float64),
        area_preserving=True,
        params={"alpha": alpha, "beta": beta},
    )


CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])


def cat_map() -> MapObject:
    m = linear_map(CAT_MATRIX, FlatTorus(1.0), label="cat", area_preserving=True)
    return m


def standard_map(k: float) -> MapObject:
    """Chirikov standard map on the unit torus, coordinates (angle, action).

    ``y' = y + K/(2 pi) sin(2 pi x)``, ``x' = x + y'``.
    """

    def derivative(p):
        p = np.asarray(p)
        c = k * np.cos(2.0 * math.pi * p[..., 0])
        out = np.empty(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0 + c
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = c
        out[..., 1, 1] = 1.0
        return out

    def inverse(p):
        p = np.asarray(p)
        x = p[..., 0] - p[..., 1]
        y = p[..., 1] - k / (2.0 * math.pi) * np.sin(2.0 * math.pi * x)
        return np.stack([x, y], axis=-1)

    return MapObject(
        domain=FlatTorus(1.0),
        forward=lambda p: K.standard_forward(k, np.asarray(p)),
        label="standard",
        derivative=derivative,
        inverse=inverse,
        offsets=lambda x, e: K.standard_offsets(k, x, e),
        area_preserving=True,
        params={"K": k},
    )


def example_map() -> MapObject:
    """Four-branch piecewise-linear plane map, not differentiable at the origin.

    Branches, first match wins::

        (2x, 1.5x + 0.5y)   if x(y - x) > 0
        (3x - y, 2y)        if x(y - x) < 0
        (3x, 0.5y)          if xy <= 0
        (2x, 2y)            if x = y
    """
    return MapObject(
        domain=Plane(),
        forward=lambda p: K.example_forward(np.asarray(p, dtype=np.float64)),
        label="example",
        offsets=lambda x, e: K.example_offsets(x, e),
    )


def twist(center, inner: float, outer: float, winding: int,
          domain: ClosedDisc | None = None) -> MapObject:
    """Annular shear: rotate about ``center`` by ``2 pi winding (r - inner)/(outer - inner)``.

    Identity outside the annulus; continuous because the rotation angle is a
    whole number of turns on both boundary circles.
    """
    if winding != int(winding) or winding == 0:
        raise ValueError("winding must be a nonzero integer")
    if not 0.0 <= inner < outer:
        raise ValueError("need 0 <= inner < outer")
    domain = ClosedDisc((0.0, 0.0), 1.0) if domain is None else domain
    cx, cy = float(center[0]), float(center[1])
    reach = math.hypot(cx - domain.center[0], cy - domain.center[1]) + outer
    if reach > domain.radius:
        raise ValueError("annulus must lie inside the domain disc")
    w = float(winding)
    return MapObject(
        domain=domain,
        forward=lambda p: K.twist_forward(cx, cy, inner, outer, w, np.asarray(p, dtype=np.float64)),
        label="twist",
        inverse=lambda p: K.twist_forward(cx, cy, inner, outer, -w, np.asarray(p, dtype=np.float64)),
        offsets=lambda x, e: K.twist_offsets(cx, cy, inner, outer, w, x, e),
        area_preserving=True,
        params={"center": [cx, cy], "inner": inner, "outer": outer, "winding": int(winding)},
    )


def compose(*maps: MapObject, label: str | None = None) -> MapObject:
    """``compose(f, g, h) = f o g o h`` (rightmost applied first)."""
    if not maps:
        raise ValueError("need at least one map")
    order = maps[::-1]
    domain = order[0].domain

    def forward(p):
        for m in order:
            p = m.forward(p)
        return p

    def offsets(x, e):
        for m in order:
            e = step_offsets(m, x, e)
            x = m.forward(x)
        return e

    inverse = None
    if all(m.inverse is not None for m in maps):
        def inverse(p):
            for m in maps:
                p = m.inverse(p)
            return p

    return MapObject(
        domain=domain,
        forward=forward,
        label=label or "o".join(m.label for m in maps),
        inverse=inverse,
        offsets=offsets,
        area_preserving=all(m.area_preserving for m in maps),
        params={"parts": [m.params for m in maps]},
    )


def disc_standin(windings=(1, -1), separation: float = 0.35, inner: float = 0.25,
                 outer: float = 0.6) -> MapObject:
    """Chaotic area-preserving stand-in for a disc diffeomorphism fixing the boundary.

    A linked twist map: two annular shears centred at ``(-separation, 0)`` and
    ``(separation, 0)`` whose annuli overlap, applied one after the other.
    Everything within ``1 - (separation + outer)`` of the unit circle is fixed.
    """
    w1, w2 = windings
    t1 = twist((-separation, 0.0), inner, outer, w1)
    t2 = twist((separation, 0.0), inner, outer, w2)
    m = compose(t2, t1, label="disc_standin")
    return MapObject(
        domain=m.domain, forward=m.forward, label=m.label, inverse=m.inverse,
        offsets=m.offsets, area_preserving=True,
        params={"windings": [int(w1), int(w2)], "separation": separation,
                "inner": inner, "outer": outer},
    )


def conjugate_by_homothety(m: MapObject, center, ratio: float) -> MapObject:
    """``l o m o l^-1`` with ``l(p) = center + ratio (p - c0)``, ``c0`` the centre of m's disc."""
    if not isinstance(m.domain, ClosedDisc):
        raise ValueError("conjugation expects a map on a ClosedDisc")
    if not ratio > 0:
        raise ValueError("ratio must be positive")
    c = np.array(center, dtype=np.float64)
    c0 = np.asarray(m.domain.center)
    to_local = lambda p: (np.asarray(p) - c) / ratio + c0  # noqa: E731
    to_global = lambda q: c + ratio * (np.asarray(q) - c0)  # noqa: E731
    domain = ClosedDisc(tuple(c), ratio * m.domain.radius)
    derivative = None
    if m.derivative is not None:
        derivative = lambda p: m.derivative(to_local(p))  # noqa: E731
    inverse = None
    if m.inverse is not None:
        inverse = lambda p: to_global(m.inverse(to_local(p)))  # noqa: E731
    support = None
    if m.support is not None:
        support = tuple(ClosedDisc(tuple(to_global(np.asarray(s.center))), ratio * s.radius)
                        for s in m.support)
    return MapObject(
        domain=domain,
        forward=lambda p: to_global(m.forward(to_local(p))),
        label=f"{m.label}@homothety",
        derivative=derivative,
        inverse=inverse,
        offsets=lambda x, e: ratio * step_offsets(m, to_local(x), np.asarray(e) / ratio),
        support=support,
        area_preserving=m.area_preserving,
        params={"base": m.params, "center": c.tolist(), "ratio": ratio},
    )


# ---------------------------------------------------------------------------
# disc families


@dataclass(frozen=True, eq=False)
class DiscFamilySpec:
    n: int
    k: float
    base_map: MapObject
    ambient: Domain = field(default_factory=lambda: FlatTorus(1.0))

    @property
    def radius(self) -> float:
        return self.k / (10.0 * self.n)


def disc_layout(spec: DiscFamilySpec) -> tuple[np.ndarray, float, float, np.ndarray]:
    """Centres of the n x n grid, disc radius, cell side, and the grid origin."""
    if spec.n < 1 or spec.n != int(spec.n):
        raise ValueError("n must be a positive integer")
    if not spec.k > 0:
        raise ValueError("k must be positive")
    amb = spec.ambient
    if isinstance(amb, FlatTorus):
        side, origin = amb.period, np.zeros(2)
    elif isinstance(amb, ClosedDisc):
        side = amb.radius * math.sqrt(2.0)
        origin = np.asarray(amb.center) - side / 2.0
    else:
        side, origin = 1.0, np.zeros(2)
    n = int(spec.n)
    cell = side / n
    r = spec.radius
    if cell < 4.0 * r:
        raise DiscOverlap(f"grid spacing {cell:g} is below 4 radii ({4 * r:g}); reduce k")
    ticks = (np.arange(n) + 0.5) * cell
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    centers = origin + np.column_stack([xx.ravel(), yy.ravel()])
    return centers, r, cell, origin


def _check_layout(centers: np.ndarray, r: float, ambient: Domain) -> None:
    if len(centers) > 1:
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= 2.0 * r:
            raise DiscOverlap("discs intersect")
    if isinstance(ambient, ClosedDisc):
        reach = np.hypot(centers[:, 0] - ambient.center[0], centers[:, 1] - ambient.center[1]) + r
        if np.any(reach > ambient.radius):
            raise DiscOverlap("disc leaves the ambient disc")
    elif isinstance(ambient, FlatTorus):
        if np.any(centers - r < 0) or np.any(centers + r > ambient.period):
            raise DiscOverlap("disc crosses the fundamental domain boundary")


def check_boundary_fixed(m: MapObject, samples: int = 1000, tol: float = 1e-9) -> float:
    """Max displacement of the map on the boundary circle of its disc domain."""
    d = m.domain
    t = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    pts = np.column_stack([d.center[0] + d.radius * np.cos(t), d.center[1] + d.radius * np.sin(t)])
    moved = float(np.max(np.hypot(*(m.forward(pts) - pts).T)))
    if moved > tol:
        raise BoundaryMismatch(f"base map moves boundary points by up to {moved:g}")
    return moved


def build_disc_family(spec: DiscFamilySpec) -> MapObject:
    """Identity outside ``n^2`` discs of radius ``k/(10 n)``, conjugated base map inside each."""
    base = spec.base_map
    if not isinstance(base.domain, ClosedDisc) or base.domain.radius != 1.0:
        raise ValueError("base map must live on a unit ClosedDisc")
    check_boundary_fixed(base)
    centers, r, cell, origin = disc_layout(spec)
    _check_layout(centers, r, spec.ambient)
    n = int(spec.n)
    c0 = np.asarray(base.domain.center)

    def disc_index(p):
        p = np.asarray(p, dtype=np.float64)
        ij = np.clip(np.floor((p - origin) / cell).astype(np.int64), 0, n - 1)
        idx = ij[..., 0] * n + ij[..., 1]
        c = centers[idx]
        inside = np.hypot(p[..., 0] - c[..., 0], p[..., 1] - c[..., 1]) <= r
        return np.where(inside, idx, -1)

    def forward(p):
        p = np.asarray(p, dtype=np.float64)
        out = p.copy()
        idx = disc_index(p)
        mask = idx >= 0
        if np.any(mask):
            c = centers[idx[mask]]
            out[mask] = c + r * (base.forward((p[mask] - c) / r + c0) - c0)
        return out

    def inverse(p):
        p = np.asarray(p, dtype=np.float64)
        out = p.copy()
        idx = disc_index(p)
        mask = idx >= 0
        if np.any(mask):
            c = centers[idx[mask]]
            out[mask] = c + r * (base.inverse((p[mask] - c) / r + c0) - c0)
        return out

    def offsets(x, e):
        e = np.asarray(e, dtype=np.float64)
        ix = int(disc_index(x))
        y = x + e
        iy = disc_index(y)
        out = np.array(e, copy=True)
        same = (iy == ix) & (ix >= 0)
        if np.any(same):
            c = centers[ix]
            out[same] = r * step_offsets(base, (x - c) / r + c0, e[same] / r)
        other = ~same
        if np.any(other):
            # at most one of x, y lies in a disc here; g(y) - g(x) = (g(y) - y) + e - (g(x) - x)
            moved_y = forward(y[other]) - y[other]
            out[other] = moved_y + e[other]
            if ix >= 0:
                out[other] -= forward(x) - x
        return out

    support = tuple(ClosedDisc(tuple(c), r) for c in centers)
    return MapObject(
        domain=spec.ambient,
        forward=forward,
        label=f"disc_family(n={n})",
        inverse=inverse if base.inverse is not None else None,
        offsets=offsets,
        support=support,
        area_preserving=base.area_preserving,
        params={"n": n, "k": spec.k, "radius": r, "base": base.params},
    )


def total_disc_area(m: MapObject) -> float:
    if m.support is None:
        return 0.0
    return float(sum(d.area for d in m.support))


# ---------------------------------------------------------------------------
# catalogue

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def zoo(theta: float = 1.0, alpha: float = GOLDEN, beta: float = math.sqrt(2.0) - 1.0,
        k_standard: float = 1.5, windings=(1, -1)) -> dict[str, MapObject]:
    return {
        "identity": identity(),
        "rotation": rotation(theta),
        "translation": translation(alpha, beta),
        "cat": cat_map(),
        "standard": standard_map(k_standard),
        "example": example_map(),
        "disc_standin": disc_standin(windings),
        "diag": linear_map([[2.0, 0.0], [0.0, 0.5]], label="diag", area_preserving=True),
    }


def lookup(name: str, **params) -> MapObject:
    catalogue = zoo(**params)
    if name not in catalogue:
        raise KeyError(f"unknown map {name!r}; choose from {sorted(catalogue)}")
    return catalogue[name]


__all__ = [
    "MapObject", "DiscFamilySpec", "evaluate", "evaluate_inverse", "iterate", "jacobian",
    "step_offsets", "linear_map", "identity", "rotation", "translation", "cat_map",
    "standard_map", "example_map", "twist", "compose", "disc_standin",
    "conjugate_by_homothety", "build_disc_family", "disc_layout", "check_boundary_fixed",
    "total_disc_area", "zoo", "lookup", "DomainViolation", "as_point",
]
