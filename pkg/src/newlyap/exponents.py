"""Lyapunov exponent estimators.

Classical exponents come from the derivative cocycle.  The derivative-free
exponents come from dynamical-ball suprema: for each horizon ``n`` and ball
radius ``delta`` of a :class:`Schedule` the sup of ``log Delta`` is taken
over the surviving candidates, the ``delta -> 0`` limit is replaced by the
smallest radius that still holds candidates, and the ``limsup`` over ``n``
by a maximum over the last ``tail_window`` horizons.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .dynball import (
    BallCandidate, Ladder, SupEstimate, admissible, ball_directions, line_directions,
    offsets_for, track_offsets, unit,
)
from .errors import EmptyCandidateSet, NewLyapError, NoHyperbolicity, NotDifferentiable
from .geometry import ClosedDisc, Plane, check_in_domain, norm
from .maps import MapObject, evaluate, evaluate_inverse, iterate, jacobian

#: positivity gate on the classical exponent before an Oseledets frame is trusted
HYPERBOLICITY_GATE = 0.05


# ---------------------------------------------------------------------------
# schedules and results


@dataclass(frozen=True)
class Schedule:
    n_values: tuple[int, ...] = (5, 10, 15, 20, 25, 30)
    delta_values: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    directions: int = 64
    ladder: Optional[Ladder] = None
    tail_window: int = 3

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_values)
        ds = tuple(float(d) for d in self.delta_values)
        object.__setattr__(self, "n_values", ns)
        object.__setattr__(self, "delta_values", ds)
        if not ns or any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n_values must be a nonempty increasing list of positive integers")
        if not ds or any(b >= a for a, b in zip(ds, ds[1:])):
            raise ValueError("delta_values must be a nonempty decreasing list")
        if any(not d > 1e-6 for d in ds):
            raise ValueError("delta_values must all exceed 1e-6")
        if self.directions < 8:
            raise ValueError("directions must be at least 8")
        if not 1 <= self.tail_window <= len(ns):
            raise ValueError("tail_window must be between 1 and len(n_values)")
        if self.ladder is None:
            object.__setattr__(self, "ladder", Ladder.for_delta(ds[-1]))
        if not self.ladder.offsets()[0] < ds[-1]:
            raise ValueError("ladder offsets must be below the smallest delta")

    @property
    def n_max(self) -> int:
        return self.n_values[-1]

    @property
    def tail(self) -> tuple[int, ...]:
        return self.n_values[-self.tail_window:]


@dataclass
class ExponentEstimate:
    value: float
    grid: dict[tuple[int, float], Optional[SupEstimate]]
    per_n_extrapolation: list[tuple[int, Optional[float]]]
    diagnostics: dict = field(default_factory=dict)

    def grid_rows(self) -> list[dict]:
        """Plot-ready rows: n, delta, sup_log_delta, candidates, s_n_over_n."""
        s_of = dict(self.per_n_extrapolation)
        rows = []
        for (n, delta), cell in sorted(self.grid.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
            s = s_of.get(n)
            rows.append({
                "n": n,
                "delta": delta,
                "sup_log_delta": None if cell is None else cell.value,
                "candidates": 0 if cell is None else cell.candidate_count,
                "s_n_over_n": None if s is None else s / n,
            })
        return rows


@dataclass(frozen=True)
class OseledetsFrame:
    e_u: np.ndarray
    e_s: np.ndarray
    chi_plus: float


@dataclass(frozen=True)
class LambdaEstimate:
    value: float
    sample_points: int
    standard_error: float
    negative_clamp_count: int
    excluded_points: int = 0
    raw_mean: float = 0.0


@dataclass(frozen=True)
class Quadrature:
    sample_count: int = 400
    seed: int = 0
    point_source: str = "uniform"

    def __post_init__(self):
        if self.sample_count < 100:
            raise ValueError("quadrature needs at least 100 sample points")
        if self.point_source not in ("uniform", "grid"):
            raise ValueError("point_source must be 'uniform' or 'grid'")


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("NEWLYAP_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Ordered map; results never depend on the thread count."""
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# classical exponents


def _orbit_jacobians(m: MapObject, x, n: int) -> np.ndarray:
    if m.derivative is None:
        raise NotDifferentiable(f"map {m.label!r} has no derivative")
    orbit = iterate(m, x, n)
    return np.asarray(m.derivative(orbit[:-1]))


def classical_top_profile(m: MapObject, x, n: int) -> np.ndarray:
    """``(1/j) log ||Df^j_x||`` for ``j = 1..n`` via a renormalised cocycle product."""
    jacs = _orbit_jacobians(m, x, n)
    prod = np.eye(2)
    log_scale = 0.0
    out = np.empty(n)
    for j in range(n):
        prod = jacs[j] @ prod
        s = float(np.max(np.abs(prod)))
        prod /= s
        log_scale += math.log(s)
        out[j] = (log_scale + math.log(np.linalg.norm(prod, 2))) / (j + 1)
    return out


def classical_top_exponent(m: MapObject, x, n: int) -> float:
    if n < 1:
        raise ValueError("n must be positive")
    return float(classical_top_profile(m, x, n)[-1])


def classical_directional_profile(m: MapObject, x, v, n: int) -> np.ndarray:
    jacs = _orbit_jacobians(m, x, n)
    w = unit(v)
    log_scale = 0.0
    out = np.empty(n)
    for j in range(n):
        w = jacs[j] @ w
        s = norm(w)
        w = w / s
        log_scale += math.log(s)
        out[j] = log_scale / (j + 1)
    return out


def classical_directional_exponent(m: MapObject, x, v, n: int) -> float:
    if n < 1:
        raise ValueError("n must be positive")
    return float(classical_directional_profile(m, x, v, n)[-1])


def classical_tail_max(m: MapObject, x, s: Schedule) -> float:
    """Classical top exponent with the same finite-n limsup surrogate as the schedule."""
    prof = classical_top_profile(m, x, s.n_max)
    return float(max(prof[n - 1] for n in s.tail))


# ---------------------------------------------------------------------------
# dynamical-ball exponents


def _estimate(m: MapObject, x: np.ndarray, dirs: np.ndarray, s: Schedule) -> ExponentEstimate:
    offsets, which = offsets_for(dirs, s.ladder)
    ok = admissible(m, x, offsets)
    offsets, which = offsets[ok], which[ok]
    if len(offsets) == 0:
        raise EmptyCandidateSet("no admissible candidate offsets")
    _, dists = track_offsets(m, x, offsets, s.n_max)
    ns = np.array(s.n_values, dtype=np.int64)
    ds = np.array(s.delta_values, dtype=np.float64)
    values, counts, argmax = _kernels.grid_reduce(dists, ns, ds)

    grid: dict[tuple[int, float], Optional[SupEstimate]] = {}
    per_n: list[tuple[int, Optional[float]]] = []
    empty_cells = []
    mono = 0
    for i, n in enumerate(s.n_values):
        for k, delta in enumerate(s.delta_values):
            if counts[i, k] == 0:
                grid[(n, delta)] = None
                empty_cells.append((n, delta))
                continue
            j = int(argmax[i, k])
            cand = BallCandidate(y=m.domain.wrap(x + offsets[j]), initial_offset=offsets[j],
                                 on_line=dirs[which[j]])
            grid[(n, delta)] = SupEstimate(float(values[i, k]), n, delta, int(counts[i, k]), cand)
        row = [grid[(n, d)] for d in s.delta_values]
        filled = [c.value for c in row if c is not None]
        # the sup may only shrink with the ball
        mono += sum(1 for a, b in zip(filled, filled[1:]) if b > a)
        per_n.append((n, filled[-1] if filled else None))

    tail = [(n, v) for n, v in per_n if n in s.tail and v is not None]
    if not tail:
        raise EmptyCandidateSet("every tail horizon lost all candidates")
    rates = [v / n for n, v in tail]
    return ExponentEstimate(
        value=float(max(rates)),
        grid=grid,
        per_n_extrapolation=per_n,
        diagnostics={
            "empty_cells": empty_cells,
            "monotonicity_violations": mono,
            "tail_spread": float(max(rates) - min(rates)),
            "candidates": int(len(offsets)),
        },
    )


def new_directional_exponent(m: MapObject, x, v, s: Schedule | None = None) -> ExponentEstimate:
    """Derivative-free exponent along the line through x with direction v."""
    s = Schedule() if s is None else s
    x = check_in_domain(m.domain, x)
    return _estimate(m, x, line_directions(v), s)


def new_top_exponent(m: MapObject, x, s: Schedule | None = None,
                     extra_directions: Sequence = ()) -> ExponentEstimate:
    """Derivative-free top exponent: the sup runs over the whole ball.

    ``extra_directions`` are added to the fan ahead of it, so that line
    estimates along them use a subset of the same candidates.
    """
    s = Schedule() if s is None else s
    x = check_in_domain(m.domain, x)
    return _estimate(m, x, ball_directions(s.directions, extra_directions), s)


# ---------------------------------------------------------------------------
# Oseledets directions


def _canonical(v: np.ndarray) -> np.ndarray:
    v = v / norm(v)
    lead = v[0] if v[0] != 0 else v[1]
    return -v if lead < 0 else v


def estimate_oseledets_directions(m: MapObject, x, n: int = 40,
                                  seed_vector=(math.cos(1.0), math.sin(1.0))) -> OseledetsFrame:
    """Unstable and stable directions at x by forward/backward power iteration."""
    if m.derivative is None:
        raise NotDifferentiable(f"map {m.label!r} has no derivative")
    if m.inverse is None:
        raise ValueError(f"map {m.label!r} has no inverse")
    x = check_in_domain(m.domain, x)
    chi = classical_top_exponent(m, x, n)
    if not chi > HYPERBOLICITY_GATE:
        raise NoHyperbolicity(f"classical exponent {chi:.3g} does not exceed {HYPERBOLICITY_GATE}")

    # unstable: push a generic vector from f^{-n} x forward to x
    back = [x]
    for _ in range(n):
        back.append(evaluate_inverse(m, back[-1]))
    w = unit(seed_vector)
    for p in reversed(back[1:]):
        w = jacobian(m, p) @ w
        w = w / norm(w)
    e_u = _canonical(w)

    # stable: pull a generic vector back from f^n x to x with inverse Jacobians
    fwd = iterate(m, x, n)
    w = unit(seed_vector)
    for p in reversed(fwd[:-1]):
        w = np.linalg.solve(jacobian(m, p), w)
        w = w / norm(w)
    e_s = _canonical(w)

    angle = math.acos(min(1.0, abs(float(e_u @ e_s))))
    if angle < 1e-6:
        raise NoHyperbolicity("unstable and stable directions are parallel")
    return OseledetsFrame(e_u=e_u, e_s=e_s, chi_plus=chi)


# ---------------------------------------------------------------------------
# integrated exponent


def quadrature_points(m: MapObject, q: Quadrature) -> tuple[np.ndarray, float]:
    """Sample points and the area they represent.

    Maps that declare a support (the identity off a union of discs) are sampled
    inside the support only: the integrand vanishes elsewhere.  The same local
    pattern in the unit disc is reused across discs, ``j``-th point in disc
    ``j mod len(support)``.
    """
    rng = np.random.default_rng(q.seed)
    if m.support:
        unit_disc = ClosedDisc((0.0, 0.0), 1.0)
        local = unit_disc.sample(rng, q.sample_count) if q.point_source == "uniform" \
            else unit_disc.grid(q.sample_count)
        discs = m.support
        pts = np.array([np.asarray(discs[j % len(discs)].center) + discs[j % len(discs)].radius * u
                        for j, u in enumerate(local)])
        return pts, float(sum(d.area for d in discs))
    if isinstance(m.domain, Plane):
        raise ValueError("cannot integrate over the unbounded plane")
    pts = m.domain.sample(rng, q.sample_count) if q.point_source == "uniform" \
        else m.domain.grid(q.sample_count)
    return pts, float(m.domain.area)


def _retry_point(m: MapObject, q: Quadrature, index: int, attempt: int) -> np.ndarray:
    rng = np.random.default_rng([q.seed, index, attempt])
    if m.support:
        d = m.support[index % len(m.support)]
        return d.sample(rng, 1)[0]
    return m.domain.sample(rng, 1)[0]


def lambda_functional(m: MapObject, s: Schedule | None = None, quadrature: Quadrature | None = None,
                      threads: int | None = None) -> LambdaEstimate:
    """Area integral of the top exponent, negative integrand values clamped to 0."""
    s = Schedule() if s is None else s
    q = Quadrature() if quadrature is None else quadrature
    pts, area = quadrature_points(m, q)

    def one(item):
        index, p = item
        for attempt in range(4):
            try:
                return new_top_exponent(m, p, s).value
            except (NewLyapError, ValueError):
                if attempt == 3:
                    return None
                p = _retry_point(m, q, index, attempt)
        return None

    raw = parallel_map(one, list(enumerate(pts)), threads)
    vals = np.array([v for v in raw if v is not None], dtype=np.float64)
    excluded = sum(v is None for v in raw)
    if vals.size < 2:
        raise EmptyCandidateSet("too few quadrature points produced an estimate")
    clamped = np.maximum(vals, 0.0)
    return LambdaEstimate(
        value=float(area * clamped.mean()),
        sample_points=int(vals.size),
        standard_error=float(area * clamped.std(ddof=1) / math.sqrt(vals.size)),
        negative_clamp_count=int(np.count_nonzero(vals < 0)),
        excluded_points=int(excluded),
        raw_mean=float(vals.mean()),
    )


# ---------------------------------------------------------------------------
# orbit invariance


@dataclass(frozen=True)
class OrbitInvariance:
    base_value: float
    values: tuple[float, ...]
    deviations: tuple[float, ...]


def check_orbit_invariance(m: MapObject, x, s: Schedule | None = None, m_max: int = 5) -> OrbitInvariance:
    """Top-exponent estimates at ``f^j x`` for ``j = 0..m_max`` and their deviation from ``j = 0``."""
    s = Schedule() if s is None else s
    orbit = iterate(m, x, m_max)
    vals = [new_top_exponent(m, p, s).value for p in orbit]
    return OrbitInvariance(
        base_value=vals[0],
        values=tuple(vals[1:]),
        deviations=tuple(abs(v - vals[0]) for v in vals[1:]),
    )


__all__ = [
    "Schedule", "ExponentEstimate", "OseledetsFrame", "LambdaEstimate", "Quadrature",
    "OrbitInvariance", "classical_top_exponent", "classical_top_profile",
    "classical_directional_exponent", "classical_directional_profile", "classical_tail_max",
    "new_directional_exponent", "new_top_exponent", "estimate_oseledets_directions",
    "lambda_functional", "quadrature_points", "check_orbit_invariance", "parallel_map",
    "default_threads", "evaluate",
]
