"""Dynamical balls, candidate generation and the divergence ratio.

The supremum over the dynamical ball ``B_x(delta, n)`` is replaced by a
maximum over a finite candidate set: points ``x + eps_j u`` for a geometric
ladder of offsets ``eps_j`` and a fan of unit directions ``u``.  Candidate
orbits are followed through the maps' offset kernels, so separations keep
full relative precision even when ``eps_j`` is far below the resolution of
the base coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateSeparation, EmptyCandidateSet
from .geometry import as_point, check_in_domain, distance, norm
from .maps import MapObject, iterate, step_offsets

#: minimum separation for ratios computed from absolute coordinates
UNDERFLOW_GUARD = 1e-12
#: relative tolerance under which two initial offsets count as the same candidate
DEDUP_RTOL = 1e-14


@dataclass(frozen=True)
class Ladder:
    """Geometric offsets ``top * ratio**j`` for ``j = 0 .. count-1``."""

    top: float = 1e-6
    ratio: float = 10.0**-0.5
    count: int = 30

    def __post_init__(self):
        if not (self.top > 0 and 0 < self.ratio < 1 and self.count >= 1):
            raise ValueError("ladder needs top > 0, 0 < ratio < 1, count >= 1")
        if self.offsets()[-1] < 1e-290:
            raise ValueError("ladder reaches subnormal offsets")

    def offsets(self) -> np.ndarray:
        return self.top * self.ratio ** np.arange(self.count)

    @classmethod
    def for_delta(cls, delta: float, count: int = 30) -> "Ladder":
        return cls(top=1e-2 * delta, count=count)


@dataclass(frozen=True)
class BallCandidate:
    y: np.ndarray
    initial_offset: np.ndarray
    escape_index: Optional[int] = None
    on_line: Optional[np.ndarray] = None

    def __post_init__(self):
        if not norm(self.initial_offset) > 0:
            raise ValueError("candidate offset must be nonzero")


@dataclass(frozen=True)
class SupEstimate:
    value: float
    n: int
    delta: float
    candidate_count: int
    argmax_candidate: BallCandidate


def in_dynamical_ball(m: MapObject, x, y, delta: float, n: int) -> tuple[bool, Optional[int]]:
    """Whether ``d(f^j x, f^j y) < delta`` for ``j = 0..n``; else the first violating ``j``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    ox = iterate(m, x, n)
    oy = iterate(m, y, n)
    d = distance(m.domain, ox, oy)
    bad = np.flatnonzero(np.atleast_1d(d) >= delta)
    if bad.size:
        return False, int(bad[0])
    return True, None


def delta_ratio(m: MapObject, n: int, x, y) -> float:
    """``|f^n x - f^n y| / |x - y|`` with distances in the domain metric."""
    d0 = distance(m.domain, x, y)
    if d0 < UNDERFLOW_GUARD:
        raise DegenerateSeparation(f"initial separation {d0:g} below {UNDERFLOW_GUARD:g}")
    ox = iterate(m, x, n)
    oy = iterate(m, y, n)
    return float(distance(m.domain, ox[-1], oy[-1]) / d0)


# ---------------------------------------------------------------------------
# candidate offsets


def direction_fan(count: int) -> np.ndarray:
    """``count`` evenly spaced unit vectors starting at angle 0."""
    t = 2.0 * math.pi * np.arange(count) / count
    return np.column_stack([np.cos(t), np.sin(t)])


def unit(v) -> np.ndarray:
    v = as_point(v)
    r = norm(v)
    if not r > 0:
        raise ValueError("direction must be nonzero")
    return v / r


def dedup_directions(dirs: np.ndarray) -> np.ndarray:
    """Drop later directions within ``DEDUP_RTOL`` of an earlier one (order preserved)."""
    keep: list[np.ndarray] = []
    for d in dirs:
        if all(np.max(np.abs(d - k)) >= DEDUP_RTOL for k in keep):
            keep.append(d)
    return np.array(keep).reshape(-1, 2)


def line_directions(v) -> np.ndarray:
    u = unit(v)
    return np.array([u, -u])


def ball_directions(directions: int, extra: Sequence = ()) -> np.ndarray:
    """Fan of rays plus both signs of each extra direction, extras first."""
    rays = [d for v in extra for d in line_directions(v)]
    rays.extend(direction_fan(directions))
    return dedup_directions(np.array(rays))


def offsets_for(dirs: np.ndarray, ladder: Ladder) -> tuple[np.ndarray, np.ndarray]:
    """All ``eps * u`` products, direction-major; also the direction index of each."""
    eps = ladder.offsets()
    off = (dirs[:, None, :] * eps[None, :, None]).reshape(-1, 2)
    which = np.repeat(np.arange(len(dirs)), len(eps))
    return off, which


def admissible(m: MapObject, x: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Mask of offsets that give points of the domain and resolvable separations."""
    ok = np.asarray(m.domain.contains(x + offsets), dtype=bool)
    if m.offsets is None:
        ok &= norm(offsets) >= UNDERFLOW_GUARD
    return ok


def track_offsets(m: MapObject, x, offsets: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Follow candidates ``x + e`` for ``n`` steps.

    Returns the base orbit, shape (n + 1, 2), and the separations, shape
    (M, n + 1), where entry ``[i, j]`` is ``d(f^j x, f^j(x + e_i))``.
    Non-finite separations (only possible long after escape) become ``inf``.
    """
    orbit = iterate(m, x, n)
    e = np.array(offsets, dtype=np.float64).reshape(-1, 2)
    dists = np.empty((len(e), n + 1))
    dists[:, 0] = norm(m.domain.wrap_offset(e))
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n):
            e = step_offsets(m, orbit[j], e)
            dists[:, j + 1] = norm(m.domain.wrap_offset(e))
    dists[~np.isfinite(dists)] = np.inf
    return orbit, dists


def escape_indices(dists: np.ndarray, delta: float, n: int) -> np.ndarray:
    """First ``j <= n`` with separation ``>= delta``, or -1 when the candidate stays inside."""
    hit = dists[:, : n + 1] >= delta
    first = np.argmax(hit, axis=1)
    return np.where(hit.any(axis=1), first, -1)


def _candidates(m, x, offsets, which, dirs, delta, n, keep_escaped, lines):
    orbit, dists = track_offsets(m, x, offsets, n)
    esc = escape_indices(dists, delta, n)
    out = []
    for i, e in enumerate(offsets):
        if esc[i] >= 0 and not keep_escaped:
            continue
        out.append(BallCandidate(
            y=m.domain.wrap(x + e),
            initial_offset=e.copy(),
            escape_index=None if esc[i] < 0 else int(esc[i]),
            on_line=lines[which[i]] if lines is not None else None,
        ))
    if not any(c.escape_index is None for c in out):
        raise EmptyCandidateSet(f"no candidate stays within delta={delta:g} for n={n}")
    return out


def sample_line_candidates(m: MapObject, x, v, delta: float, n: int, ladder: Ladder | None = None,
                           keep_escaped: bool = False) -> list[BallCandidate]:
    """Candidates ``x +/- eps_j v/|v|`` on the line through x along v.

    By default only the candidates that stay in ``B_x(delta, n)`` are returned;
    ``keep_escaped=True`` returns all of them tagged with their escape index.
    """
    x = check_in_domain(m.domain, x)
    ladder = Ladder.for_delta(delta) if ladder is None else ladder
    if not np.all(ladder.offsets() < delta):
        raise ValueError("ladder offsets must be below delta")
    dirs = line_directions(v)
    offsets, which = offsets_for(dirs, ladder)
    ok = admissible(m, x, offsets)
    line = unit(v)
    return _candidates(m, x, offsets[ok], which[ok], dirs, delta, n, keep_escaped,
                       lines=[line, line])


def sample_ball_candidates(m: MapObject, x, delta: float, n: int, directions: int = 64,
                           ladder: Ladder | None = None, extra_directions: Sequence = (),
                           keep_escaped: bool = False) -> list[BallCandidate]:
    """Union of line candidates over a fan of directions (plus any extra lines)."""
    if directions < 8:
        raise ValueError("need at least 8 directions")
    x = check_in_domain(m.domain, x)
    ladder = Ladder.for_delta(delta) if ladder is None else ladder
    if not np.all(ladder.offsets() < delta):
        raise ValueError("ladder offsets must be below delta")
    dirs = ball_directions(directions, extra_directions)
    offsets, which = offsets_for(dirs, ladder)
    ok = admissible(m, x, offsets)
    return _candidates(m, x, offsets[ok], which[ok], dirs, delta, n, keep_escaped, lines=dirs)


def sup_log_delta(m: MapObject, x, n: int, delta: float,
                  candidates: Sequence[BallCandidate]) -> SupEstimate:
    """Largest ``log Delta(f, n, x, y)`` over the candidates inside ``B_x(delta, n)``."""
    x = check_in_domain(m.domain, x)
    if not candidates:
        raise EmptyCandidateSet("empty candidate list")
    offsets = np.array([c.initial_offset for c in candidates])
    _, dists = track_offsets(m, x, offsets, n)
    values, counts, argmax = _kernels.grid_reduce(
        dists, np.array([n], dtype=np.int64), np.array([delta], dtype=np.float64))
    if counts[0, 0] == 0:
        raise EmptyCandidateSet(f"no candidate stays within delta={delta:g} for n={n}")
    best = candidates[int(argmax[0, 0])]
    return SupEstimate(value=float(values[0, 0]), n=n, delta=delta,
                       candidate_count=int(counts[0, 0]), argmax_candidate=best)


def ball_sup(m: MapObject, x, n: int, delta: float, directions: int = 64,
             ladder: Ladder | None = None) -> SupEstimate:
    """``sup log Delta`` over the default ball candidate set, without building candidate objects."""
    x = check_in_domain(m.domain, x)
    ladder = Ladder.for_delta(delta) if ladder is None else ladder
    dirs = ball_directions(directions)
    offsets, which = offsets_for(dirs, ladder)
    ok = admissible(m, x, offsets)
    offsets, which = offsets[ok], which[ok]
    _, dists = track_offsets(m, x, offsets, n)
    values, counts, argmax = _kernels.grid_reduce(
        dists, np.array([n], dtype=np.int64), np.array([delta], dtype=np.float64))
    if counts[0, 0] == 0:
        raise EmptyCandidateSet(f"no candidate stays within delta={delta:g} for n={n}")
    j = int(argmax[0, 0])
    cand = BallCandidate(y=m.domain.wrap(x + offsets[j]), initial_offset=offsets[j],
                         on_line=dirs[which[j]])
    return SupEstimate(float(values[0, 0]), n, delta, int(counts[0, 0]), cand)
