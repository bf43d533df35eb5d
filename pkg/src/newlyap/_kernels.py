"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

Set ``NEWLYAP_DISABLE_NUMBA=1`` to force the numpy path.  Both paths follow
the same floating-point recipe; they may still differ in the last ulp where
numba and numpy use different libm routines.

Offset kernels compute ``f(x + e) - f(x)`` for a base point ``x`` and an
(M, 2) batch of offsets ``e`` without ever forming ``x + e`` where that would
cancel, so separations far below 1e-12 keep full relative precision.
"""
from __future__ import annotations

import math
import os

import numpy as np

_TWO_PI = 2.0 * math.pi


def _numba_requested() -> bool:
    return os.environ.get("NEWLYAP_DISABLE_NUMBA", "").strip().lower() not in ("1", "true", "yes")


try:  # pragma: no cover - exercised implicitly depending on the environment
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    nb = None
    HAVE_NUMBA = False

BACKEND = "numba" if (HAVE_NUMBA and _numba_requested()) else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations


def linear_offsets_np(a, e):
    return e @ a.T


def standard_forward_np(k, p):
    x = p[..., 0]
    y = p[..., 1] + k / _TWO_PI * np.sin(_TWO_PI * x)
    return np.stack([x + y, y], axis=-1)


def standard_offsets_np(k, x, e):
    dx = e[:, 0]
    # sin(2pi(x+dx)) - sin(2pi x) written without cancellation
    dy = e[:, 1] + (k / math.pi) * np.cos(_TWO_PI * x[0] + math.pi * dx) * np.sin(math.pi * dx)
    return np.column_stack([dx + dy, dy])


def example_branch_np(p):
    x = p[..., 0]
    y = p[..., 1]
    # sign products instead of x*(y-x): the product underflows for tiny offsets
    s = np.sign(x) * np.sign(y - x)
    xy = np.sign(x) * np.sign(y)
    out = np.where(s > 0, 0, np.where(s < 0, 1, np.where(xy <= 0, 2, 3)))
    return out.astype(np.int64)


EXAMPLE_MATRICES = np.array(
    [
        [[2.0, 0.0], [1.5, 0.5]],
        [[3.0, -1.0], [0.0, 2.0]],
        [[3.0, 0.0], [0.0, 0.5]],
        [[2.0, 0.0], [0.0, 2.0]],
    ]
)


def example_forward_np(p):
    b = example_branch_np(p)
    a = EXAMPLE_MATRICES[b]
    return np.einsum("...ij,...j->...i", a, p)


def example_offsets_np(x, e):
    y = x + e
    bx = example_branch_np(x)
    by = example_branch_np(y)
    ay = EXAMPLE_MATRICES[by]
    ax = EXAMPLE_MATRICES[bx]
    return np.einsum("mij,mj->mi", ay, e) + np.einsum("mij,j->mi", ay - ax, x)


def twist_forward_np(cx, cy, a, b, w, p):
    ux = p[..., 0] - cx
    uy = p[..., 1] - cy
    r = np.hypot(ux, uy)
    inside = (r > a) & (r < b)
    phi = np.where(inside, _TWO_PI * w * (r - a) / (b - a), 0.0)
    c, s = np.cos(phi), np.sin(phi)
    qx = np.where(inside, cx + c * ux - s * uy, p[..., 0])
    qy = np.where(inside, cy + s * ux + c * uy, p[..., 1])
    return np.stack([qx, qy], axis=-1)


def twist_offsets_np(cx, cy, a, b, w, x, e):
    ux = x[0] - cx
    uy = x[1] - cy
    rx = math.hypot(ux, uy)
    ex = e[:, 0]
    ey = e[:, 1]
    ry = np.hypot(ux + ex, uy + ey)
    tx = min(max((rx - a) / (b - a), 0.0), 1.0)
    ty = np.clip((ry - a) / (b - a), 0.0, 1.0)
    in_x = a < rx < b
    in_y = (ry > a) & (ry < b)
    denom = rx + ry
    dr = np.divide(2.0 * (ux * ex + uy * ey) + (ex * ex + ey * ey), denom,
                   out=np.zeros_like(denom), where=denom > 0)
    dt = np.where(in_x & in_y, dr / (b - a), ty - tx)
    phi_x = _TWO_PI * w * tx if in_x else 0.0
    alpha = _TWO_PI * w * dt
    phi_y = phi_x + alpha
    cy_, sy_ = np.cos(phi_y), np.sin(phi_y)
    cx_, sx_ = math.cos(phi_x), math.sin(phi_x)
    # (R(alpha) - I) u with cos(alpha) - 1 = -2 sin^2(alpha/2)
    h = np.sin(0.5 * alpha)
    cm1 = -2.0 * h * h
    sa = np.sin(alpha)
    gx = cm1 * ux - sa * uy
    gy = sa * ux + cm1 * uy
    outx = cy_ * ex - sy_ * ey + cx_ * gx - sx_ * gy
    outy = sy_ * ex + cy_ * ey + sx_ * gx + cx_ * gy
    return np.column_stack([outx, outy])


def grid_reduce_np(dists, ns, deltas):
    """Per (n, delta) max of log(d_n / d_0) over candidates that stay inside the ball.

    ``dists`` is (M, N+1): the separation of each candidate at steps 0..N.
    Returns (values, counts, argmax) with shapes (len(ns), len(deltas)); empty
    cells carry nan / 0 / -1.
    """
    running = np.maximum.accumulate(dists, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.log(dists) - np.log(dists[:, :1])
    nn, nd = len(ns), len(deltas)
    values = np.full((nn, nd), np.nan)
    counts = np.zeros((nn, nd), dtype=np.int64)
    argmax = np.full((nn, nd), -1, dtype=np.int64)
    for i, n in enumerate(ns):
        col = logr[:, n]
        for k, delta in enumerate(deltas):
            alive = running[:, n] < delta
            c = int(np.count_nonzero(alive))
            counts[i, k] = c
            if c:
                idx = np.flatnonzero(alive)
                j = int(idx[np.argmax(col[idx])])
                values[i, k] = col[j]
                argmax[i, k] = j
    return values, counts, argmax


# ---------------------------------------------------------------------------
# numba implementations (loop form; nogil so thread pools can overlap them)

if HAVE_NUMBA:
    _jit = nb.njit(cache=True, nogil=True)

    @_jit
    def linear_offsets_nb(a, e):
        m = e.shape[0]
        out = np.empty_like(e)
        for i in range(m):
            out[i, 0] = a[0, 0] * e[i, 0] + a[0, 1] * e[i, 1]
            out[i, 1] = a[1, 0] * e[i, 0] + a[1, 1] * e[i, 1]
        return out

    @_jit
    def standard_offsets_nb(k, x, e):
        m = e.shape[0]
        out = np.empty_like(e)
        base = _TWO_PI * x[0]
        for i in range(m):
            dx = e[i, 0]
            dy = e[i, 1] + (k / math.pi) * math.cos(base + math.pi * dx) * math.sin(math.pi * dx)
            out[i, 0] = dx + dy
            out[i, 1] = dy
        return out

    @_jit
    def _example_branch_scalar(x, y):
        s = np.sign(x) * np.sign(y - x)
        if s > 0:
            return 0
        if s < 0:
            return 1
        if np.sign(x) * np.sign(y) <= 0:
            return 2
        return 3

    @_jit
    def example_offsets_nb(x, e):
        mats = np.array(
            [
                [[2.0, 0.0], [1.5, 0.5]],
                [[3.0, -1.0], [0.0, 2.0]],
                [[3.0, 0.0], [0.0, 0.5]],
                [[2.0, 0.0], [0.0, 2.0]],
            ]
        )
        m = e.shape[0]
        out = np.empty_like(e)
        bx = _example_branch_scalar(x[0], x[1])
        for i in range(m):
            by = _example_branch_scalar(x[0] + e[i, 0], x[1] + e[i, 1])
            a = mats[by]
            c = mats[by] - mats[bx]
            out[i, 0] = a[0, 0] * e[i, 0] + a[0, 1] * e[i, 1] + (c[0, 0] * x[0] + c[0, 1] * x[1])
            out[i, 1] = a[1, 0] * e[i, 0] + a[1, 1] * e[i, 1] + (c[1, 0] * x[0] + c[1, 1] * x[1])
        return out

    @_jit
    def twist_offsets_nb(cx, cy, a, b, w, x, e):
        ux = x[0] - cx
        uy = x[1] - cy
        rx = math.hypot(ux, uy)
        tx = min(max((rx - a) / (b - a), 0.0), 1.0)
        in_x = a < rx < b
        phi_x = _TWO_PI * w * tx if in_x else 0.0
        cx_ = math.cos(phi_x)
        sx_ = math.sin(phi_x)
        m = e.shape[0]
        out = np.empty_like(e)
        for i in range(m):
            ex = e[i, 0]
            ey = e[i, 1]
            ry = math.hypot(ux + ex, uy + ey)
            ty = min(max((ry - a) / (b - a), 0.0), 1.0)
            in_y = a < ry < b
            denom = rx + ry
            dr = (2.0 * (ux * ex + uy * ey) + (ex * ex + ey * ey)) / denom if denom > 0 else 0.0
            dt = dr / (b - a) if (in_x and in_y) else ty - tx
            alpha = _TWO_PI * w * dt
            phi_y = phi_x + alpha
            cy_ = math.cos(phi_y)
            sy_ = math.sin(phi_y)
            h = math.sin(0.5 * alpha)
            cm1 = -2.0 * h * h
            sa = math.sin(alpha)
            gx = cm1 * ux - sa * uy
            gy = sa * ux + cm1 * uy
            out[i, 0] = cy_ * ex - sy_ * ey + cx_ * gx - sx_ * gy
            out[i, 1] = sy_ * ex + cy_ * ey + sx_ * gx + cx_ * gy
        return out

    @_jit
    def grid_reduce_nb(dists, ns, deltas):
        m, width = dists.shape
        nn = ns.shape[0]
        nd = deltas.shape[0]
        running = np.empty_like(dists)
        for i in range(m):
            acc = dists[i, 0]
            for j in range(width):
                if dists[i, j] > acc:
                    acc = dists[i, j]
                running[i, j] = acc
        values = np.full((nn, nd), np.nan)
        counts = np.zeros((nn, nd), dtype=np.int64)
        argmax = np.full((nn, nd), -1, dtype=np.int64)
        for a_ in range(nn):
            n = ns[a_]
            for k in range(nd):
                delta = deltas[k]
                best = -np.inf
                arg = -1
                c = 0
                for i in range(m):
                    if running[i, n] < delta:
                        c += 1
                        v = math.log(dists[i, n]) - math.log(dists[i, 0])
                        if arg < 0 or v > best:
                            best = v
                            arg = i
                counts[a_, k] = c
                if c > 0:
                    values[a_, k] = best
                    argmax[a_, k] = arg
        return values, counts, argmax


if BACKEND == "numba":
    linear_offsets = linear_offsets_nb
    standard_offsets = standard_offsets_nb
    example_offsets = example_offsets_nb
    twist_offsets = twist_offsets_nb
    grid_reduce = grid_reduce_nb
else:
    linear_offsets = linear_offsets_np
    standard_offsets = standard_offsets_np
    example_offsets = example_offsets_np
    twist_offsets = twist_offsets_np
    grid_reduce = grid_reduce_np

# forward maps are evaluated once per orbit step on a single point; numpy is fine
standard_forward = standard_forward_np
example_branch = example_branch_np
example_forward = example_forward_np
twist_forward = twist_forward_np
