"""Cube, ball and sphere geometry behind the counterexample construction.

Vertices of the inner cube ``[-1/sqrt(n), 1/sqrt(n)]^n`` are indexed by an
integer in ``[0, 2**n)``: bit ``k`` of the index set means coordinate ``k`` is
negative, so index 0 is the all-plus vertex.

Every vertex coordinate is ``+c`` or ``-c`` for the single rounded constant
``c = boundary(n, scale)``. The networks module builds its biases from the same
constant, which makes the box classifier's pre-sign value exactly zero at a
vertex instead of merely close to it.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .errors import InvalidArgument, SamplerExhausted

MAX_ENUMERATION_DIM = 20
DEFAULT_MAX_ATTEMPTS = 10**6


def _check_dim(n: int) -> None:
    if int(n) != n or n < 1:
        raise InvalidArgument(f"dimension must be a positive integer, got {n!r}")


def inv_sqrt(n: int) -> float:
    """fl(1/sqrt(n)), the half-side of the inner cube inscribed in the unit ball."""
    _check_dim(n)
    return 1.0 / math.sqrt(n)


def boundary(n: int, scale: float = 1.0) -> float:
    """Half-side ``scale / sqrt(n)`` computed as ``scale * inv_sqrt(n)``.

    All code that places points on, or decides against, a cube face uses this
    function so that identical inputs produce bit-identical constants.
    """
    if scale == 1.0:
        return inv_sqrt(n)
    return scale * inv_sqrt(n)


def vertex_signs(n: int, index) -> np.ndarray:
    """Sign patterns (+1/-1) for one index or an array of indices."""
    _check_dim(n)
    idx = np.asarray(index, dtype=np.int64)
    if n > 62:
        raise InvalidArgument("vertex indexing supports n <= 62")
    if np.any(idx < 0) or np.any(idx >= (1 << n)):
        raise InvalidArgument(f"vertex index out of range [0, 2**{n})")
    bits = (idx[..., None] >> np.arange(n, dtype=np.int64)) & 1
    return 1.0 - 2.0 * bits


def cube_vertex(n: int, index: int, scale: float = 1.0) -> np.ndarray:
    """Vertex ``index`` of the cube with half-side ``boundary(n, scale)``."""
    return vertex_signs(n, index) * boundary(n, scale)


def all_vertices(n: int, scale: float = 1.0) -> np.ndarray:
    """All ``2**n`` vertices, row ``i`` being ``cube_vertex(n, i, scale)``."""
    _check_dim(n)
    if n > MAX_ENUMERATION_DIM:
        raise InvalidArgument(f"vertex enumeration is capped at n <= {MAX_ENUMERATION_DIM}")
    return vertex_signs(n, np.arange(1 << n)) * boundary(n, scale)


def linf(x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    return np.max(np.abs(x), axis=-1)


def in_cube(x, half_side: float) -> np.ndarray | bool:
    """``max_i |x_i| <= half_side``; faces count as inside. Works row-wise on 2-D input."""
    if not half_side > 0:
        raise InvalidArgument("half_side must be positive")
    out = linf(x) <= half_side
    return bool(out) if np.ndim(out) == 0 else out


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_sphere(n: int, radius: float, rng, size: Optional[int] = None) -> np.ndarray:
    """Uniform draws from the sphere of the given radius centred at the origin.

    Normalised Gaussian vectors. Returns shape ``(n,)`` when ``size`` is None,
    otherwise ``(size, n)``.
    """
    _check_dim(n)
    if not radius > 0:
        raise InvalidArgument("radius must be positive")
    rng = _as_rng(rng)
    count = 1 if size is None else int(size)
    g = rng.standard_normal((count, n))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian vector has probability zero; redraw defensively
    while np.any(norms == 0):
        bad = norms[:, 0] == 0
        g[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    out = radius * (g / norms)
    return out[0] if size is None else out


def sample_ball(n: int, radius: float, center, rng, size: Optional[int] = None) -> np.ndarray:
    """Uniform draws (w.r.t. volume) from the closed ball ``B(radius, center)``."""
    _check_dim(n)
    if radius < 0:
        raise InvalidArgument("radius must be non-negative")
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    if center.shape != (n,):
        raise InvalidArgument(f"center must have shape ({n},)")
    rng = _as_rng(rng)
    count = 1 if size is None else int(size)
    if radius == 0:
        out = np.broadcast_to(center, (count, n)).copy()
        return out[0] if size is None else out
    directions = sample_sphere(n, 1.0, rng, size=count)
    r = radius * rng.random(count) ** (1.0 / n)
    out = center + directions * r[:, None]
    return out[0] if size is None else out


def sample_sphere_shell(
    n: int,
    radius: float,
    lower: float,
    rng,
    size: Optional[int] = None,
    upper: float = math.inf,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> np.ndarray:
    """Rejection sampler: uniform on the sphere, conditioned on ``lower < max|x_i| <= upper``.

    Raises SamplerExhausted when ``max_attempts`` draws yield no acceptance, or
    when total draws exceed ``max_attempts`` per requested point.
    """
    rng = _as_rng(rng)
    count = 1 if size is None else int(size)
    accepted: list[np.ndarray] = []
    have = 0
    attempts = 0
    batch = max(64, 2 * count)
    while have < count:
        if (attempts >= max_attempts and have == 0) or attempts >= max_attempts * count:
            raise SamplerExhausted(
                f"no acceptance after {attempts} draws; the excluded cube leaves (almost) no room on the sphere"
            )
        draw = sample_sphere(n, radius, rng, size=min(batch, max_attempts))
        attempts += len(draw)
        m = linf(draw)
        keep = draw[(m > lower) & (m <= upper)]
        if len(keep):
            accepted.append(keep)
            have += len(keep)
            rate = have / attempts
            batch = int(min(max((count - have) / rate * 1.2, 64), 10**6))
        else:
            batch = min(batch * 4, 10**6)
    out = np.concatenate(accepted)[:count]
    return out[0] if size is None else out


def check_eps(n: int, eps: float) -> None:
    _check_dim(n)
    if n < 2:
        raise InvalidArgument("dimension must be at least 2")
    if not (0 < eps < math.sqrt(n) - 1):
        raise InvalidArgument(f"eps must lie in (0, sqrt(n) - 1) = (0, {math.sqrt(n) - 1:.6g}), got {eps}")


def j0_threshold(n: int, eps: float) -> float:
    """Label-0 points satisfy ``max|x_i| > j0_threshold``: outside ``Cb(2(1+eps)/sqrt(n), 0)``."""
    return boundary(n, 1.0 + eps)


def in_J0(x, eps: float, atol: float = 1e-12):
    """Membership in J0: on the unit sphere and strictly outside the (1+eps)-scaled inner cube."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    on_sphere = np.abs(np.linalg.norm(x, axis=-1) - 1.0) <= atol
    return on_sphere & (linf(x) > j0_threshold(n, eps))


def sample_J0(
    n: int,
    eps: float,
    rng,
    size: Optional[int] = None,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> np.ndarray:
    """Uniform draws from J0 by rejection from the unit sphere."""
    check_eps(n, eps)
    return sample_sphere_shell(n, 1.0, j0_threshold(n, eps), rng, size=size, max_attempts=max_attempts)


def min_distance_to_vertices(x, n: Optional[int] = None, scale: float = 1.0) -> np.ndarray:
    """Exhaustive minimum Euclidean distance from each row of ``x`` to the scaled cube's vertices.

    The nearest vertex matches the sign pattern of ``x``; this is used only as
    the brute-force reference, so it compares against every vertex.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1] if n is None else n
    verts = all_vertices(n, scale)
    best = np.full(len(x), np.inf)
    rows = max(1, 2**20 // (min(len(verts), 4096) * n))
    for i in range(0, len(x), rows):
        xs = x[i:i + rows]
        for start in range(0, len(verts), 4096):
            block = verts[start:start + 4096]
            d = np.linalg.norm(xs[:, None, :] - block[None, :, :], axis=2)
            best[i:i + rows] = np.minimum(best[i:i + rows], d.min(axis=1))
    return best
