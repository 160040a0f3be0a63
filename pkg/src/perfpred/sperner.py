"""Thick-Brouwer colorings on an equilateral triangle and the averaged direction operator.

Grid points are ``p = (q/N) a + (r/N) b`` with ``N = 2^n``, ``q, r >= 0`` and
``q + r <= N``.  Colors map to inward unit normals (1 -> bPerp, 2 -> aPerp,
3 -> cPerp); the operator ``F`` averages the directions of ``k`` shifted
samples, blending continuously across cell boundaries the way a bounded
arithmetic circuit would.  ``-F/N`` is the VI operator whose approximate
solutions sit next to trichromatic triangles.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._validation import DomainError, check_vector
from .domain import Ball

EPS_BAND = 1.0 / 8
DEFAULT_K = 16
MAX_N = 20
_TOL = 1e-12


class SpernerError(RuntimeError):
    """A search found nothing; the message carries the diagnostic."""


# --------------------------------------------------------------------------
# colorings

def band_colors(q, r, N, eps=EPS_BAND):
    """Colors mandated by the thick boundary bands; 0 where any color is allowed."""
    q = np.asarray(q)
    r = np.asarray(r)
    Ne = N * eps
    out = np.zeros(np.broadcast(q, r).shape, dtype=np.int8)
    c1 = (q <= Ne) & (Ne < r) & (r < (1 - eps) * N - q)
    c2 = (r <= Ne) & (q < (1 - eps) * N - r)
    c3 = ((1 - eps) * N <= q + r) & (q + r <= N)
    out[c1] = 1
    out[c2] = 2
    out[c3] = 3
    return out


class Coloring:
    kind = "abstract"

    def interior(self, q, r, N):
        raise NotImplementedError

    def __call__(self, q, r, N, eps=EPS_BAND):
        q = np.asarray(q)
        r = np.asarray(r)
        bands = band_colors(q, r, N, eps)
        return np.where(bands > 0, bands, self.interior(q, r, N)).astype(np.int8)

    def to_json(self):
        raise NotImplementedError


class CanonicalColoring(Coloring):
    """Mandated bands, color 1 everywhere else."""

    kind = "canonical"

    def interior(self, q, r, N):
        return np.ones(np.broadcast(q, r).shape, dtype=np.int8)

    def to_json(self):
        return {"type": "canonical"}


@dataclass(frozen=True)
class PlantedColoring(Coloring):
    """Interior split into three regions meeting only at the cell anchored at ``(q0, r0)``.

    Region 2 is ``r <= r0, q <= q0``; region 1 is ``r > r0, q + r <= q0 + r0 + 1``;
    the rest is 3.  The up-triangle ``(q0,r0), (q0+1,r0), (q0,r0+1)`` is the
    only trichromatic triangle when ``(q0, r0)`` lies clear of the bands.
    """

    q0: int
    r0: int
    kind = "planted"

    def interior(self, q, r, N):
        out = np.full(np.broadcast(q, r).shape, 3, dtype=np.int8)
        out[(r > self.r0) & (q + r <= self.q0 + self.r0 + 1)] = 1
        out[(r <= self.r0) & (q <= self.q0)] = 2
        return out

    def to_json(self):
        return {"type": "planted", "q0": self.q0, "r0": self.r0}


class TableColoring(Coloring):
    """Explicit colors ``table[q][r]``; band points are taken from the table too."""

    kind = "table"

    def __init__(self, table):
        T = np.asarray(table, dtype=np.int8)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ValueError("color table must be square, indexed [q][r]")
        self.table = T

    def __call__(self, q, r, N, eps=EPS_BAND):
        if self.table.shape[0] != N + 1:
            raise ValueError(f"table has side {self.table.shape[0]}, grid needs {N + 1}")
        return self.table[np.asarray(q), np.asarray(r)]

    def interior(self, q, r, N):
        return self.table[np.asarray(q), np.asarray(r)]

    def to_json(self):
        return {"type": "table", "table": self.table.tolist()}


def coloring_from_json(obj):
    kind = obj.get("type")
    if kind == "canonical":
        return CanonicalColoring()
    if kind == "planted":
        return PlantedColoring(int(obj["q0"]), int(obj["r0"]))
    if kind == "table":
        return TableColoring(obj["table"])
    raise ValueError(f"unknown coloring type {kind!r}")


def embed_base_labeling(n, base, offset=None, eps=EPS_BAND):
    """Embed a Sperner labeling ``base[q][r]`` (side ``Nb + 1``) into the interior.

    Band points keep their mandated colors and the rest of the interior is
    color 1.  ``offset`` defaults to centering the base triangle.
    """
    N = 2 ** n
    base = np.asarray(base, dtype=np.int8)
    Nb = base.shape[0] - 1
    lo = math.floor(N * eps) + 1
    hi = math.ceil((1 - eps) * N) - 1
    if offset is None:
        start = lo + max(0, (hi - lo - Nb) // 3)
        offset = (start, start)
    q_off, r_off = offset
    table = np.zeros((N + 1, N + 1), dtype=np.int8)
    qq, rr = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    valid = qq + rr <= N
    table[valid] = CanonicalColoring()(qq[valid], rr[valid], N, eps)
    for bq in range(Nb + 1):
        for br in range(Nb + 1 - bq):
            q, r = q_off + bq, r_off + br
            if band_colors(q, r, N, eps) != 0 or q + r > N:
                raise ValueError("base labeling does not fit inside the interior region")
            table[q, r] = base[bq, br]
    return TableColoring(table)


# --------------------------------------------------------------------------
# instance

@dataclass(frozen=True, eq=False)
class SpernerInstance:
    n: int
    coloring: Coloring = field(default_factory=CanonicalColoring)
    k: int = DEFAULT_K
    eps_band: float = EPS_BAND

    def __post_init__(self):
        if not 1 <= self.n <= MAX_N:
            raise ValueError(f"n must lie in [1, {MAX_N}] for double precision, got {self.n}")
        if self.k < 16:
            raise ValueError(f"k must be at least 16, got {self.k}")
        if self.eps_band != EPS_BAND:
            raise ValueError("the band thickness is fixed at 1/8")
        prec = 2.0 ** (self.n + 16)
        h = round(math.sqrt(3) / 2 * prec) / prec
        object.__setattr__(self, "_h", h)

    # geometry --------------------------------------------------------------
    @property
    def N(self):
        return 2 ** self.n

    @property
    def a(self):
        return np.array([2 * self._h, 0.0])

    @property
    def b(self):
        return np.array([self._h, 1.5])

    @property
    def vertices(self):
        return np.array([[0.0, 0.0], self.a, self.b])

    @property
    def a_perp(self):
        return np.array([0.0, 1.0])

    @property
    def b_perp(self):
        return np.array([self._h, -0.5])

    @property
    def c_perp(self):
        return np.array([-self._h, -0.5])

    @property
    def directions(self):
        """Row ``c`` is the direction of color ``c``; row 0 is unused."""
        return np.array([[0.0, 0.0], self.b_perp, self.a_perp, self.c_perp])

    @property
    def L_bits(self):
        return (self.k + 2) * 2 ** (self.n + 1)

    @property
    def delta(self):
        return 1.0 / ((self.k + 1) * 2 ** (self.n + 1))

    @property
    def ambient(self):
        # circumscribed disc, padded so the rounded vertices stay inside
        return Ball([self._h, 0.5], 1.0 + 2.0 ** -(self.n + 10))

    @property
    def eps_double_prime(self):
        return (self.eps_band / 8) / self.N

    def color_grid(self):
        """``(N+1) x (N+1)`` array of colors indexed ``[q, r]``; 0 off the grid."""
        cache = self.__dict__.get("_grid")
        if cache is None:
            N = self.N
            qq, rr = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
            valid = qq + rr <= N
            cache = np.zeros((N + 1, N + 1), dtype=np.int8)
            cache[valid] = self.coloring(qq[valid], rr[valid], N, self.eps_band)
            cache.flags.writeable = False
            object.__setattr__(self, "_grid", cache)
        return cache

    def basis_coords(self, P):
        """``(s, t)`` with ``P = s a + t b`` for points stacked on the last axis."""
        P = np.asarray(P, dtype=float)
        t = P[..., 1] / 1.5
        s = (P[..., 0] - t * self._h) / (2 * self._h)
        return s, t

    def to_point(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        return np.stack([s * 2 * self._h + t * self._h, 1.5 * t], axis=-1)

    def to_json(self):
        return {"n": self.n, "k": self.k, "coloring": self.coloring.to_json()}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["n"]), coloring_from_json(obj.get("coloring", {"type": "canonical"})),
                   int(obj.get("k", DEFAULT_K)))


def canonical_instance(n, k=DEFAULT_K):
    return SpernerInstance(n, CanonicalColoring(), k)


def planted_instance(n, q0=None, r0=None, k=DEFAULT_K):
    N = 2 ** n
    if q0 is None or r0 is None:
        q0 = r0 = math.floor(N * EPS_BAND) + max(1, N // 8)
    return SpernerInstance(n, PlantedColoring(q0, r0), k)


# --------------------------------------------------------------------------
# admissibility

@dataclass
class AdmissibilityReport:
    ok: bool
    witness: tuple | None
    sampled: bool
    corner_colors: dict

    def __bool__(self):
        return self.ok


def validate_admissible(inst, max_exhaustive_n=12, probes=100_000, seed=0):
    """Check every band point carries its mandated color.

    Exhaustive up to ``max_exhaustive_n``; beyond that ``probes`` random grid
    points are checked and the report is flagged as sampled.  The witness is
    ``(q, r, expected, got)`` for the first violation in ``(q, r)`` order.
    """
    N = inst.N
    if inst.n <= max_exhaustive_n:
        qq, rr = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
        keep = qq + rr <= N
        q, r = qq[keep], rr[keep]
        sampled = False
    else:
        rng = np.random.default_rng(seed)
        q = rng.integers(0, N + 1, probes)
        r = (rng.random(probes) * (N - q + 1)).astype(np.int64)
        order = np.lexsort((r, q))
        q, r = q[order], r[order]
        sampled = True
    want = band_colors(q, r, N, inst.eps_band)
    got = np.asarray(inst.coloring(q, r, N, inst.eps_band))
    bad = np.flatnonzero((want > 0) & (want != got))
    witness = None
    if bad.size:
        i = bad[0]
        witness = (int(q[i]), int(r[i]), int(want[i]), int(got[i]))
    corners = {i + 1: int(inst.coloring(np.array([qc]), np.array([rc]), N, inst.eps_band)[0])
               for i, (qc, rc) in enumerate([(0, 0), (N, 0), (0, N)])}
    return AdmissibilityReport(witness is None, witness, sampled, corners)


# --------------------------------------------------------------------------
# coloring of arbitrary points

def _inside(s, t):
    return (s >= -_TOL) & (t >= -_TOL) & (s + t <= 1 + _TOL)


def _outside_colors(inst, P):
    """Nearest-edge-line rule with the explicit tie table."""
    P = np.asarray(P, dtype=float)
    a, b = inst.a, inst.b
    d12 = np.abs(P[..., 1])
    d13 = np.abs(b[0] * P[..., 1] - b[1] * P[..., 0]) / np.linalg.norm(b)
    e = b - a
    d23 = np.abs(e[0] * (P[..., 1] - a[1]) - e[1] * (P[..., 0] - a[0])) / np.linalg.norm(e)
    m = np.minimum(np.minimum(d12, d13), d23)
    is12, is13, is23 = (np.abs(d12 - m) <= _TOL), (np.abs(d13 - m) <= _TOL), (np.abs(d23 - m) <= _TOL)
    out = np.where(is13, 1, np.where(is12, 2, 3)).astype(np.int8)
    # two-way ties
    out[is12 & is13] = 1
    out[is12 & is23] = 2
    out[is13 & is23] = 3
    out[is12 & is13 & is23] = 1
    return out


def _anchor(u, N):
    """Lower-left cell anchor; points on a cell boundary belong to the lower cell."""
    return np.clip(np.ceil(u) - 1, 0, N).astype(np.int64)


def color_at(inst, p):
    p = check_vector(p, 2, name="p")
    if not inst.ambient.contains(p):
        raise DomainError(f"p={p.tolist()} lies outside the ambient domain")
    s, t = inst.basis_coords(p)
    if _inside(s, t):
        N = inst.N
        q = _anchor(s * N, N)
        r = _anchor(t * N, N)
        q = min(int(q), N - int(r))
        return int(inst.color_grid()[q, int(r)])
    return int(_outside_colors(inst, p))


def extract_bit(x, L_bits):
    """Bounded-arithmetic bit: ``clamp((x - 0.5) L, 0, 1)``."""
    return np.clip((np.asarray(x, dtype=float) - 0.5) * L_bits, 0.0, 1.0)


def _sample_directions(inst, S, T):
    """Direction vector and poorly-positioned flag for samples at basis coords ``(S, T)``.

    Inside the triangle each coordinate ``u = s N`` selects cell ``m = floor(u)``
    and a blend weight ``theta = ExtractBit(0.5 + frac(u)/N)``, which equals
    ``clamp(frac(u) * 2(k+2), 0, 1)``; the anchor moves from ``m-1`` to ``m``
    as ``theta`` goes from 0 to 1.  Samples outside the triangle use the
    outside rule.
    """
    N = inst.N
    grid = inst.color_grid()
    D = inst.directions
    S = np.asarray(S, dtype=float)
    T = np.asarray(T, dtype=float)
    inside = _inside(S, T)
    out = np.zeros(S.shape + (2,))
    poorly = np.zeros(S.shape, dtype=bool)

    if np.any(~inside):
        P = inst.to_point(S[~inside], T[~inside])
        out[~inside] = D[_outside_colors(inst, P)]

    if np.any(inside):
        U = S[inside] * N
        V = T[inside] * N
        mu, mv = np.floor(U), np.floor(V)
        scale = 2.0 * (inst.k + 2)
        tu = np.clip((U - mu) * scale, 0.0, 1.0)
        tv = np.clip((V - mv) * scale, 0.0, 1.0)
        poorly[inside] = ((tu > 0) & (tu < 1)) | ((tv > 0) & (tv < 1))
        mu = mu.astype(np.int64)
        mv = mv.astype(np.int64)
        acc = np.zeros(U.shape + (2,))
        for qs, wq in ((mu - 1, 1 - tu), (mu, tu)):
            for rs, wr in ((mv - 1, 1 - tv), (mv, tv)):
                rr = np.clip(rs, 0, N)
                qq = np.clip(qs, 0, N - rr)
                w = wq * wr
                acc += w[:, None] * D[grid[qq, rr]]
        out[inside] = acc
    return out, poorly


def _operator_batch(inst, P, with_flags=False):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    s, t = inst.basis_coords(P)
    offs = np.arange(inst.k) * inst.delta
    S = s[:, None] + offs[None, :]
    T = t[:, None] + offs[None, :]
    dirs, poorly = _sample_directions(inst, S, T)
    F = dirs.mean(axis=1)
    if with_flags:
        return F, poorly.sum(axis=1)
    return F


def _check_ambient(inst, P):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    c, R = inst.ambient.center, inst.ambient.radius
    if np.any(np.linalg.norm(P - c, axis=1) > R + 1e-9):
        raise DomainError("point outside the ambient domain")
    return P


def sperner_operator(inst, x, return_flags=False):
    """``F(x)``: mean direction of the ``k`` samples; optionally the poorly-positioned count."""
    x = check_vector(x, 2)
    _check_ambient(inst, x)
    F, flags = _operator_batch(inst, x, with_flags=True)
    if return_flags:
        return F[0], int(flags[0])
    return F[0]


def rescaled_operator(inst, x):
    """``F'(x) = F(x) / 2^n``."""
    return sperner_operator(inst, x) / inst.N


def vi_operator(inst):
    """The VI operator ``-F'`` as a callable (the colors point inward)."""
    return lambda x: -rescaled_operator(inst, x)


def svi_gaps(inst, P):
    """Exact Stampacchia gaps of ``-F'`` over the ambient disc at each row of ``P``."""
    P = _check_ambient(inst, P)
    Fp = _operator_batch(inst, P) / inst.N
    c, R = inst.ambient.center, inst.ambient.radius
    # max_{x'} <x' - x, F'> over the disc
    return R * np.linalg.norm(Fp, axis=1) - np.einsum("ij,ij->i", P - c, Fp)


def poorly_positioned_counts(inst, P):
    P = _check_ambient(inst, P)
    return _operator_batch(inst, P, with_flags=True)[1]


# --------------------------------------------------------------------------
# triangles

def _triangles_at(q, r):
    up = ((q, r), (q + 1, r), (q, r + 1))
    down = ((q + 1, r), (q, r + 1), (q + 1, r + 1))
    return up, down


def _valid(tri, N):
    return all(q >= 0 and r >= 0 and q + r <= N for q, r in tri)


def is_trichromatic(inst, tri):
    grid = inst.color_grid()
    return _valid(tri, inst.N) and {int(grid[q, r]) for q, r in tri} == {1, 2, 3}


def brute_force_trichromatic(inst, max_n=8):
    """Every trichromatic up/down triangle of the grid, sorted."""
    if inst.n > max_n:
        raise ValueError(f"brute force limited to n <= {max_n}")
    N = inst.N
    G = inst.color_grid().astype(np.int64)
    qq, rr = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    found = []

    def tri_colors(c0, c1, c2, mask):
        # {1,2,3} is the only multiset of colors with sum 6 and product 6
        return mask & (c0 + c1 + c2 == 6) & (c0 * c1 * c2 == 6)

    up = tri_colors(G[:-1, :-1], G[1:, :-1], G[:-1, 1:], qq + rr + 1 <= N)
    down = tri_colors(G[1:, :-1], G[:-1, 1:], G[1:, 1:], qq + rr + 2 <= N)
    for q, r in zip(*np.nonzero(up)):
        found.append(_triangles_at(int(q), int(r))[0])
    for q, r in zip(*np.nonzero(down)):
        found.append(_triangles_at(int(q), int(r))[1])
    return sorted(tuple(sorted(t)) for t in found)


def grid_coords(inst, x):
    s, t = inst.basis_coords(np.asarray(x, dtype=float))
    return s * inst.N, t * inst.N


def cell_distance(inst, x, triangles):
    """Chebyshev distance in grid units from ``x`` to the nearest vertex of any triangle."""
    u, v = grid_coords(inst, x)
    if not triangles:
        return math.inf
    V = np.array([p for tri in triangles for p in tri], dtype=float)
    return float(np.min(np.maximum(np.abs(V[:, 0] - u), np.abs(V[:, 1] - v))))


def recover_trichromatic(inst, x_star, radius=2):
    """Trichromatic triangle among the ``(2 radius + 1)^2`` cells around ``x_star``.

    Ties are broken by distance from ``x_star`` to the triangle centroid,
    then lexicographically.  Raises :class:`SpernerError` with the color
    census of the neighbourhood when none exists.
    """
    N = inst.N
    u, v = grid_coords(inst, x_star)
    cq = int(np.clip(math.floor(u), 0, N - 1))
    cr = int(np.clip(math.floor(v), 0, N - 1))
    grid = inst.color_grid()
    best = None
    census = Counter()
    for i in range(-radius, radius + 1):
        for j in range(-radius, radius + 1):
            q, r = cq + i, cr + j
            if q >= 0 and r >= 0 and q + r <= N:
                census[int(grid[q, r])] += 1
            for tri in _triangles_at(q, r):
                if not is_trichromatic(inst, tri):
                    continue
                cen = np.mean(tri, axis=0)
                key = (float(np.hypot(cen[0] - u, cen[1] - v)), tuple(sorted(tri)))
                if best is None or key < best[0]:
                    best = (key, tuple(sorted(tri)))
    if best is None:
        raise SpernerError(f"no trichromatic triangle near {np.round([u, v], 4).tolist()}; "
                           f"color census {dict(sorted(census.items()))}")
    return best[1]


# --------------------------------------------------------------------------
# VI solutions

def refined_grid(inst, refine=4):
    """Points ``(i/(refine N)) a + (j/(refine N)) b`` inside the ambient disc."""
    M = refine * inst.N
    s = np.arange(M + 1) / M
    S, T = np.meshgrid(s, s, indexing="ij")
    P = inst.to_point(S.ravel(), T.ravel())
    c, R = inst.ambient.center, inst.ambient.radius
    return P[np.linalg.norm(P - c, axis=1) <= R]


def refined_grid_solutions(inst, eps2=None, refine=4):
    eps2 = inst.eps_double_prime if eps2 is None else eps2
    P = refined_grid(inst, refine)
    gaps = svi_gaps(inst, P)
    keep = gaps <= eps2
    return P[keep], gaps[keep]


def _breakpoints(lo, hi, k):
    """Coordinates in ``[lo, hi]`` where some sample crosses a cell edge or a blend end."""
    h = 1.0 / (2 * (k + 1))
    w = 1.0 / (2 * (k + 2))
    pts = [lo, hi]
    for i in range(k):
        off = i * h
        for j in range(int(math.floor(lo + off)) - 1, int(math.ceil(hi + off)) + 2):
            for edge in (j - off, j + w - off):
                if lo < edge < hi:
                    pts.append(edge)
    return np.unique(np.array(pts))


def _bilinear_roots(F00, F10, F01, F11):
    """Roots ``(alpha, beta)`` in ``[0,1]^2`` of the bilinear interpolant, vectorised.

    Returns arrays ``(idx, alpha, beta)`` listing every root found per cell.
    """
    P, Q, R = F00, F10 - F00, F01 - F00
    S = F11 - F10 - F01 + F00

    def cross(x, y):
        return x[:, 0] * y[:, 1] - x[:, 1] * y[:, 0]

    c2 = cross(Q, S)
    c1 = cross(P, S) + cross(Q, R)
    c0 = cross(P, R)
    idx, alphas = [], []
    lin = np.abs(c2) <= 1e-14 * (np.abs(c1) + np.abs(c0) + 1e-300)
    nz = ~lin & (np.abs(c2) > 0)
    disc = c1 ** 2 - 4 * c2 * c0
    ok = nz & (disc >= 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for sign in (-1.0, 1.0):
        al = np.where(ok, (-c1 + sign * sq) / np.where(ok, 2 * c2, 1.0), np.nan)
        sel = np.flatnonzero(ok)
        idx.append(sel)
        alphas.append(al[sel])
    lsel = np.flatnonzero(lin & (np.abs(c1) > 0))
    idx.append(lsel)
    alphas.append(-c0[lsel] / c1[lsel])
    idx = np.concatenate(idx)
    al = np.concatenate(alphas)
    keep = (al >= -1e-9) & (al <= 1 + 1e-9)
    idx, al = idx[keep], np.clip(al[keep], 0, 1)
    v = P[idx] + al[:, None] * Q[idx]
    w = R[idx] + al[:, None] * S[idx]
    ww = np.einsum("ij,ij->i", w, w)
    good = ww > 0
    idx, al, v, w, ww = idx[good], al[good], v[good], w[good], ww[good]
    be = -np.einsum("ij,ij->i", v, w) / ww
    keep = (be >= -1e-9) & (be <= 1 + 1e-9)
    return idx[keep], al[keep], np.clip(be[keep], 0, 1)


def _candidate_cells(inst):
    """Cells whose 3x3 anchor window shows all three colors, in lexicographic order."""
    N = inst.N
    G = inst.color_grid()
    pad = np.pad(G, 1)
    seen = np.ones((N + 1, N + 1), dtype=bool)
    for color in (1, 2, 3):
        hit = pad == color
        win = np.zeros((N + 1, N + 1), dtype=bool)
        for di in range(3):
            for dj in range(3):
                win |= hit[di:di + N + 1, dj:dj + N + 1]
        seen &= win
    qq, rr = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    seen &= (qq < N) & (qq + rr <= N - 1)
    return [(int(q), int(r)) for q, r in zip(*np.nonzero(seen))]


def _solve_cell(inst, q, r, eps2):
    """Exact zeros of the piecewise-bilinear operator on cell ``(q, r)``, verified."""
    N = inst.N
    bu = _breakpoints(q, q + 1, inst.k)
    bv = _breakpoints(r, r + 1, inst.k)
    UU, VV = np.meshgrid(bu, bv, indexing="ij")
    P = inst.to_point(UU / N, VV / N)
    c, R = inst.ambient.center, inst.ambient.radius
    inside = np.linalg.norm(P - c, axis=-1) <= R
    F = np.zeros(P.shape)
    F[inside] = _operator_batch(inst, P[inside])
    ok = inside[:-1, :-1] & inside[1:, :-1] & inside[:-1, 1:] & inside[1:, 1:]
    ii, jj = np.nonzero(ok)
    if ii.size == 0:
        return None
    cells, al, be = _bilinear_roots(F[ii, jj], F[ii + 1, jj], F[ii, jj + 1], F[ii + 1, jj + 1])
    if cells.size == 0:
        return None
    i, j = ii[cells], jj[cells]
    u = bu[i] + al * (bu[i + 1] - bu[i])
    v = bv[j] + be * (bv[j + 1] - bv[j])
    X = inst.to_point(u / N, v / N)
    gaps = svi_gaps(inst, X)
    best = int(np.argmin(gaps))
    if gaps[best] <= eps2:
        return X[best], float(gaps[best])
    return None


def find_vi_solution(inst, eps2=None, max_n=8):
    """A point whose Stampacchia gap for ``-F'`` is at most ``eps2``.

    First scans the refined grid of ``(4N + 1)^2`` points.  The solution set
    is far narrower than that grid, so candidate cells (three colors in the
    anchor window) are then solved exactly: on each piece where the set of
    blending samples is fixed the operator is bilinear, and its zeros are
    computed in closed form and re-verified with the real operator.
    """
    if inst.n > max_n:
        raise ValueError(f"find_vi_solution limited to n <= {max_n}")
    eps2 = inst.eps_double_prime if eps2 is None else eps2
    P = refined_grid(inst)
    gaps = svi_gaps(inst, P)
    best = int(np.argmin(gaps))
    if gaps[best] <= eps2:
        return P[best]
    for q, r in _candidate_cells(inst):
        hit = _solve_cell(inst, q, r, eps2)
        if hit is not None:
            return hit[0]
    err = SpernerError(f"no point with gap <= {eps2:g} at this resolution "
                       f"(best grid gap {gaps[best]:g}); refine the search")
    err.best_point, err.best_gap = P[best], float(gaps[best])
    raise err


def lipschitz_estimate(inst, refine=4):
    """Largest ``||F'(x) - F'(y)|| / ||x - y||`` over adjacent refined-grid pairs."""
    M = refine * inst.N
    s = np.arange(M + 1) / M
    S, T = np.meshgrid(s, s, indexing="ij")
    P = inst.to_point(S, T)
    c, R = inst.ambient.center, inst.ambient.radius
    inside = np.linalg.norm(P - c, axis=-1) <= R
    F = np.full(P.shape, np.nan)
    F[inside] = _operator_batch(inst, P[inside]) / inst.N
    worst = 0.0
    for ax in (0, 1):
        dF = np.diff(F, axis=ax)
        dX = np.diff(P, axis=ax)
        ratio = np.linalg.norm(dF, axis=-1) / np.linalg.norm(dX, axis=-1)
        worst = max(worst, float(np.nanmax(ratio)))
    return worst
