"""Strategic classification on finite populations and the local max-cut gadget.

A population point ``x`` moves to ``y`` only if ``f(y) - c(x, y)`` strictly
beats staying (``f(x)``); ties stay, and among equally good targets the
lowest id wins.  The Jury's utility is the weighted fraction of points whose
post-move label matches the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_matrix

CLOSE, FAR = 0.8, 1.2


@dataclass
class WeightedGraph:
    vertices: list
    edges: list  # (u, v, w)

    def __post_init__(self):
        self.vertices = list(self.vertices)
        index = set(self.vertices)
        if len(index) != len(self.vertices):
            raise ValueError("duplicate vertices")
        seen = set()
        clean = []
        for u, v, w in self.edges:
            if u not in index or v not in index:
                raise ValueError(f"edge ({u}, {v}) references an unknown vertex")
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if w < 0:
                raise ValueError(f"negative weight on ({u}, {v})")
            key = frozenset((u, v))
            if key in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            seen.add(key)
            clean.append((u, v, float(w)))
        self.edges = clean

    def neighbors(self, v):
        out = []
        for a, b, w in self.edges:
            if a == v:
                out.append((b, w))
            elif b == v:
                out.append((a, w))
        return out

    def to_json(self):
        return {"vertices": self.vertices,
                "edges": [{"u": u, "v": v, "w": w} for u, v, w in self.edges]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["vertices"], [(e["u"], e["v"], e.get("w", 1.0)) for e in obj["edges"]])

    @classmethod
    def from_networkx(cls, G, weight="weight", default=1.0):
        return cls(list(G.nodes), [(u, v, d.get(weight, default)) for u, v, d in G.edges(data=True)])


@dataclass
class StratClassInstance:
    weights: np.ndarray
    targets: np.ndarray
    cost: np.ndarray
    gadget: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        h = np.asarray(self.targets, dtype=np.int8)
        if w.ndim != 1 or h.shape != w.shape:
            raise ValueError("weights and targets must be vectors of equal length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if w.size and w.sum() <= 0:
            raise ValueError("total weight must be positive")
        if not np.all(np.isin(h, (0, 1))):
            raise ValueError("targets must be 0/1")
        if w.size:
            C = check_matrix(self.cost, shape=(w.size, w.size), name="cost")
        else:
            C = np.zeros((0, 0))
        if not np.array_equal(C, C.T) or np.any(np.diag(C) != 0) or np.any(C < 0):
            raise ValueError("cost must be symmetric, nonnegative, zero on the diagonal")
        self.weights, self.targets, self.cost = w, h, C

    @property
    def size(self):
        return self.weights.size

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def check_labels(self, f):
        f = np.asarray(f, dtype=np.int8)
        if f.shape != (self.size,) or not np.all(np.isin(f, (0, 1))):
            raise ValueError(f"classifier must be a 0/1 vector of length {self.size}")
        return f


def _best_response_batch(cost, F):
    """Targets for every row of the classifier batch ``F`` (shape ``(b, n)``)."""
    # payoff[b, x, y] = f_b(y) - c(x, y)
    pay = F[:, None, :].astype(float) - cost[None, :, :]
    best = np.argmax(pay, axis=2)  # lowest id among maximisers
    top = np.take_along_axis(pay, best[..., None], axis=2)[..., 0]
    stay = F.astype(float)
    n = cost.shape[0]
    ident = np.broadcast_to(np.arange(n), best.shape)
    return np.where(top > stay, best, ident)


def best_response(inst, f):
    """Deviation map as an index array: point ``x`` moves to ``out[x]``."""
    f = inst.check_labels(f)
    if inst.size == 0:
        return np.zeros(0, dtype=int)
    return _best_response_batch(inst.cost, f[None, :])[0]


def _utilities_batch(inst, F):
    """Unnormalised utilities for a batch of classifiers."""
    moved = _best_response_batch(inst.cost, F)
    labels = np.take_along_axis(F, moved, axis=1)
    return (labels == inst.targets[None, :]) @ inst.weights


def jury_utility(inst, f):
    f = inst.check_labels(f)
    if inst.size == 0:
        return 1.0
    return float(_utilities_batch(inst, f[None, :])[0] / inst.total_weight)


def _flip_batch(f):
    F = np.repeat(f[None, :], f.size, axis=0)
    idx = np.arange(f.size)
    F[idx, idx] ^= 1
    return F


@dataclass
class LocalSearchResult:
    labels: np.ndarray
    utility: float
    path: list
    utilities: list

    @property
    def steps(self):
        return len(self.path)


def _improvement_tol(inst):
    return 1e-12 * max(inst.total_weight, 1.0)


def local_search(inst, f0, max_steps=None):
    """First-improvement single-flip search to a strategic local optimum."""
    f = inst.check_labels(f0).copy()
    if inst.size == 0:
        return LocalSearchResult(f, 1.0, [], [1.0])
    tol = _improvement_tol(inst)
    cur = float(_utilities_batch(inst, f[None, :])[0])
    path, utils = [], [cur / inst.total_weight]
    while max_steps is None or len(path) < max_steps:
        flips = _utilities_batch(inst, _flip_batch(f))
        better = np.flatnonzero(flips > cur + tol)
        if better.size == 0:
            break
        i = int(better[0])
        f[i] ^= 1
        cur = float(flips[i])
        path.append(i)
        utils.append(cur / inst.total_weight)
    return LocalSearchResult(f, cur / inst.total_weight, path, utils)


def is_strategic_local_opt(inst, f):
    f = inst.check_labels(f)
    if inst.size == 0:
        return True
    cur = _utilities_batch(inst, f[None, :])[0]
    flips = _utilities_batch(inst, _flip_batch(f))
    return bool(np.all(flips <= cur + _improvement_tol(inst)))


def _all_classifiers(n):
    codes = np.arange(2 ** n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8)


def strategic_optima(inst, max_points=16, chunk=4096):
    """All globally optimal classifiers and the optimal utility (exhaustive)."""
    n = inst.size
    if n > max_points:
        raise ValueError(f"exhaustive search limited to {max_points} points")
    if n == 0:
        return [np.zeros(0, dtype=np.int8)], 1.0
    allF = _all_classifiers(n)
    utils = np.concatenate([_utilities_batch(inst, allF[i:i + chunk])
                            for i in range(0, allF.shape[0], chunk)])
    best = utils.max()
    winners = np.flatnonzero(utils >= best - _improvement_tol(inst))
    return [allF[i] for i in winners], float(best / inst.total_weight)


def brute_force_strategic_opt(inst, max_points=16):
    winners, u = strategic_optima(inst, max_points)
    return winners[0], u


# --------------------------------------------------------------------------
# gadget

def build_maxcut_gadget(g, close=CLOSE, far=FAR):
    """Population whose strategic local optima encode local max cuts of ``g``.

    Point order: one point per vertex (label 0, weight = incident edge weight),
    then per edge a ``+`` point (label 1, weight 2w) and a ``-`` point
    (label 0, weight 2w + 1).
    """
    if not (0 < close < 1 < far):
        raise ValueError("costs must satisfy 0 < close < 1 < far")
    V = g.vertices
    vid = {v: i for i, v in enumerate(V)}
    nV, nE = len(V), len(g.edges)
    n = nV + 2 * nE
    weights = np.zeros(n)
    targets = np.zeros(n, dtype=np.int8)
    C = np.full((n, n), far)
    for j, (u, v, w) in enumerate(g.edges):
        plus, minus = nV + 2 * j, nV + 2 * j + 1
        weights[vid[u]] += w
        weights[vid[v]] += w
        weights[plus] = 2 * w
        weights[minus] = 2 * w + 1
        targets[plus] = 1
        for a, b in ((vid[u], plus), (vid[v], plus), (plus, minus)):
            C[a, b] = C[b, a] = close
    np.fill_diagonal(C, 0.0)
    if n and not _triangle_inequality(C):
        raise ValueError("gadget costs violate the triangle inequality")
    meta = {"graph": g, "vertex_index": vid, "n_vertices": nV}
    return StratClassInstance(weights, targets, C, meta)


def _triangle_inequality(C, tol=1e-12):
    # c(x, z) <= c(x, y) + c(y, z) for all triples
    return bool(np.all(C[:, None, :] <= C[:, :, None] + C[None, :, :] + tol))


def edge_point_indices(inst):
    nV = inst.gadget["n_vertices"]
    return np.arange(nV, inst.size)


def recover_cut(inst, f):
    """Split vertices by the label of their vertex point: ``(label 0, label 1)``."""
    f = inst.check_labels(f)
    meta = inst.gadget
    if meta is None:
        raise ValueError("instance was not built from a graph")
    g = meta["graph"]
    zero = [v for v in g.vertices if f[meta["vertex_index"][v]] == 0]
    one = [v for v in g.vertices if f[meta["vertex_index"][v]] == 1]
    return zero, one


def cut_weight(g, cut):
    side = set(cut[1])
    return float(sum(w for u, v, w in g.edges if (u in side) != (v in side)))


def is_local_maxcut(g, cut, tol=1e-12):
    """No single vertex switching sides increases the cut weight."""
    side = set(cut[1])
    for v in g.vertices:
        gain = sum(w if (v in side) == (u in side) else -w for u, w in g.neighbors(v))
        if gain > tol:
            return False
    return True


def utility_delta(inst, f, v, direction="0->1", check=True):
    """Closed-form utility change from flipping vertex point ``v``.

    Requires every edge point labelled 0.  For ``0->1`` the change is
    ``(sum of w over neighbours labelled 0 - sum over neighbours labelled 1) / M``;
    ``1->0`` is its negation.  With ``check`` the value is compared against a
    recomputation and a mismatch above 1e-12 raises.
    """
    f = inst.check_labels(f)
    meta = inst.gadget
    if meta is None:
        raise ValueError("utility_delta needs a gadget instance")
    if np.any(f[edge_point_indices(inst)] != 0):
        raise ValueError("closed form assumes all edge-point labels are 0")
    vid = meta["vertex_index"]
    i = vid[v]
    want = 0 if direction == "0->1" else 1
    if direction not in ("0->1", "1->0"):
        raise ValueError("direction must be '0->1' or '1->0'")
    if f[i] != want:
        raise ValueError(f"vertex {v} is not labelled {want}")
    g = meta["graph"]
    neg = sum(w for u, w in g.neighbors(v) if f[vid[u]] == 0)
    pos = sum(w for u, w in g.neighbors(v) if f[vid[u]] == 1)
    delta = (neg - pos) / inst.total_weight
    if direction == "1->0":
        delta = -delta
    if check:
        flipped = f.copy()
        flipped[i] ^= 1
        actual = jury_utility(inst, flipped) - jury_utility(inst, f)
        if abs(actual - delta) > 1e-12:
            raise ArithmeticError(f"closed-form delta {delta} != recomputed {actual}")
    return delta


def cut_start(inst, vertex_labels=None, rng=None):
    """Gadget classifier with every edge point labelled 0.

    Vertex labels are taken from ``vertex_labels`` or drawn from ``rng``
    (all 0 when neither is given).  Local search never leaves this
    subspace, which is where the edge-label property of local optima holds;
    unrestricted starts can stall at plateaus such as the all-ones
    classifier.
    """
    nV = inst.gadget["n_vertices"]
    f = np.zeros(inst.size, dtype=np.int8)
    if vertex_labels is not None:
        f[:nV] = np.asarray(vertex_labels, dtype=np.int8)
    elif rng is not None:
        f[:nV] = rng.integers(0, 2, nV)
    return inst.check_labels(f)
