"""Network covariance: kernels, path weights, path-sum and closed-form assembly.

Cov(Z_x, Z_y) = theta_s                      x == y
              = 0                            no directed path either way
              = sum_p w_p C(|p|)             over walks x -> y never revisiting x, and y -> x likewise

w_p = prod_{[a,b] in p} pi[a,b] / sqrt(influx(b)) * U(v2, v1) / sqrt(U(v1) U(v2))
for a walk from v1 to v2. For the exponential kernel the walk sum is a
Neumann series and has a closed form, (I - R)^-1 with R = P o exp(-D/theta_r).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import pdist, squareform

from flowcov.core.errors import NumericalError
from flowcov.core.markov import fundamental_matrix, nonreturn_matrix
from flowcov.core.types import DirectedNetwork, KernelSpec, MarkovSolution, PathWeight

logger = logging.getLogger(__name__)

DEFAULT_WEIGHT_FLOOR = 1e-12
HOP_LIMIT = 10_000  # hard stop when no max_hops is given
LENGTH_KEY_SCALE = 1e9  # walks whose lengths agree to 1e-9 km merge
METHODS = ('closed-form', 'path-sum')


def kernel_cov(k: KernelSpec, h: float | np.ndarray) -> np.ndarray:
    """C(h) for the kernel family; h >= 0, broadcasts over arrays."""
    h = np.asarray(h, dtype=float)
    r = h / k.range
    if k.kind == 'exponential':
        return np.asarray(k.sill * np.exp(-r))
    if k.kind == 'spherical':
        return np.asarray(np.where(r < 1.0, k.sill * (1.0 - 1.5 * r + 0.5 * r**3), 0.0))
    return np.asarray(np.where(r < 1.0, k.sill * (1.0 - r), 0.0))


def edge_factors(net: DirectedNetwork) -> np.ndarray:
    """pi[a,b] / sqrt(sum_k pi[k,b]) for every edge, in edge order."""
    influx = net.influx
    return np.array([e.prob / np.sqrt(influx[e.head]) for e in net.edges], dtype=float)


def _correction(markov: MarkovSolution, x: int, y: int) -> float:
    """U(y, x) / sqrt(U(x) U(y)) for a walk from x ending at y."""
    assert markov.U_pair is not None
    return float(markov.U_pair[y, x] / np.sqrt(markov.U[x] * markov.U[y]))


def enumerate_paths(
    net: DirectedNetwork,
    markov: MarkovSolution,
    x: int,
    y: int,
    max_hops: int | None = None,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    kernel: KernelSpec | None = None,
) -> list[PathWeight]:
    """Depth-first enumeration of the walks x -> y that never revisit x.

    Walks may pass through y and come back to it; each arrival is a path.
    A branch is cut when its accumulated weight (times the kernel decay, if a
    kernel is given) drops below weight_floor, when it exceeds max_hops
    (default HOP_LIMIT), or when a compact-support kernel reaches its range.
    """
    if x == y:
        raise ValueError('enumerate_paths needs x != y')
    if max_hops is None:
        max_hops = HOP_LIMIT
    influx = net.influx
    corr = _correction(markov, x, y)
    found: list[PathWeight] = []

    # (vertex, path, length, pi product, factor product, influx product)
    stack: list[tuple[int, tuple[tuple[int, int], ...], float, float, float, float]] = [(x, (), 0.0, 1.0, 1.0, 1.0)]
    while stack:
        vertex, path, length, pi_prod, fac_prod, in_prod = stack.pop()
        if len(path) >= max_hops:
            continue
        for e in reversed(net.out_edges(vertex)):
            if e.head == x:
                continue
            new_len = length + e.length
            new_fac = fac_prod * e.prob / np.sqrt(influx[e.head])
            if kernel is not None:
                if kernel.compact and new_len >= kernel.range:
                    continue
                bound = new_fac * float(kernel_cov(kernel, new_len)) / kernel.sill
            else:
                bound = new_fac
            if bound < weight_floor:
                continue
            new_path = (*path, (e.tail, e.head))
            new_pi = pi_prod * e.prob
            new_in = in_prod * influx[e.head]
            if e.head == y:
                found.append(
                    PathWeight(
                        path=new_path,
                        length=new_len,
                        pi_product=new_pi,
                        beta=float(new_in * markov.U[y]),
                        weight=float(new_fac * corr),
                    )
                )
            stack.append((e.head, new_path, new_len, new_pi, new_fac, new_in))
    return found


@dataclass
class WalkProfile:
    """Walks from one source grouped by (end vertex, length).

    weights are the raw factor products (before the U correction);
    counts are the number of walks merged into each group.
    """

    source: int
    targets: np.ndarray
    lengths: np.ndarray
    weights: np.ndarray
    counts: np.ndarray
    truncated_mass: float = 0.0


class _EdgeTable:
    """CSR view of the edges with per-edge factor and length."""

    def __init__(self, net: DirectedNetwork):
        n = net.n
        order = sorted(range(len(net.edges)), key=lambda i: (net.edges[i].tail, i))
        tails = np.array([net.edges[i].tail for i in order], dtype=np.int64)
        self.heads = np.array([net.edges[i].head for i in order], dtype=np.int64)
        self.lengths = np.array([net.edges[i].length for i in order], dtype=float)
        self.factors = edge_factors(net)[order] if order else np.zeros(0)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, tails + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        self.outdeg = np.diff(self.indptr)


def _merge(verts: np.ndarray, lengths: np.ndarray, weights: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, ...]:
    if verts.size == 0:
        return verts.astype(np.int64), lengths, weights, counts
    keys = np.column_stack([verts, np.rint(lengths * LENGTH_KEY_SCALE).astype(np.int64)])
    uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    w = np.bincount(inverse, weights=weights, minlength=len(uniq))
    c = np.bincount(inverse, weights=counts, minlength=len(uniq))
    return uniq[:, 0].astype(np.int64), lengths[first], w, c


def walk_profile(
    net: DirectedNetwork,
    source: int,
    max_hops: int | None = None,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    kernel: KernelSpec | None = None,
    table: _EdgeTable | None = None,
) -> WalkProfile:
    """Hop-synchronous propagation of walk weights from `source`, merging equal (vertex, length) groups.

    Same pruning rules as enumerate_paths, applied to merged groups. Without
    max_hops the propagation runs until every group is pruned; weight left on
    groups that could still move when the hop cap stops it is truncated_mass.
    """
    if max_hops is None:
        max_hops = HOP_LIMIT
    table = table or _EdgeTable(net)
    verts = np.array([source], dtype=np.int64)
    lens = np.zeros(1)
    w = np.ones(1)
    c = np.ones(1)
    rec: list[tuple[np.ndarray, ...]] = []

    hop = 0
    while verts.size and hop < max_hops:
        hop += 1
        deg = table.outdeg[verts]
        total = int(deg.sum())
        if total == 0:
            verts = verts[:0]
            break
        parent = np.repeat(np.arange(verts.size), deg)
        offset = np.arange(total) - np.repeat(np.cumsum(deg) - deg, deg)
        eidx = table.indptr[verts][parent] + offset

        nv = table.heads[eidx]
        nl = lens[parent] + table.lengths[eidx]
        nw = w[parent] * table.factors[eidx]
        nc = c[parent]

        keep = nv != source
        if kernel is not None:
            if kernel.compact:
                keep &= nl < kernel.range
            bound = nw * kernel_cov(kernel, nl) / kernel.sill
        else:
            bound = nw
        keep &= bound >= weight_floor
        verts, lens, w, c = _merge(nv[keep], nl[keep], nw[keep], nc[keep])
        if verts.size:
            rec.append((verts, lens, w, c))

    truncated = float(w[table.outdeg[verts] > 0].sum()) if verts.size else 0.0
    if rec:
        targets, lengths, weights, counts = _merge(*(np.concatenate(parts) for parts in zip(*rec, strict=True)))
    else:
        targets, lengths, weights, counts = (np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0), np.zeros(0))
    return WalkProfile(source, targets, lengths, weights, counts, truncated_mass=truncated)


def walk_profiles(
    net: DirectedNetwork,
    max_hops: int | None = None,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    kernel: KernelSpec | None = None,
    threads: int = 1,
    strict: bool = False,
) -> list[WalkProfile]:
    """walk_profile for every source vertex, in vertex order.

    Truncated propagation is logged, or raised as NumericalError when strict.
    """
    if max_hops is None:
        max_hops = HOP_LIMIT
    table = _EdgeTable(net)

    def one(x: int) -> WalkProfile:
        return walk_profile(net, x, max_hops, weight_floor, kernel, table)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            profiles = list(pool.map(one, range(net.n)))
    else:
        profiles = [one(x) for x in range(net.n)]
    truncated = [p for p in profiles if p.truncated_mass > weight_floor]
    if truncated:
        worst = max(truncated, key=lambda p: p.truncated_mass)
        if strict:
            raise NumericalError(
                f'walk propagation from vertex {worst.source} still carries weight {worst.truncated_mass:.3e} '
                f'after max_hops={max_hops}; raise --max-hops or --weight-floor'
            )
        logger.warning(
            'path enumeration hit max_hops=%d from %d source(s); largest residual weight %.3e at vertex %d',
            max_hops,
            len(truncated),
            worst.truncated_mass,
            worst.source,
        )
    return profiles


def cov_pathsum(
    net: DirectedNetwork,
    markov: MarkovSolution,
    k: KernelSpec,
    x: int,
    y: int,
    max_hops: int | None = None,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    explicit: bool = False,
) -> float:
    """Covariance of one pair by summing w_p C(|p|) over the walks in both directions.

    explicit=True lists every walk through enumerate_paths; the default
    groups walks by (end vertex, length) first, which gives the same sum and
    raises NumericalError if the hop cap stops it early.
    """
    if x == y:
        return k.sill
    if not (markov.reach[x, y] or markov.reach[y, x]):
        return 0.0

    total = 0.0
    for a, b in ((x, y), (y, x)):
        if not markov.reach[a, b]:
            continue
        if explicit:
            paths = enumerate_paths(net, markov, a, b, max_hops, weight_floor, kernel=k)
            total += sum(p.weight * float(kernel_cov(k, p.length)) for p in paths)
            continue
        prof = walk_profile(net, a, max_hops, weight_floor, kernel=k)
        if prof.truncated_mass > weight_floor:
            raise NumericalError(
                f'pair ({a}, {b}): walks still carry weight {prof.truncated_mass:.3e} '
                f'after max_hops={max_hops or HOP_LIMIT}'
            )
        mask = prof.targets == b
        total += _correction(markov, a, b) * float(np.sum(prof.weights[mask] * kernel_cov(k, prof.lengths[mask])))
    return total


def cov_matrix_pathsum(
    net: DirectedNetwork,
    markov: MarkovSolution,
    k: KernelSpec,
    max_hops: int | None = None,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    threads: int = 1,
) -> np.ndarray:
    """Full covariance matrix by path sums; works for every kernel kind.

    Walks are propagated until their weight falls below weight_floor; a
    propagation the hop cap stops first raises NumericalError.
    """
    assert markov.U_pair is not None
    n = net.n
    half = np.zeros((n, n))
    for prof in walk_profiles(net, max_hops, weight_floor, kernel=k, threads=threads, strict=True):
        np.add.at(half[prof.source], prof.targets, prof.weights * kernel_cov(k, prof.lengths))
    half *= _correction_matrix(markov)
    return _symmetrize(half, k.sill)


def cov_matrix_exponential(net: DirectedNetwork, markov: MarkovSolution, sill: float, range_: float) -> np.ndarray:
    """Closed form for the exponential kernel.

    S = (I - R)^-1 sums every walk; dividing row x by S[x, x] drops the walks
    that come back to x; the U correction and symmetrisation follow.
    """
    n = net.n
    if n == 0:
        return np.zeros((0, 0))
    if markov.U_pair is None:
        markov.U_pair = nonreturn_matrix(markov.G, net)
    decay = edge_factors(net) * np.exp(-np.array([e.length for e in net.edges]) / range_)
    R = sp.csr_matrix((decay, ([e.tail for e in net.edges], [e.head for e in net.edges])), shape=(n, n))
    # R is not stochastic; the chain itself was checked when markov was solved
    S = fundamental_matrix(R, check=False)
    S_star = S / np.diag(S)[:, None]
    S_star[~markov.reach] = 0.0
    half = S_star * _correction_matrix(markov)
    return _symmetrize(half, sill, scale=sill)


def cov_matrix_euclidean(coords: np.ndarray, k: KernelSpec) -> np.ndarray:
    """Isotropic baseline: C(||s_i - s_j||)."""
    coords = np.asarray(coords, dtype=float)
    if coords.shape[0] == 0:
        return np.zeros((0, 0))
    return np.asarray(kernel_cov(k, squareform(pdist(coords))))


def covariance_matrix(
    net: DirectedNetwork,
    markov: MarkovSolution,
    k: KernelSpec,
    method: str = 'closed-form',
    max_hops: int | None = None,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    threads: int = 1,
) -> np.ndarray:
    if method not in METHODS:
        raise ValueError(f'Unknown method: {method}. Available: {", ".join(METHODS)}')
    if method == 'closed-form':
        if k.kind != 'exponential':
            raise ValueError(f'closed-form assembly exists only for the exponential kernel, not {k.kind}')
        return cov_matrix_exponential(net, markov, k.sill, k.range)
    return cov_matrix_pathsum(net, markov, k, max_hops, weight_floor, threads)


def _correction_matrix(markov: MarkovSolution) -> np.ndarray:
    """corr[x, y] = U(y, x) / sqrt(U(x) U(y))."""
    assert markov.U_pair is not None
    return np.asarray(markov.U_pair.T / np.sqrt(np.outer(markov.U, markov.U)))


def _symmetrize(half: np.ndarray, sill: float, scale: float = 1.0) -> np.ndarray:
    np.fill_diagonal(half, 0.0)
    sigma = scale * (half + half.T)
    np.fill_diagonal(sigma, sill)
    return sigma
