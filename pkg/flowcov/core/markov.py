"""Absorbing Markov chain quantities: fundamental matrix, non-return probabilities, reachability.

G = (I - pi_V)^-1 counts expected visits. U(x) = 1/G[x, x] is the probability
of never coming back to x. U(x, y) is the probability that the chain started
at x never returns to A = {x, y}; it is obtained from G through the first-hit
decomposition G[x1, v] = sum_{k in A} P(X_{H^A} = k | x1) G[k, v].
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from flowcov.core.errors import RecurrentSubnetworkError, SingularPairError
from flowcov.core.types import DirectedNetwork, MarkovSolution

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
BLOCK = 256
LEAK_TOL = 1e-12


def fundamental_matrix(pi_v: np.ndarray | sp.spmatrix, check: bool = True) -> np.ndarray:
    """G = (I - pi_V)^-1, dense up to DENSE_LIMIT vertices, sparse LU column blocks beyond.

    check runs the transience test, which reads row sums as transition mass;
    pass check=False for weighted matrices that are not substochastic.
    """
    pi = sp.csr_matrix(pi_v)
    n = pi.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    if check:
        _check_transient(pi)

    system = sp.identity(n, format='csc') - pi.tocsc()
    if n <= DENSE_LIMIT:
        try:
            return np.asarray(scipy.linalg.solve(system.toarray(), np.eye(n)))
        except scipy.linalg.LinAlgError as exc:
            raise RecurrentSubnetworkError(list(range(n))) from exc

    lu = spla.splu(system)
    G = np.empty((n, n))
    for start in range(0, n, BLOCK):
        stop = min(start + BLOCK, n)
        rhs = np.zeros((n, stop - start))
        rhs[np.arange(start, stop), np.arange(stop - start)] = 1.0
        G[:, start:stop] = lu.solve(rhs)
    return G


def nonreturn_single(G: np.ndarray) -> np.ndarray:
    """U(x) = 1 / G[x, x]."""
    return 1.0 / np.diag(G)


def first_hit_probabilities(G: np.ndarray, x1: int, x: int, y: int) -> np.ndarray:
    """(P(X_H = x | x1), P(X_H = y | x1)) for the first hit H of A = {x, y}."""
    g_aa = _pair_block(G, x, y)
    row = np.array([G[x1, x], G[x1, y]])
    return np.asarray(np.linalg.solve(g_aa.T, row))


def nonreturn_pair(G: np.ndarray, net: DirectedNetwork, x: int, y: int) -> float:
    """U(x, y): probability that the chain from x never returns to {x, y}.

    Mass sent to the sink never hits A and counts fully.
    """
    if x == y:
        raise ValueError('nonreturn_pair needs x != y')
    b = np.linalg.solve(_pair_block(G, x, y), np.ones(2))
    total = float(net.sink_mass[x])
    for e in net.out_edges(x):
        if e.head in (x, y):
            continue
        h = G[e.head, x] * b[0] + G[e.head, y] * b[1]
        total += e.prob * (1.0 - h)
    return float(np.clip(total, 0.0, 1.0))


def nonreturn_matrix(G: np.ndarray, net: DirectedNetwork, threads: int = 1) -> np.ndarray:
    """All U(x, y) at once; row x is vectorised over y. The diagonal holds U(x)."""
    n = G.shape[0]
    diag = np.diag(G).copy()
    out = np.empty((n, n))

    def row(x: int) -> np.ndarray:
        gxx = G[x, x]
        gxy = G[x, :]
        gyx = G[:, x]
        det = gxx * diag - gxy * gyx
        det[x] = 1.0
        bad = np.flatnonzero(det <= 1e-300)
        if bad.size:
            raise SingularPairError(x, int(bad[0]))
        b0 = (diag - gxy) / det
        b1 = (gxx - gyx) / det
        u = np.full(n, float(net.sink_mass[x]))
        for e in net.out_edges(x):
            h = G[e.head, x] * b0 + G[e.head, :] * b1
            contrib = e.prob * (1.0 - h)
            contrib[e.head] = 0.0
            u += contrib
        u = np.clip(u, 0.0, 1.0)
        u[x] = 1.0 / gxx
        return u

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(n)))
    else:
        rows = [row(x) for x in range(n)]
    for x, r in enumerate(rows):
        out[x] = r
    return out


def reachability(net: DirectedNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Transitive closure by breadth-first traversal; returns (reach, hop distances)."""
    n = net.n
    if n == 0:
        return np.zeros((0, 0), dtype=bool), np.zeros((0, 0))
    adjacency = sp.csr_matrix((np.ones(len(net.edges)), ([e.tail for e in net.edges], [e.head for e in net.edges])),
                              shape=(n, n))
    hops = csgraph.shortest_path(adjacency, method='D', directed=True, unweighted=True)
    return np.isfinite(hops), hops


def solve_chain(net: DirectedNetwork, pairs: bool = True, threads: int = 1) -> MarkovSolution:
    """Everything the covariance model needs from the chain."""
    G = fundamental_matrix(net.transition)
    reach, hops = reachability(net)
    U = nonreturn_single(G)
    U_pair = nonreturn_matrix(G, net, threads=threads) if pairs else None
    return MarkovSolution(G=G, U=U, reach=reach, hops=hops, U_pair=U_pair)


def _pair_block(G: np.ndarray, x: int, y: int) -> np.ndarray:
    g_aa = np.array([[G[x, x], G[x, y]], [G[y, x], G[y, y]]])
    if abs(np.linalg.det(g_aa)) <= 1e-300:
        raise SingularPairError(x, y)
    return g_aa


def _check_transient(pi: sp.csr_matrix) -> None:
    """Every vertex must reach a leaky vertex (row sum < 1); otherwise name the closed component."""
    n = pi.shape[0]
    leaky = np.flatnonzero(1.0 - np.asarray(pi.sum(axis=1)).ravel() > LEAK_TOL)
    reverse = (pi.T != 0).astype(float).tocsr()
    drains = np.zeros(n, dtype=bool)
    drains[leaky] = True
    frontier = list(leaky)
    while frontier:
        v = frontier.pop()
        for u in reverse.indices[reverse.indptr[v] : reverse.indptr[v + 1]]:
            if not drains[u]:
                drains[u] = True
                frontier.append(int(u))
    if drains.all():
        return
    _ncomp, labels = csgraph.connected_components(pi != 0, directed=True, connection='strong')
    stuck = np.flatnonzero(~drains)
    coo = pi.tocoo()
    leaving = {int(labels[i]) for i, j in zip(coo.row, coo.col, strict=True) if labels[i] != labels[j]}
    closed = [int(labels[v]) for v in stuck if int(labels[v]) not in leaving]
    label = closed[0] if closed else int(labels[stuck[0]])
    component = sorted(int(v) for v in np.flatnonzero(labels == label))
    logger.debug('non-transient vertices: %s', stuck.tolist())
    raise RecurrentSubnetworkError(component)
