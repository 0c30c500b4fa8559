"""Penalised least-squares estimation of the network covariance.

1. theta_s from unconnected pairs: (1 / 2|H_inf|) sum (Z_x - Z_y)^2.
2. For connected pairs, theta_s - gamma_i = sum_j W[i, j] C(h_j), with W
   aggregating path weights by distance bin.
3. C_hat = (W'W + lambda I)^-1 W' (theta_s 1 - gamma), lambda the smallest
   value with ||C_hat||_inf <= theta_s guaranteed (diagonal dominance).
4. theta_r by least squares of the parametric kernel against C_hat.

The Euclidean baseline fits a classical method-of-moments semivariogram.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from scipy.spatial.distance import pdist
from sklearn.linear_model import ridge_regression

from flowcov.core.covariance import DEFAULT_WEIGHT_FLOOR, kernel_cov, walk_profiles
from flowcov.core.errors import EstimationError, ValidationError
from flowcov.core.types import Bin, DirectedNetwork, EmpiricalCovariance, KernelSpec, MarkovSolution

logger = logging.getLogger(__name__)

DEFAULT_BINS = 15
LAMBDA_FLOOR = 1e-8
FIT_TOL = 1e-6


@dataclass
class PathCatalog:
    """Every retained walk between connected vertex pairs, grouped by length.

    Records are keyed by the unordered pair (i < j) and hold the corrected
    path weight w_p summed over merged walks plus the number of merged walks.
    """

    n: int
    i: np.ndarray
    j: np.ndarray
    lengths: np.ndarray
    weights: np.ndarray
    counts: np.ndarray
    truncated_mass: float = 0.0  # walk weight still alive when max_hops cut the propagation

    def restrict(self, mask: np.ndarray) -> PathCatalog:
        keep = mask[self.i] & mask[self.j]
        return PathCatalog(
            self.n,
            self.i[keep],
            self.j[keep],
            self.lengths[keep],
            self.weights[keep],
            self.counts[keep],
            self.truncated_mass,
        )


@dataclass
class RangeFit:
    theta_r: float
    degenerate: bool
    lower: float
    upper: float


@dataclass
class NetworkFit:
    """Result of the full estimation pipeline."""

    kernel: KernelSpec | None
    empirical: EmpiricalCovariance
    range_fit: RangeFit
    replicates: int = 1
    diagnostics: dict = field(default_factory=dict)


@dataclass
class EuclideanFit:
    theta_s: float
    theta_r: float
    h: np.ndarray
    gamma: np.ndarray
    degenerate: bool


def build_path_catalog(
    net: DirectedNetwork,
    markov: MarkovSolution,
    max_hops: int | None = None,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    threads: int = 1,
) -> PathCatalog:
    """Collect the walks of both orientations for every connected pair.

    max_hops defaults to 4x the hop diameter; weight cut off by it is kept in
    truncated_mass and reported with the fit.
    """
    assert markov.U_pair is not None
    if max_hops is None:
        max_hops = max(1, 4 * markov.diameter)
    parts_i, parts_j, parts_l, parts_w, parts_c = [], [], [], [], []
    truncated = 0.0
    for prof in walk_profiles(net, max_hops, weight_floor, threads=threads):
        truncated += prof.truncated_mass
        x = prof.source
        v = prof.targets
        corr = markov.U_pair[v, x] / np.sqrt(markov.U[x] * markov.U[v])
        parts_i.append(np.minimum(x, v))
        parts_j.append(np.maximum(x, v))
        parts_l.append(prof.lengths)
        parts_w.append(prof.weights * corr)
        parts_c.append(prof.counts)
    if not parts_i:
        empty = np.zeros(0)
        return PathCatalog(net.n, empty.astype(np.int64), empty.astype(np.int64), empty, empty, empty, truncated)
    return PathCatalog(
        net.n,
        np.concatenate(parts_i).astype(np.int64),
        np.concatenate(parts_j).astype(np.int64),
        np.concatenate(parts_l),
        np.concatenate(parts_w),
        np.concatenate(parts_c),
        truncated,
    )


def connected_pairs(reach: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Pairs (i < j) joined by a directed path in at least one direction."""
    return _pairs(reach | reach.T, mask)


def unconnected_pairs(reach: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """H_inf: pairs (i < j) with no directed path either way."""
    return _pairs(~(reach | reach.T), mask)


def _pairs(select: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    n = select.shape[0]
    upper = np.triu(select, k=1)
    if mask is not None:
        upper &= np.outer(mask, mask)
    i, j = np.nonzero(upper)
    return np.column_stack([i, j]).astype(np.int64).reshape(-1, 2) if n else np.zeros((0, 2), dtype=np.int64)


def estimate_sill(Z: np.ndarray, h_inf: np.ndarray) -> float:
    """Unbiased sill estimate from the unconnected pairs."""
    h_inf = np.asarray(h_inf).reshape(-1, 2)
    if h_inf.shape[0] == 0:
        raise EstimationError('no unconnected vertex pairs: the sill cannot be estimated, supply it with --sill')
    diff = Z[h_inf[:, 0]] - Z[h_inf[:, 1]]
    return float(np.sum(diff**2) / (2 * h_inf.shape[0]))


def empirical_gamma(Z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs).reshape(-1, 2)
    return np.asarray((Z[pairs[:, 0]] - Z[pairs[:, 1]]) ** 2 / 2.0)


def build_bins(
    path_lengths: np.ndarray,
    l: int = DEFAULT_BINS,  # noqa: E741
    counts: np.ndarray | None = None,
    max_lag: float | None = None,
) -> list[Bin]:
    """Equal-width bins over (0, max length]; h_j is the mean path length inside the bin. Empty bins are dropped."""
    if l < 1:
        raise ValidationError(f'bin count must be >= 1, got {l}')
    lengths = np.asarray(path_lengths, dtype=float)
    weights = np.ones_like(lengths) if counts is None else np.asarray(counts, dtype=float)
    keep = np.isfinite(lengths) & (lengths > 0)
    if max_lag is not None:
        keep &= lengths <= max_lag
    lengths, weights = lengths[keep], weights[keep]
    if lengths.size == 0:
        raise EstimationError('no finite path lengths to bin')

    top = float(lengths.max())
    edges = np.linspace(0.0, top, l + 1)
    index = np.clip(np.searchsorted(edges, lengths, side='left') - 1, 0, l - 1)
    total = np.bincount(index, weights=weights, minlength=l)
    moment = np.bincount(index, weights=weights * lengths, minlength=l)
    return [
        Bin(lo=float(edges[b]), hi=float(edges[b + 1]), h=float(moment[b] / total[b])) for b in range(l) if total[b] > 0
    ]


def bin_index(lengths: np.ndarray, bins: list[Bin]) -> np.ndarray:
    """Bin position of every length, -1 outside every bin."""
    his = np.array([b.hi for b in bins])
    los = np.array([b.lo for b in bins])
    pos = np.searchsorted(his, lengths, side='left')
    inside = pos < len(bins)
    pos_c = np.minimum(pos, len(bins) - 1)
    inside &= lengths > los[pos_c]
    return np.where(inside, pos_c, -1)


def build_W(pairs: np.ndarray, catalog: PathCatalog, bins: list[Bin]) -> np.ndarray:  # noqa: N802
    """W[i, j]: total weight of the paths of pair i whose length falls in bin j."""
    pairs = np.asarray(pairs).reshape(-1, 2)
    row_of = np.full((catalog.n, catalog.n), -1, dtype=np.int64)
    row_of[pairs[:, 0], pairs[:, 1]] = np.arange(pairs.shape[0])
    rows = row_of[catalog.i, catalog.j] if catalog.i.size else np.zeros(0, dtype=np.int64)
    cols = bin_index(catalog.lengths, bins)
    keep = (rows >= 0) & (cols >= 0)
    W = np.zeros((pairs.shape[0], len(bins)))
    np.add.at(W, (rows[keep], cols[keep]), catalog.weights[keep])
    return W


def lambda_rule(W: np.ndarray, rhs: np.ndarray, theta_s: float) -> float:  # noqa: N803
    """Smallest lambda making W'W + lambda I dominant enough that ||C_hat||_inf <= theta_s."""
    if not theta_s > 0:
        raise EstimationError(f'sill estimate must be positive, got {theta_s}')
    gram = W.T @ W
    off = np.abs(gram).sum(axis=1) - np.abs(np.diag(gram))
    delta = np.abs(np.diag(gram)) - off
    bound = float(np.max(np.abs(W.T @ rhs)) / theta_s - np.min(delta)) if W.shape[1] else 0.0
    return max(bound, LAMBDA_FLOOR)


def ridge_solve(W: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:  # noqa: N803
    """C_hat = (W'W + lambda I)^-1 W' rhs."""
    if not lam > 0:
        raise ValueError(f'lambda must be positive, got {lam}')
    coef = ridge_regression(W, rhs, alpha=lam, solver='cholesky')
    return np.asarray(coef, dtype=float).ravel()


def fit_range(C_hat: np.ndarray, h: np.ndarray, kind: str, theta_s: float) -> RangeFit:  # noqa: N803
    """theta_r minimising sum_j (C(h_j) - C_hat_j)^2 with the sill held at theta_s.

    Bounded search on log(theta_r) over [min h / 10, 10 max h].
    """
    C_hat = np.asarray(C_hat, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.size < 2:
        raise EstimationError(f'range fit needs at least 2 bins, got {h.size}')
    lower, upper = float(h.min()) / 10.0, 10.0 * float(h.max())
    if np.all(C_hat <= 0):
        logger.warning('no positive covariance estimate: range fit is degenerate')
        return RangeFit(theta_r=lower, degenerate=True, lower=lower, upper=upper)

    def sse(log_r: float) -> float:
        k = KernelSpec(kind, theta_s, float(np.exp(log_r)))  # type: ignore[arg-type]
        return float(np.sum((kernel_cov(k, h) - C_hat) ** 2))

    res = minimize_scalar(sse, bounds=(np.log(lower), np.log(upper)), method='bounded', options={'xatol': FIT_TOL})
    theta_r = float(np.exp(res.x))
    degenerate = theta_r <= lower * (1 + 1e-3)
    if degenerate:
        logger.warning('range fit stopped at the lower bound %.4g', lower)
    return RangeFit(theta_r=theta_r, degenerate=bool(degenerate), lower=lower, upper=upper)


def estimate_covariance(
    Z: np.ndarray,  # noqa: N803
    markov: MarkovSolution,
    catalog: PathCatalog,
    l: int = DEFAULT_BINS,  # noqa: E741
    theta_s: float | None = None,
    mask: np.ndarray | None = None,
    bins: list[Bin] | None = None,
    max_lag: float | None = None,
) -> EmpiricalCovariance:
    """Non-parametric curve C_hat on the vertices selected by mask (default: every finite value)."""
    Z = np.asarray(Z, dtype=float)
    observed = np.isfinite(Z) if mask is None else (np.asarray(mask, dtype=bool) & np.isfinite(Z))

    if theta_s is None:
        theta_s = estimate_sill(Z, unconnected_pairs(markov.reach, observed))
    sub = catalog.restrict(observed)
    if bins is None:
        bins = build_bins(sub.lengths, l, counts=sub.counts, max_lag=max_lag)

    pairs = connected_pairs(markov.reach, observed)
    W = build_W(pairs, sub, bins)
    rows = W.any(axis=1)
    pairs, W = pairs[rows], W[rows]
    if pairs.shape[0] == 0:
        raise EstimationError('no connected vertex pairs with retained paths')

    gamma = empirical_gamma(Z, pairs)
    rhs = theta_s - gamma
    lam = lambda_rule(W, rhs, theta_s)
    C_hat = ridge_solve(W, rhs, lam)
    return EmpiricalCovariance(
        bins=bins, C_hat=C_hat, theta_s_hat=float(theta_s), lam=lam, pair_count=int(pairs.shape[0]), W=W, gamma=gamma
    )


def estimate_network(
    values: np.ndarray,
    markov: MarkovSolution,
    catalog: PathCatalog,
    kind: str = 'exponential',
    l: int = DEFAULT_BINS,  # noqa: E741
    theta_s: float | None = None,
    max_lag: float | None = None,
) -> NetworkFit:
    """Estimate from one value vector (n,) or several replicates (n, R).

    Replicate curves share one set of bins and are averaged point-wise before
    the range fit; the sill is the mean of the per-replicate estimates.
    """
    values = np.asarray(values, dtype=float)
    columns = values.reshape(values.shape[0], -1)
    common = np.all(np.isfinite(columns), axis=1)
    sub = catalog.restrict(common)
    bins = build_bins(sub.lengths, l, counts=sub.counts, max_lag=max_lag)

    curves = [estimate_covariance(col, markov, catalog, l, theta_s, common, bins) for col in columns.T]
    C_mean = np.mean([c.C_hat for c in curves], axis=0)
    s_mean = float(np.mean([c.theta_s_hat for c in curves]))
    empirical = curves[0] if len(curves) == 1 else EmpiricalCovariance(
        bins=bins,
        C_hat=C_mean,
        theta_s_hat=s_mean,
        lam=float(np.mean([c.lam for c in curves])),
        pair_count=curves[0].pair_count,
        W=curves[0].W,
        gamma=np.mean([c.gamma for c in curves], axis=0),
    )
    rfit = fit_range(C_mean, empirical.h, kind, s_mean)
    kernel = KernelSpec(kind, s_mean, rfit.theta_r) if s_mean > 0 else None  # type: ignore[arg-type]
    diagnostics = {
        'sill_fixed': theta_s is not None,
        'retained_path_groups': int(sub.lengths.size),
        'truncated_mass': catalog.truncated_mass,
        'curves': [c.C_hat.tolist() for c in curves] if len(curves) > 1 else [],
    }
    return NetworkFit(kernel, empirical, rfit, replicates=len(curves), diagnostics=diagnostics)


def euclidean_fit(
    Z: np.ndarray,  # noqa: N803
    coords: np.ndarray,
    l: int = DEFAULT_BINS,  # noqa: E741
    kind: str = 'exponential',
) -> EuclideanFit:
    """Classical semivariogram over Euclidean distance bins up to half the largest distance, then least squares."""
    Z = np.asarray(Z, dtype=float)
    dist = pdist(np.asarray(coords, dtype=float))
    semi = pdist(Z.reshape(-1, 1), metric='sqeuclidean') / 2.0
    if dist.size == 0:
        raise EstimationError('Euclidean fit needs at least 2 locations')
    cutoff = float(dist.max()) / 2.0
    keep = (dist > 0) & (dist <= cutoff)
    dist, semi = dist[keep], semi[keep]
    if dist.size == 0:
        raise EstimationError('no distinct locations within the lag cutoff')

    edges = np.linspace(0.0, cutoff, l + 1)
    index = np.clip(np.searchsorted(edges, dist, side='left') - 1, 0, l - 1)
    count = np.bincount(index, minlength=l)
    used = count > 0
    h = (np.bincount(index, weights=dist, minlength=l)[used]) / count[used]
    gamma = (np.bincount(index, weights=semi, minlength=l)[used]) / count[used]

    lower, upper = float(h.min()) / 10.0, 10.0 * float(h.max())
    s0 = max(float(np.var(Z)), 1e-12)
    r0 = float(np.clip(np.median(h), lower * 1.01, upper * 0.99))

    def residual(p: np.ndarray) -> np.ndarray:
        sill, rng = float(p[0]), float(p[1])
        unit = KernelSpec(kind, 1.0, rng)  # type: ignore[arg-type]
        return np.asarray(sill * (1.0 - kernel_cov(unit, h)) - gamma)

    res = least_squares(residual, x0=[s0, r0], bounds=([0.0, lower], [np.inf, upper]))
    theta_s, theta_r = float(res.x[0]), float(res.x[1])
    degenerate = theta_r <= lower * (1 + 1e-3)
    return EuclideanFit(theta_s=theta_s, theta_r=theta_r, h=h, gamma=gamma, degenerate=bool(degenerate))
