"""Gaussian field simulation, kriging and projection bias correction.

Realisation m draws its standard normals from its own Philox stream keyed by
(seed, m), so an ensemble is bit-identical whatever the thread count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from flowcov.core.errors import NumericalError, ValidationError
from flowcov.core.types import FieldEnsemble

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-10  # relative to the sill
SEED_LIMIT = 2**64
KRIGING_MODES = ('simple', 'ordinary')
BIAS_MODES = ('global', 'vertex')


@dataclass
class KrigingResult:
    targets: np.ndarray
    predictions: np.ndarray
    variances: np.ndarray
    weights: np.ndarray  # n_obs x n_targets


@dataclass
class BiasCorrection:
    bias: np.ndarray  # scalar (global) or per-vertex
    mean: np.ndarray  # projection - bias, years x n
    residuals: np.ndarray  # (projection - bias) - observation, years x n
    mode: str


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for realisation `index` of master `seed`."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def floored_factor(sigma: np.ndarray, sill: float | None = None) -> np.ndarray:
    """Lower Cholesky factor of sigma after clamping eigenvalues below EIGEN_FLOOR * sill."""
    sigma = np.asarray(sigma, dtype=float)
    sym = (sigma + sigma.T) / 2.0
    if sym.shape[0] == 0:
        return sym
    if sill is None:
        sill = float(np.max(np.diag(sym)))
    floor = EIGEN_FLOOR * max(sill, np.finfo(float).tiny)
    w, V = np.linalg.eigh(sym)
    if w.min() < floor:
        logger.info('flooring %d eigenvalue(s) below %.3e (min %.3e)', int(np.sum(w < floor)), floor, w.min())
        sym = (V * np.maximum(w, floor)) @ V.T
        sym = (sym + sym.T) / 2.0
    try:
        return np.asarray(scipy.linalg.cholesky(sym, lower=True))
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f'Cholesky factorisation failed after eigenvalue flooring: {exc}') from exc


def sample_gaussian(
    mu: np.ndarray | float,
    sigma: np.ndarray,
    M: int,  # noqa: N803
    seed: int,
    threads: int = 1,
) -> FieldEnsemble:
    """M realisations of N(mu, sigma) over the network vertices."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0]
    if sigma.shape != (n, n):
        raise ValidationError(f'covariance must be square, got {sigma.shape}')
    if M < 1:
        raise ValidationError(f'realisation count must be >= 1, got {M}')
    if not 0 <= seed < SEED_LIMIT:
        raise ValidationError(f'seed must lie in [0, 2**64), got {seed}')
    mean = np.broadcast_to(np.asarray(mu, dtype=float), (n,)).copy()
    L = floored_factor(sigma)

    def draw(m: int) -> np.ndarray:
        xi = realization_rng(seed, m).standard_normal(n)
        return np.asarray(mean + L @ xi)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(draw, range(M)))
    else:
        rows = [draw(m) for m in range(M)]
    values = np.vstack(rows) if rows else np.zeros((0, n))
    return FieldEnsemble(values=values, mean=mean, seed=seed)


def krige(
    obs_idx: np.ndarray | list[int],
    obs_vals: np.ndarray,
    sigma: np.ndarray,
    mu: np.ndarray | float = 0.0,
    mode: str = 'simple',
    targets: np.ndarray | list[int] | None = None,
) -> KrigingResult:
    """Best linear predictions at `targets` (default every vertex) from the observed vertices.

    simple:   lambda = Sigma_oo^-1 sigma_0, pred = mu_0 + lambda'(z - mu_o)
    ordinary: bordered system with sum(lambda) = 1; the mean is treated as unknown.
    """
    if mode not in KRIGING_MODES:
        raise ValidationError(f'Unknown kriging mode: {mode}. Available: {", ".join(KRIGING_MODES)}')
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0]
    obs = np.asarray(obs_idx, dtype=np.int64).ravel()
    z = np.asarray(obs_vals, dtype=float).ravel()
    if obs.size == 0:
        raise ValidationError('kriging needs at least one observation')
    if obs.size != z.size:
        raise ValidationError(f'{obs.size} observation indices for {z.size} values')
    tgt = np.arange(n) if targets is None else np.asarray(targets, dtype=np.int64).ravel()
    mean = np.broadcast_to(np.asarray(mu, dtype=float), (n,))

    s_oo = sigma[np.ix_(obs, obs)]
    s_ot = sigma[np.ix_(obs, tgt)]
    s_tt = np.diag(sigma)[tgt]
    try:
        if mode == 'simple':
            weights = scipy.linalg.solve(s_oo, s_ot, assume_a='sym')
            pred = mean[tgt] + weights.T @ (z - mean[obs])
            var = s_tt - np.sum(s_ot * weights, axis=0)
        else:
            k = obs.size
            system = np.zeros((k + 1, k + 1))
            system[:k, :k] = s_oo
            system[:k, k] = 1.0
            system[k, :k] = 1.0
            rhs = np.vstack([s_ot, np.ones((1, tgt.size))])
            sol = scipy.linalg.solve(system, rhs)
            weights, lagrange = sol[:k], sol[k]
            pred = weights.T @ z
            var = s_tt - np.sum(s_ot * weights, axis=0) - lagrange
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f'singular observation covariance block: {exc}') from exc
    return KrigingResult(targets=tgt, predictions=np.asarray(pred), variances=np.maximum(var, 0.0), weights=weights)


def bias_correct(projections: np.ndarray, observations: np.ndarray, mode: str = 'global') -> BiasCorrection:
    """Remove the projection bias estimated over the overlapping (year, vertex) entries.

    global: one constant. vertex: one value per vertex, falling back to the
    global constant where a vertex has no overlapping year.
    """
    if mode not in BIAS_MODES:
        raise ValidationError(f'Unknown bias mode: {mode}. Available: {", ".join(BIAS_MODES)}')
    proj = np.atleast_2d(np.asarray(projections, dtype=float))
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    if proj.shape != obs.shape:
        raise ValidationError(f'projection shape {proj.shape} differs from observation shape {obs.shape}')
    diff = proj - obs
    overlap = np.isfinite(diff)
    if not overlap.any():
        raise ValidationError('projections and observations share no (year, vertex) entry')

    overall = float(np.mean(diff[overlap]))
    if mode == 'global':
        bias = np.asarray(overall)
    else:
        counts = overlap.sum(axis=0)
        sums = np.where(overlap, diff, 0.0).sum(axis=0)
        bias = np.where(counts > 0, sums / np.maximum(counts, 1), overall)
    mean = proj - bias
    return BiasCorrection(bias=bias, mean=mean, residuals=mean - obs, mode=mode)
