"""Desk-scale simulation study: network framework against the Euclidean baseline.

For every true range and replicate: simulate a field from the network
covariance, hold out a random fifth of the vertices, estimate both models
on the rest, krige the hold-out set (simple kriging, zero mean) and record
parameter, matrix and prediction errors.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from flowcov.core.covariance import cov_matrix_euclidean, covariance_matrix, kernel_cov
from flowcov.core.errors import FlowcovError, NumericalError, ValidationError
from flowcov.core.estimator import (
    DEFAULT_BINS,
    EuclideanFit,
    PathCatalog,
    build_path_catalog,
    estimate_network,
    euclidean_fit,
)
from flowcov.core.fields import EIGEN_FLOOR, krige, sample_gaussian
from flowcov.core.markov import solve_chain
from flowcov.core.types import (
    DirectedNetwork,
    GridNode,
    KernelSpec,
    MarkovSolution,
    StudyRecord,
    StudyReport,
    VelocityGrid,
)

logger = logging.getLogger(__name__)

DEFAULT_RANGES = (20.0, 35.0, 50.0, 65.0, 80.0)  # km, scaled to the synthetic grid extent
DEFAULT_REPLICATES = 50
DEFAULT_TEST_FRACTION = 0.2


def frobenius_diff(sigma: np.ndarray, sigma_hat: np.ndarray) -> float:
    a = np.asarray(sigma, dtype=float)
    b = np.asarray(sigma_hat, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f'shape mismatch: {a.shape} vs {b.shape}')
    return float(np.linalg.norm(a - b, 'fro'))


def kl_gaussian(sigma_true: np.ndarray, sigma_hat: np.ndarray, floor: float | None = None) -> float:
    """KL(N(0, sigma_true) || N(0, sigma_hat)).

    floor, when given, clamps the eigenvalues of both matrices to
    floor * max diagonal before the log-determinants are taken.
    """
    a = _sym(sigma_true)
    b = _sym(sigma_hat)
    if a.shape != b.shape:
        raise ValueError(f'shape mismatch: {a.shape} vs {b.shape}')
    n = a.shape[0]
    wa, va = np.linalg.eigh(a)
    wb, vb = np.linalg.eigh(b)
    if floor is not None:
        wa = np.maximum(wa, floor * max(float(np.max(np.diag(a))), np.finfo(float).tiny))
        wb = np.maximum(wb, floor * max(float(np.max(np.diag(b))), np.finfo(float).tiny))
    if wb.min() <= 0:
        raise NumericalError('estimated covariance is singular')
    if wa.min() <= 0:
        raise NumericalError('true covariance is singular')
    a_f = (va * wa) @ va.T
    trace = float(np.sum(((vb.T @ a_f @ vb).diagonal()) / wb))
    kl = 0.5 * (trace - n + float(np.sum(np.log(wb))) - float(np.sum(np.log(wa))))
    return max(kl, 0.0)


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean((np.asarray(pred, dtype=float) - np.asarray(truth, dtype=float)) ** 2))


def euclidean_cov_curve(fit: EuclideanFit, kind: str, h: np.ndarray) -> np.ndarray:
    """Covariance function of the Euclidean framework at lags h.

    A fit that stopped at its lower range bound is a pure nugget: theta_s at
    h = 0 and 0 beyond. Otherwise the fitted kernel is evaluated.
    """
    h = np.asarray(h, dtype=float)
    if fit.degenerate:
        return np.where(h == 0.0, fit.theta_s, 0.0)
    k = KernelSpec(kind, max(fit.theta_s, np.finfo(float).tiny), fit.theta_r)  # type: ignore[arg-type]
    return kernel_cov(k, h)


def synthetic_grid(
    nx: int = 16,
    ny: int = 10,
    spacing: float = 10.0,
    drift: float = 1.0,
    meander: float = 0.4,
    island: bool = True,
) -> VelocityGrid:
    """Eastward drift with a meandering northward component and an elliptical island.

    |v| < u everywhere, so every edge moves one column east: the network is
    acyclic and drains through the eastern boundary.
    """
    if not 0 <= meander < 1:
        raise ValidationError(f'meander must lie in [0, 1), got {meander}')
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    rx, ry = nx / 6.0, ny / 5.0
    nodes = []
    for iy in range(ny):
        for ix in range(nx):
            land = island and ((ix - cx) / rx) ** 2 + ((iy - cy) / ry) ** 2 <= 1.0
            u = drift
            v = meander * drift * math.sin(2 * math.pi * ix / max(nx / 2.0, 1.0))
            nodes.append(
                GridNode(
                    ix=ix,
                    iy=iy,
                    x=ix * spacing,
                    y=iy * spacing,
                    u=None if land else u,
                    v=None if land else v,
                    value=None if land else 0.0,
                    is_water=not land,
                )
            )
    return VelocityGrid(nx=nx, ny=ny, spacing_x=spacing, spacing_y=spacing, nodes=nodes)


def run_sim_study(
    net: DirectedNetwork,
    ranges: tuple[float, ...] | list[float] = DEFAULT_RANGES,
    sill: float = 1.0,
    replicates: int = DEFAULT_REPLICATES,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int = 0,
    kind: str = 'exponential',
    bins: int = DEFAULT_BINS,
    fixed_sill: float | None = None,
    threads: int = 1,
    markov: MarkovSolution | None = None,
) -> StudyReport:
    """Run the study; replicate (a, b) is seeded from SeedSequence(seed, spawn_key=(a, b))."""
    if replicates < 1:
        raise ValidationError(f'replicates must be >= 1, got {replicates}')
    if not 0 < test_fraction < 1:
        raise ValidationError(f'test fraction must lie in (0, 1), got {test_fraction}')
    if net.n < 3:
        raise ValidationError(f'study needs at least 3 vertices, got {net.n}')
    markov = markov or solve_chain(net, threads=threads)
    catalog = build_path_catalog(net, markov, threads=threads)
    method = 'closed-form' if kind == 'exponential' else 'path-sum'

    records: list[StudyRecord] = []
    for a, theta_r in enumerate(ranges):
        truth = KernelSpec(kind, sill, float(theta_r))  # type: ignore[arg-type]
        sigma = covariance_matrix(net, markov, truth, method=method, threads=threads)

        def one(b: int, a: int = a, truth: KernelSpec = truth, sigma: np.ndarray = sigma) -> StudyRecord:
            return _replicate(net, markov, catalog, truth, sigma, a, b, seed, test_fraction, bins, fixed_sill, method)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                records.extend(pool.map(one, range(replicates)))
        else:
            records.extend(one(b) for b in range(replicates))

    report = StudyReport(records=records, summary=summarize(records, sill))
    degenerate = sum(r.degenerate for r in records)
    if degenerate:
        logger.warning('%d of %d replicates were degenerate', degenerate, len(records))
    return report


def _replicate(
    net: DirectedNetwork,
    markov: MarkovSolution,
    catalog: PathCatalog,
    truth: KernelSpec,
    sigma: np.ndarray,
    a: int,
    b: int,
    seed: int,
    test_fraction: float,
    bins: int,
    fixed_sill: float | None,
    method: str,
) -> StudyRecord:
    field_ss, split_ss = np.random.SeedSequence(seed, spawn_key=(a, b)).spawn(2)
    field_seed = int(field_ss.generate_state(1, dtype=np.uint64)[0])
    rng = np.random.Generator(np.random.Philox(split_ss))

    Z = sample_gaussian(0.0, sigma, 1, field_seed).values[0]
    perm = rng.permutation(net.n)
    n_test = min(max(1, round(test_fraction * net.n)), net.n - 2)
    test, train = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    observed = Z.copy()
    observed[test] = np.nan

    nan = float('nan')
    notes: list[str] = []
    rec = StudyRecord(
        theta_r=truth.range,
        replicate=b,
        theta_s_hat=nan,
        theta_r_hat=nan,
        theta_s_hat_euclid=nan,
        theta_r_hat_euclid=nan,
        frobenius=nan,
        frobenius_euclid=nan,
        kl=nan,
        kl_euclid=nan,
        mse_network=nan,
        mse_euclid=nan,
        cov_mse_network=nan,
        cov_mse_euclid=nan,
    )

    h = None
    try:
        fit = estimate_network(observed, markov, catalog, truth.kind, bins, theta_s=fixed_sill)
        rec.theta_s_hat = fit.empirical.theta_s_hat
        rec.theta_r_hat = fit.range_fit.theta_r
        h = fit.empirical.h
        rec.cov_mse_network = mse(fit.empirical.C_hat, kernel_cov(truth, h))
        if fit.range_fit.degenerate:
            notes.append('network range at bound')
        if fit.kernel is None:
            raise NumericalError('non-positive sill estimate')
        sigma_net = covariance_matrix(net, markov, fit.kernel, method=method)
        rec.frobenius = frobenius_diff(sigma, sigma_net)
        rec.kl = kl_gaussian(sigma, sigma_net, floor=EIGEN_FLOOR)
        pred = krige(train, Z[train], sigma_net, 0.0, 'simple', targets=test).predictions
        rec.mse_network = mse(pred, Z[test])
    except FlowcovError as exc:
        rec.degenerate = True
        notes.append(f'network: {exc}')

    try:
        efit = euclidean_fit(Z[train], net.coords[train], bins, truth.kind)
        rec.theta_s_hat_euclid = efit.theta_s
        rec.theta_r_hat_euclid = efit.theta_r
        if efit.degenerate:
            notes.append('euclidean nugget')
        e_kernel = KernelSpec(truth.kind, max(efit.theta_s, np.finfo(float).tiny), efit.theta_r)
        if h is not None:
            rec.cov_mse_euclid = mse(euclidean_cov_curve(efit, truth.kind, h), kernel_cov(truth, h))
        sigma_euc = cov_matrix_euclidean(net.coords, e_kernel)
        rec.frobenius_euclid = frobenius_diff(sigma, sigma_euc)
        rec.kl_euclid = kl_gaussian(sigma, sigma_euc, floor=EIGEN_FLOOR)
        pred = krige(train, Z[train], sigma_euc, 0.0, 'simple', targets=test).predictions
        rec.mse_euclid = mse(pred, Z[test])
    except FlowcovError as exc:
        notes.append(f'euclidean: {exc}')

    rec.note = '; '.join(notes)
    return rec


def summarize(records: list[StudyRecord], sill: float) -> dict:
    """Per true range: median and mean of every metric, and how often the network model wins."""
    out: dict = {'sill': sill, 'records': len(records), 'degenerate': sum(r.degenerate for r in records), 'ranges': {}}
    for theta_r in sorted({r.theta_r for r in records}):
        group = [r for r in records if r.theta_r == theta_r]
        entry: dict = {'replicates': len(group)}
        for name in (
            'theta_s_hat',
            'theta_r_hat',
            'theta_s_hat_euclid',
            'theta_r_hat_euclid',
            'frobenius',
            'frobenius_euclid',
            'kl',
            'kl_euclid',
            'mse_network',
            'mse_euclid',
            'cov_mse_network',
            'cov_mse_euclid',
        ):
            vals = np.array([getattr(r, name) for r in group], dtype=float)
            vals = vals[np.isfinite(vals)]
            entry[name] = {
                'median': float(np.median(vals)) if vals.size else None,
                'mean': float(np.mean(vals)) if vals.size else None,
            }
        for label, net_name, euc_name in (
            ('mse', 'mse_network', 'mse_euclid'),
            ('frobenius', 'frobenius', 'frobenius_euclid'),
            ('kl', 'kl', 'kl_euclid'),
        ):
            pairs = [(getattr(r, net_name), getattr(r, euc_name)) for r in group]
            pairs = [(x, y) for x, y in pairs if math.isfinite(x) and math.isfinite(y)]
            entry[f'network_wins_{label}'] = sum(x < y for x, y in pairs) / len(pairs) if pairs else None
        out['ranges'][repr(float(theta_r))] = entry
    return out


def _sym(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return (m + m.T) / 2.0
