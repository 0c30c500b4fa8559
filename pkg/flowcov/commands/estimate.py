"""Estimate the network covariance from observed values.

Pipeline:
  1. sill from the unconnected pairs: mean of (Z_x - Z_y)^2 / 2 (or --sill)
  2. W from every retained walk between connected pairs, binned by length
     into --bins equal-width bins (empty bins dropped)
  3. penalised least squares C_hat = (W'W + lambda I)^-1 W'(sill - gamma),
     lambda the smallest value guaranteeing |C_hat| <= sill
  4. range by least squares of the --kernel family against C_hat

--values is a `vertex,<col>[,<col>...]` CSV; several columns (for example
years) share one set of bins and their curves are averaged. With
--projection (same layout) the projection bias is removed first
(--bias-mode global or vertex) and the residuals are estimated instead;
--mean-out then writes the corrected mean.

--euclidean adds the classical semivariogram fit for comparison.

Output: parameter JSON {kernel, theta_s, theta_r, lambda, bins: [{lo, hi,
h, c_hat, variogram}], diagnostics}, readable by covmat, simulate and krige.

Example:
    flowcov estimate --net net.json --values values.csv --kernel exponential --bins 15 --out params.json
"""

import argparse
from typing import Any

import numpy as np

from flowcov.core.artifacts import read_network, read_vertex_table, vertex_frame, write_params, write_table
from flowcov.core.config import RunConfig
from flowcov.core.errors import EstimationError, ValidationError
from flowcov.core.estimator import build_path_catalog, estimate_network, euclidean_fit
from flowcov.core.fields import BIAS_MODES, bias_correct
from flowcov.core.markov import solve_chain
from flowcov.core.types import KERNEL_KINDS, Command, Report

command = Command(name='estimate', help='Estimate the network covariance from observations.')


@command.arguments
def arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--net', metavar='PATH', help='Network JSON')
    parser.add_argument('--values', metavar='PATH', help='vertex,<col>... CSV of observations')
    parser.add_argument('--projection', metavar='PATH', help='vertex,<col>... CSV of projections (bias removal)')
    parser.add_argument('--bias-mode', choices=BIAS_MODES, default=None, help='global (default) or vertex')
    parser.add_argument('--kernel', choices=KERNEL_KINDS, default=None)
    parser.add_argument('--bins', type=int, default=None, help='Number of distance bins (default 15)')
    parser.add_argument('--max-lag', type=float, default=None, help='Ignore paths longer than this')
    parser.add_argument('--sill', type=float, default=None, help='Fix the sill instead of estimating it')
    parser.add_argument('--max-hops', type=int, default=None)
    parser.add_argument('--weight-floor', type=float, default=None)
    parser.add_argument('--euclidean', action='store_true', help='Also fit the Euclidean semivariogram')
    parser.add_argument('--out', metavar='PATH', help='Parameter JSON to write')
    parser.add_argument('--mean-out', metavar='PATH', help='Bias-corrected mean CSV (with --projection)')


@command.run
def run(config: RunConfig, report: Report) -> None:
    net = read_network(config.path('net'))
    values, columns = read_vertex_table(config.path('values'), net.n)
    kind = config.kernel or 'exponential'

    bias: dict[str, Any] | None = None
    if config.projection:
        proj, _pcols = read_vertex_table(config.projection, net.n)
        if proj.shape != values.shape:
            raise ValidationError(f'projection has {proj.shape[1]} column(s), values have {values.shape[1]}')
        corr = bias_correct(proj.T, values.T, mode=config.bias_mode)
        values = corr.residuals.T
        bias = {'mode': corr.mode, 'bias': corr.bias.tolist()}
        if config.mean_out:
            report.add_output(str(write_table(vertex_frame(corr.mean.T, columns), config.mean_out)))

    markov = solve_chain(net, threads=config.threads)
    catalog = build_path_catalog(net, markov, config.max_hops, config.weight_floor, threads=config.threads)
    fit = estimate_network(values, markov, catalog, kind, config.bins, theta_s=config.sill, max_lag=config.max_lag)
    if fit.kernel is None:
        raise EstimationError(f'non-positive sill estimate {fit.empirical.theta_s_hat}')

    emp = fit.empirical
    doc: dict[str, Any] = {
        'kernel': fit.kernel.kind,
        'theta_s': fit.kernel.sill,
        'theta_r': fit.kernel.range,
        'lambda': emp.lam,
        'bins': [
            {'lo': b.lo, 'hi': b.hi, 'h': b.h, 'c_hat': float(c), 'variogram': float(emp.theta_s_hat - c)}
            for b, c in zip(emp.bins, emp.C_hat, strict=True)
        ],
        'diagnostics': {
            'sill_fixed': config.sill is not None,
            'degenerate': fit.range_fit.degenerate,
            'range_bounds': [fit.range_fit.lower, fit.range_fit.upper],
            'pair_count': emp.pair_count,
            'replicates': fit.replicates,
            'columns': columns,
            'truncated_mass': fit.diagnostics['truncated_mass'],
        },
    }
    if bias is not None:
        doc['bias'] = bias
    if config.euclidean:
        fits = []
        for col in values.T:
            seen = np.isfinite(col)
            fits.append(euclidean_fit(col[seen], net.coords[seen], config.bins, kind))
        doc['euclidean'] = {
            'theta_s': float(np.mean([f.theta_s for f in fits])),
            'theta_r': float(np.mean([f.theta_r for f in fits])),
            'degenerate': any(f.degenerate for f in fits),
        }
    report.add_output(str(write_params(config.path('out'), doc)))

    report.add('kind', fit.kernel.kind)
    report.add('sill', fit.kernel.sill)
    report.add('range', fit.kernel.range)
    report.add('bins', len(emp.bins))
    report.add('pairs', emp.pair_count)
    report.add('lambda', emp.lam)
    report.add('degenerate', fit.range_fit.degenerate)
    if 'euclidean' in doc:
        report.add('euclidean', doc['euclidean'])
