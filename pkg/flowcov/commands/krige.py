"""Kriging predictions on the network vertices.

Observations come from a `vertex,value` CSV (--obs, first value column;
`NA` or absent vertices are unobserved). The covariance is the network
covariance of the kernel given by --params or --kernel/--sill/--range;
kernels other than exponential are assembled by path sums, tuned with
--max-hops and --weight-floor as in covmat.

  simple    known mean (0, or --mean vertex,value CSV)
  ordinary  unknown constant mean; weights sum to one

Output CSV: vertex,prediction,variance,observed.

Example:
    flowcov krige --net net.json --params params.json --obs obs.csv --mode ordinary --out pred.csv
"""

import argparse

import numpy as np
import pandas as pd

from flowcov.core.artifacts import read_network, read_vertex_table, write_table
from flowcov.core.config import RunConfig, resolve_kernel
from flowcov.core.covariance import METHODS, covariance_matrix
from flowcov.core.errors import ValidationError
from flowcov.core.fields import KRIGING_MODES, krige
from flowcov.core.markov import solve_chain
from flowcov.core.types import KERNEL_KINDS, Command, Report

command = Command(name='krige', help='Kriging predictions on the network vertices.')


@command.arguments
def arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--net', metavar='PATH', help='Network JSON')
    parser.add_argument('--params', metavar='PATH', help='Parameter JSON from estimate')
    parser.add_argument('--kernel', choices=KERNEL_KINDS, default=None)
    parser.add_argument('--sill', type=float, default=None)
    parser.add_argument('--range', type=float, default=None)
    parser.add_argument('--method', choices=METHODS, default=None)
    parser.add_argument('--max-hops', type=int, default=None, help='Hop cap for path-sum assembly')
    parser.add_argument('--weight-floor', type=float, default=None, help='Walk pruning threshold for path-sum')
    parser.add_argument('--obs', metavar='PATH', help='vertex,value CSV of observations')
    parser.add_argument('--mean', metavar='PATH', help='vertex,value CSV with the known mean (simple mode)')
    parser.add_argument('--mode', choices=KRIGING_MODES, default=None, help='simple (default) or ordinary')
    parser.add_argument('--out', metavar='PATH', help='Prediction CSV to write')


@command.run
def run(config: RunConfig, report: Report) -> None:
    net = read_network(config.path('net'))
    kernel = resolve_kernel(config)
    method = config.method if kernel.kind == 'exponential' else 'path-sum'

    table, _columns = read_vertex_table(config.path('obs'), net.n)
    z = table[:, 0]
    observed = np.flatnonzero(np.isfinite(z))
    if observed.size == 0:
        raise ValidationError(f'{config.obs}: no observed vertex')

    mu = np.zeros(net.n)
    if config.mean:
        mean_table, _ = read_vertex_table(config.mean, net.n)
        mu = mean_table[:, 0]
        if not np.all(np.isfinite(mu)):
            raise ValidationError(f'{config.mean}: mean missing for some vertices')

    markov = solve_chain(net, threads=config.threads)
    sigma = covariance_matrix(net, markov, kernel, method, config.max_hops, config.weight_floor, config.threads)
    result = krige(observed, z[observed], sigma, mu, mode=config.mode)

    flags = np.zeros(net.n, dtype=int)
    flags[observed] = 1
    frame = pd.DataFrame(
        {
            'vertex': result.targets,
            'prediction': result.predictions,
            'variance': result.variances,
            'observed': flags[result.targets],
        }
    )
    report.add_output(str(write_table(frame, config.path('out'))))
    report.add('mode', config.mode)
    report.add('observed', int(observed.size))
    report.add('targets', int(result.targets.size))
    report.add('mean_variance', float(np.mean(result.variances)))
