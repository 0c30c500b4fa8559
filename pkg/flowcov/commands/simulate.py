"""Simulate a Gaussian field ensemble on the network vertices.

Draws M realisations of N(mu, Sigma) with Sigma the network covariance of
the kernel. Realisation m uses its own counter-based stream derived from
(--seed, m), so the output is byte-identical for a given seed whatever
--threads is. Eigenvalues of Sigma below 1e-10 * sill are floored before
the Cholesky factorisation.

The mean is 0 unless --mean gives a `vertex,value` CSV (for example the
bias-corrected projection written by `estimate --mean-out`).

Output: MatrixFile M x n (--out, default ensemble.bin) whose sidecar meta
holds {seed, M, n, mean, params}.

Example:
    flowcov simulate --net net.json --params params.json --m 500 --seed 42 --out ens.bin
"""

import argparse

import numpy as np

from flowcov.core.artifacts import read_network, read_vertex_table, write_ensemble
from flowcov.core.config import RunConfig, parse_seed, resolve_kernel
from flowcov.core.covariance import METHODS, covariance_matrix
from flowcov.core.errors import ValidationError
from flowcov.core.fields import sample_gaussian
from flowcov.core.markov import solve_chain
from flowcov.core.types import KERNEL_KINDS, Command, Report

command = Command(name='simulate', help='Simulate a Gaussian field ensemble.')

DEFAULT_OUT = 'ensemble.bin'


@command.arguments
def arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--net', metavar='PATH', help='Network JSON')
    parser.add_argument('--params', metavar='PATH', help='Parameter JSON from estimate')
    parser.add_argument('--kernel', choices=KERNEL_KINDS, default=None)
    parser.add_argument('--sill', type=float, default=None)
    parser.add_argument('--range', type=float, default=None)
    parser.add_argument('--method', choices=METHODS, default=None)
    parser.add_argument('--mean', metavar='PATH', help='vertex,value CSV with the field mean')
    parser.add_argument('--m', type=int, default=None, help='Number of realisations (default 500)')
    parser.add_argument('--seed', type=parse_seed, default=None, help='Master seed, unsigned 64-bit')
    parser.add_argument('--out', metavar='PATH', help=f'Ensemble MatrixFile (default {DEFAULT_OUT})')


@command.run
def run(config: RunConfig, report: Report) -> None:
    assert config.seed is not None
    net = read_network(config.path('net'))
    kernel = resolve_kernel(config)
    method = config.method if kernel.kind == 'exponential' else 'path-sum'

    mu = np.zeros(net.n)
    if config.mean:
        table, _columns = read_vertex_table(config.mean, net.n)
        mu = table[:, 0]
        if not np.all(np.isfinite(mu)):
            raise ValidationError(f'{config.mean}: mean missing for {int(np.sum(~np.isfinite(mu)))} vertex(es)')

    markov = solve_chain(net, threads=config.threads)
    sigma = covariance_matrix(net, markov, kernel, method, config.max_hops, config.weight_floor, config.threads)
    ens = sample_gaussian(mu, sigma, config.m, config.seed, threads=config.threads)

    params = {'kind': kernel.kind, 'sill': kernel.sill, 'range': kernel.range, 'method': method}
    out = config.out or DEFAULT_OUT
    report.add_output(str(write_ensemble(ens, out, params=params)))
    report.add('M', ens.M)
    report.add('n', ens.n)
    report.add('seed', ens.seed)
    report.add('kernel', params)
    report.add('mean_variance', float(np.mean(np.var(ens.values, axis=0))) if ens.n else 0.0)
