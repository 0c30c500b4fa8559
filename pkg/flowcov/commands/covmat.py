"""Assemble the network covariance matrix of a kernel.

Sigma[x, x] is the sill; pairs with no directed path either way get 0;
every other pair sums w_p C(|p|) over the connecting walks in both
directions. Two routes:

  closed-form  exponential kernel only, one sparse solve of (I - R)
  path-sum     any kernel, walks propagated until their weight falls below
               --weight-floor; a propagation still alive at --max-hops
               (default 10000) is a numerical failure

The kernel comes from --params (an `estimate` output) or from
--kernel/--sill/--range, which also override --params entries.

Output: MatrixFile (--out payload plus <out>.json sidecar).

Example:
    flowcov covmat --net net.json --kernel exponential --sill 1 --range 150 \\
        --method path-sum --out cov.bin
"""

import argparse

import numpy as np

from flowcov.core.artifacts import read_network, write_matrix
from flowcov.core.config import RunConfig, resolve_kernel
from flowcov.core.covariance import METHODS, covariance_matrix
from flowcov.core.errors import ValidationError
from flowcov.core.markov import solve_chain
from flowcov.core.types import KERNEL_KINDS, Command, Report

command = Command(name='covmat', help='Assemble the network covariance matrix.')


@command.arguments
def arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--net', metavar='PATH', help='Network JSON')
    parser.add_argument('--params', metavar='PATH', help='Parameter JSON from estimate')
    parser.add_argument('--kernel', choices=KERNEL_KINDS, default=None)
    parser.add_argument('--sill', type=float, default=None)
    parser.add_argument('--range', type=float, default=None)
    parser.add_argument('--method', choices=METHODS, default=None, help='closed-form (default) or path-sum')
    parser.add_argument('--max-hops', type=int, default=None)
    parser.add_argument('--weight-floor', type=float, default=None)
    parser.add_argument('--out', metavar='PATH', help='MatrixFile to write')


@command.run
def run(config: RunConfig, report: Report) -> None:
    net = read_network(config.path('net'))
    kernel = resolve_kernel(config)
    if config.method == 'closed-form' and kernel.kind != 'exponential':
        raise ValidationError(f'closed-form assembly needs the exponential kernel, got {kernel.kind}; use path-sum')

    markov = solve_chain(net, threads=config.threads)
    sigma = covariance_matrix(
        net,
        markov,
        kernel,
        config.method,
        max_hops=config.max_hops,
        weight_floor=config.weight_floor,
        threads=config.threads,
    )
    meta = {'kind': kernel.kind, 'sill': kernel.sill, 'range': kernel.range, 'method': config.method}
    report.add_output(str(write_matrix(sigma, config.path('out'), meta=meta)))

    report.add('n', net.n)
    report.add('kernel', meta)
    report.add('hop_diameter', markov.diameter)
    report.add('min_eigenvalue', float(np.linalg.eigvalsh(sigma).min()) if net.n else 0.0)
    report.add('zero_pairs', int(np.sum(sigma == 0.0) // 2))
