"""Excursion sets and joint exceedance probabilities from an ensemble.

For threshold t the inner set is the largest set of vertices (taken in
order of decreasing marginal exceedance) that all exceed t together in at
least 1 - alpha of the realisations; the outer set leaves out the largest
set (in order of increasing marginal exceedance) that stays below t
together in at least 1 - alpha of them. Both containment frequencies are
reported.

With --center x,y the union and intersection exceedance probabilities of
the closed balls of --radii (default 0,10,15,20,30,50) around the centre
are written to --joint-out. Radius 0 uses the nearest vertex.

Output JSON: {threshold, alpha, inner, outer, inner_coverage,
outer_coverage, marginals}.

Example:
    flowcov extremes --net net.json --ensemble ens.bin --threshold 27 --alpha 0.05 \\
        --center 120,45 --radii 0,10,15,20,30,50 --out sets.json --joint-out joint.csv
"""

import argparse
import json
from pathlib import Path

import pandas as pd

from flowcov.core.artifacts import read_ensemble, read_network, write_table
from flowcov.core.config import RunConfig, parse_floats, parse_point
from flowcov.core.errors import ValidationError
from flowcov.core.extremes import excursion_sets, joint_exceedance
from flowcov.core.types import Command, Report

command = Command(name='extremes', help='Excursion sets and joint exceedance probabilities.')

DEFAULT_RADII = [0.0, 10.0, 15.0, 20.0, 30.0, 50.0]


@command.arguments
def arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--net', metavar='PATH', help='Network JSON (vertex coordinates)')
    parser.add_argument('--ensemble', metavar='PATH', help='Ensemble MatrixFile from simulate')
    parser.add_argument('--threshold', type=float, default=None)
    parser.add_argument('--alpha', type=float, default=None, help='Credibility level is 1 - alpha (default 0.05)')
    parser.add_argument('--center', type=parse_point, default=None, metavar='X,Y')
    parser.add_argument('--radii', type=parse_floats, default=None, metavar='R1,R2,...')
    parser.add_argument('--out', metavar='PATH', help='Excursion-set JSON to write')
    parser.add_argument('--joint-out', metavar='PATH', help='radius,p_union,p_intersection CSV')


@command.run
def run(config: RunConfig, report: Report) -> None:
    if config.threshold is None:
        raise ValidationError('extremes needs --threshold')
    net = read_network(config.path('net'))
    ens = read_ensemble(config.path('ensemble'))
    if ens.n != net.n:
        raise ValidationError(f'ensemble has {ens.n} columns for {net.n} vertices')

    result = excursion_sets(ens, config.threshold, config.alpha)
    doc = {
        'threshold': result.threshold,
        'alpha': result.alpha,
        'inner': result.inner_set,
        'outer': result.outer_set,
        'inner_coverage': result.inner_coverage,
        'outer_coverage': result.outer_coverage,
        'marginals': result.marginal_probs.tolist(),
    }
    out = Path(config.path('out'))
    out.write_text(json.dumps(doc, indent=2) + '\n', encoding='utf-8')
    report.add_output(str(out))
    report.add('threshold', result.threshold)
    report.add('alpha', result.alpha)
    report.add('inner_size', len(result.inner_set))
    report.add('outer_size', len(result.outer_set))
    report.add('inner_coverage', result.inner_coverage)
    report.add('outer_coverage', result.outer_coverage)

    if config.center is not None:
        radii = config.radii or DEFAULT_RADII
        joint = joint_exceedance(ens, net.coords, config.center, radii, config.threshold)
        frame = pd.DataFrame(
            {
                'radius': joint.radii,
                'p_union': joint.p_union,
                'p_intersection': joint.p_intersection,
                'vertices': joint.sizes,
            }
        )
        report.add_output(str(write_table(frame, config.path('joint_out'))))
        report.add('p_union', joint.p_union.tolist())
        report.add('p_intersection', joint.p_intersection.tolist())
