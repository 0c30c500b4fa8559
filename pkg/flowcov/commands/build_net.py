"""Build the directed flow network from a gridded velocity CSV.

Every water node of the grid becomes a vertex. Its velocity is split onto
the two bracketing grid directions (E, NE, N, ... SE); components landing on
water become edges with probability proportional to their magnitude, the
rest flows to the sink. Edge length is the Euclidean distance between the
nodes, or the travel time with --edge-metric time.

Grid CSV header: ix,iy,x,y,u,v,value[,water]; missing numbers are `NA`.
At least two water nodes are required.

Outputs:
  --out         network JSON {vertices, edges, sources, outlets, edge_metric}
  --values-out  optional CSV `vertex,value` with the grid observations

Example:
    flowcov build-net --grid grid.csv --out net.json --values-out values.csv
"""

import argparse

import numpy as np

from flowcov.core.artifacts import vertex_frame, write_network, write_table
from flowcov.core.config import RunConfig
from flowcov.core.grid_parser import parse_grid_file
from flowcov.core.markov import reachability
from flowcov.core.network import EDGE_METRICS, build_network
from flowcov.core.types import Command, Report

command = Command(name='build_net', help='Build the directed flow network from a velocity grid.')


@command.arguments
def arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--grid', metavar='PATH', help='Velocity grid CSV')
    parser.add_argument('--out', metavar='PATH', help='Network JSON to write')
    parser.add_argument('--values-out', metavar='PATH', help='Optional vertex,value CSV')
    parser.add_argument('--edge-metric', choices=EDGE_METRICS, default=None, help='euclidean (default) or time')


@command.run
def run(config: RunConfig, report: Report) -> None:
    grid = parse_grid_file(config.path('grid'), min_water=2)
    net = build_network(grid, edge_metric=config.edge_metric)
    report.add_output(str(write_network(net, config.path('out'))))

    if config.values_out:
        values = np.array([np.nan if n.value is None else n.value for n in grid.water_nodes()])
        report.add_output(str(write_table(vertex_frame(values[:, None], ['value']), config.values_out)))

    _reach, hops = reachability(net)
    finite = hops[np.isfinite(hops)]
    report.add('vertices', net.n)
    report.add('edges', len(net.edges))
    report.add('sources', len(net.sources))
    report.add('outlets', len(net.outlets))
    report.add('spacing', [grid.spacing_x, grid.spacing_y])
    report.add('edge_metric', net.edge_metric)
    report.add('hop_diameter', int(finite.max()) if finite.size else 0)
