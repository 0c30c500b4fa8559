"""Directed linear network construction from a gridded velocity field.

Each water vertex sends its velocity onto the two grid directions that
bracket it (parallelogram rule). Components landing on water become edges,
components leaving the water domain feed the sink S. Probabilities are the
component magnitudes scaled by their sum, so every row of pi (including S)
sums to one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from flowcov.core.errors import DecompositionError, NetworkSchemaError, ValidationError
from flowcov.core.types import DirectedNetwork, Edge, GridNode, VelocityGrid, Vertex

logger = logging.getLogger(__name__)

# Grid offsets in counter-clockwise order starting East.
OFFSETS: tuple[tuple[int, int], ...] = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
DIRECTION_NAMES: tuple[str, ...] = ('E', 'NE', 'N', 'NW', 'W', 'SW', 'S', 'SE')
EDGE_METRICS = ('euclidean', 'time')

ROW_TOL = 1e-12


@dataclass(frozen=True)
class Decomposition:
    """Two direction indices (into the 8 neighbour directions) and their nonnegative magnitudes."""

    directions: tuple[int, int]
    magnitudes: tuple[float, float]


def neighbor_dirs(spacing_x: float = 1.0, spacing_y: float = 1.0) -> np.ndarray:
    """Unit vectors towards the 8 grid neighbours, shape (8, 2), counter-clockwise from East."""
    raw = np.array([(dx * spacing_x, dy * spacing_y) for dx, dy in OFFSETS], dtype=float)
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def decompose_velocity(v: np.ndarray | tuple[float, float], dirs: np.ndarray) -> Decomposition:
    """Split v onto the two most closely aligned of the 8 directions.

    Exact alignment puts the full magnitude on the aligned direction and
    pairs it with its counter-clockwise neighbour at magnitude 0.
    """
    vec = np.asarray(v, dtype=float)
    speed = float(np.hypot(vec[0], vec[1]))
    if speed == 0.0:
        raise ValueError('cannot decompose a zero velocity')

    cos = dirs @ vec / speed
    k = int(np.argmax(cos))
    dk = dirs[k]
    cross = float(dk[0] * vec[1] - dk[1] * vec[0])
    ccw = (k + 1) % len(dirs)
    if abs(cross) <= 1e-14 * speed:
        return Decomposition(directions=(k, ccw), magnitudes=(speed, 0.0))

    j = ccw if cross > 0 else (k - 1) % len(dirs)
    system = np.column_stack([dirs[k], dirs[j]])
    m = np.linalg.solve(system, vec)
    if m.min() < -1e-12:
        sector = f'{DIRECTION_NAMES[k]}/{DIRECTION_NAMES[j]}'
        raise DecompositionError(f'negative component {m.min():.3e} decomposing v={vec.tolist()} on {sector}')
    m = np.clip(m, 0.0, None)
    return Decomposition(directions=(k, j), magnitudes=(float(m[0]), float(m[1])))


def build_network(grid: VelocityGrid, edge_metric: str = 'euclidean') -> DirectedNetwork:
    """Build the directed network and its transition probabilities from a velocity grid."""
    if edge_metric not in EDGE_METRICS:
        raise ValidationError(f'Unknown edge metric: {edge_metric}. Available: {", ".join(EDGE_METRICS)}')

    water = grid.water_nodes()
    if not water:
        raise ValidationError('grid has no water nodes')
    if all(_speed(node) == 0.0 for node in water):
        raise ValidationError('all water velocities are zero: empty transition structure')

    ids = {(node.ix, node.iy): i for i, node in enumerate(water)}
    vertices = [Vertex(id=i, x=node.x, y=node.y) for i, node in enumerate(water)]
    dirs = neighbor_dirs(grid.spacing_x, grid.spacing_y)

    edges: list[Edge] = []
    sink_mass: list[float] = []
    for tail, node in enumerate(water):
        speed = _speed(node)
        if speed == 0.0:
            # zero velocity: absorb locally
            sink_mass.append(1.0)
            continue
        vel = np.array([node.u or 0.0, node.v or 0.0])
        dec = decompose_velocity(vel, dirs)
        total = sum(dec.magnitudes)
        sink = 0.0
        for k, mag in zip(dec.directions, dec.magnitudes, strict=True):
            if mag <= 0.0:
                continue
            share = mag / total
            dx, dy = OFFSETS[k]
            head = ids.get((node.ix + dx, node.iy + dy))
            if head is None:
                sink += share
                continue
            length = math.hypot(vertices[head].x - vertices[tail].x, vertices[head].y - vertices[tail].y)
            if edge_metric == 'time':
                length /= float(vel @ dirs[k])
            edges.append(Edge(tail=tail, head=head, length=length, prob=share))
        sink_mass.append(sink)

    net = DirectedNetwork(vertices=vertices, edges=edges, sink_mass=sink_mass, edge_metric=edge_metric)
    sources, outlets = classify_vertices(net)
    net.sources = sources
    net.outlets = outlets
    logger.debug('built network: %d vertices, %d edges, %d outlets', net.n, len(edges), len(outlets))
    return net


def classify_vertices(net: DirectedNetwork) -> tuple[frozenset[int], frozenset[int]]:
    """Sources have no incoming edge; outlets send positive mass to the sink."""
    has_incoming = {e.head for e in net.edges}
    sources = frozenset(v.id for v in net.vertices if v.id not in has_incoming)
    outlets = frozenset(v.id for v in net.vertices if net.sink_mass[v.id] > 0.0)
    return sources, outlets


def validate_network(net: DirectedNetwork) -> None:
    """Check every DirectedNetwork invariant; raise NetworkSchemaError on the first violation."""
    n = net.n
    for i, v in enumerate(net.vertices):
        if v.id != i:
            raise NetworkSchemaError(f'vertex ids must be 0..n-1 in order; position {i} has id {v.id}')
    if len(net.sink_mass) != n:
        raise NetworkSchemaError(f'sink_mass has {len(net.sink_mass)} entries for {n} vertices')

    out_mass = [0.0] * n
    out_count = [0] * n
    for e in net.edges:
        if not (0 <= e.tail < n and 0 <= e.head < n) or e.tail == e.head:
            raise NetworkSchemaError(f'edge ({e.tail}, {e.head}) has invalid endpoints')
        if not 0.0 <= e.prob <= 1.0:
            raise NetworkSchemaError(f'edge ({e.tail}, {e.head}) probability {e.prob} outside [0, 1]')
        if not e.length > 0.0:
            raise NetworkSchemaError(f'edge ({e.tail}, {e.head}) has non-positive length {e.length}')
        if net.edge_metric == 'euclidean':
            a, b = net.vertices[e.tail], net.vertices[e.head]
            dist = math.hypot(b.x - a.x, b.y - a.y)
            if abs(e.length - dist) > 1e-9 * max(dist, 1.0):
                raise NetworkSchemaError(f'edge ({e.tail}, {e.head}) length {e.length} != distance {dist}')
        out_mass[e.tail] += e.prob
        out_count[e.tail] += 1

    for i in range(n):
        if out_count[i] > 2:
            raise NetworkSchemaError(f'vertex {i} has {out_count[i]} outgoing edges (at most 2)')
        if net.sink_mass[i] < 0.0 or abs(out_mass[i] + net.sink_mass[i] - 1.0) > ROW_TOL:
            raise NetworkSchemaError(f'vertex {i}: outgoing mass {out_mass[i]} + sink {net.sink_mass[i]} != 1')

    sources, outlets = classify_vertices(net)
    if net.sources != sources or net.outlets != outlets:
        raise NetworkSchemaError('source/outlet flags disagree with the transition structure')


def _speed(node: GridNode) -> float:
    return math.hypot(node.u or 0.0, node.v or 0.0)
