"""Small networks and grids shared by the tests."""

import math

import numpy as np

from flowcov.core.network import classify_vertices
from flowcov.core.types import DirectedNetwork, Edge, Vertex


def make_net(coords: list[tuple[float, float]], edges: list[tuple[int, int, float]]) -> DirectedNetwork:
    """Network with Euclidean edge lengths; the sink takes whatever the edges leave."""
    vertices = [Vertex(id=i, x=float(x), y=float(y)) for i, (x, y) in enumerate(coords)]
    out = [0.0] * len(vertices)
    edge_list = []
    for tail, head, prob in edges:
        a, b = vertices[tail], vertices[head]
        edge_list.append(Edge(tail=tail, head=head, length=math.hypot(b.x - a.x, b.y - a.y), prob=prob))
        out[tail] += prob
    sink = [max(0.0, 1.0 - m) if abs(1.0 - m) > 1e-15 else 0.0 for m in out]
    net = DirectedNetwork(vertices=vertices, edges=edge_list, sink_mass=sink)
    net.sources, net.outlets = classify_vertices(net)
    return net


def chain(n: int, h: float = 1.0) -> DirectedNetwork:
    """0 -> 1 -> ... -> n-1 -> sink, spacing h."""
    return make_net([(i * h, 0.0) for i in range(n)], [(i, i + 1, 1.0) for i in range(n - 1)])


def split(h: float = 1.0) -> DirectedNetwork:
    """0 sends half its mass to 1 and half to 2, both absorbing; both edges have length h."""
    return make_net([(0.0, 0.0), (h, 0.0), (0.0, h)], [(0, 1, 0.5), (0, 2, 0.5)])


def diamond() -> DirectedNetwork:
    """0 splits to 1 and 2, which merge into 3."""
    coords = [(0.0, 0.0), (1.0, 1.0), (1.0, -1.0), (2.0, 0.0)]
    return make_net(coords, [(0, 1, 0.5), (0, 2, 0.5), (1, 3, 1.0), (2, 3, 1.0)])


def two_cycle() -> DirectedNetwork:
    """pi_V = [[0, 0.9], [0.5, 0]]: sink shares 0.1 and 0.5."""
    return make_net([(0.0, 0.0), (1.0, 0.0)], [(0, 1, 0.9), (1, 0, 0.5)])


def two_chains() -> DirectedNetwork:
    """0 -> 1 and 2 -> 3, no link between them."""
    return make_net([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)], [(0, 1, 1.0), (2, 3, 1.0)])


def random_network(rng: np.random.Generator, n: int, cyclic: bool) -> DirectedNetwork:
    """Random network with at most two out-edges per vertex.

    Acyclic: edges only go to higher ids. Cyclic: any head, but every vertex
    keeps at least 0.1 of its mass for the sink.
    """
    coords = [(float(x), float(y)) for x, y in rng.uniform(0.0, 10.0, size=(n, 2))]
    edges = []
    for a in range(n):
        heads = [b for b in range(n) if b != a] if cyclic else list(range(a + 1, n))
        if not heads:
            continue
        k = int(rng.integers(0, min(2, len(heads)) + 1))
        if k == 0:
            continue
        chosen = rng.choice(heads, size=k, replace=False)
        sink = rng.uniform(0.1, 0.6) if cyclic else rng.uniform(0.0, 0.5)
        shares = rng.dirichlet(np.ones(k)) * (1.0 - sink)
        edges.extend((a, int(b), float(p)) for b, p in zip(chosen, shares, strict=True))
    return make_net(coords, edges)


def random_tree_parents(rng: np.random.Generator, n: int) -> list[int]:
    """parent[i] < i for i >= 1; parent[0] = -1."""
    return [-1] + [int(rng.integers(0, i)) for i in range(1, n)]


def converging_tree(rng: np.random.Generator, n: int) -> tuple[DirectedNetwork, list[int]]:
    """Flow from every vertex to its parent with probability 1; the root drains to the sink."""
    parents = random_tree_parents(rng, n)
    coords = [(float(x), float(y)) for x, y in rng.uniform(0.0, 10.0, size=(n, 2))]
    return make_net(coords, [(i, parents[i], 1.0) for i in range(1, n)]), parents


def diverging_tree(rng: np.random.Generator, n: int) -> tuple[DirectedNetwork, list[int]]:
    """Flow from every vertex to its children, split by random shares; leaves drain to the sink."""
    parents = random_tree_parents(rng, n)
    coords = [(float(x), float(y)) for x, y in rng.uniform(0.0, 10.0, size=(n, 2))]
    children: dict[int, list[int]] = {}
    for i in range(1, n):
        children.setdefault(parents[i], []).append(i)
    edges = []
    for a, kids in children.items():
        shares = rng.dirichlet(np.ones(len(kids)))
        edges.extend((a, b, float(p)) for b, p in zip(kids, shares, strict=True))
    return make_net(coords, edges), parents


def grid_csv(nx: int, ny: int, u: float, v: float, values: list[float] | None = None, spacing: float = 1.0) -> str:
    """Regular all-water grid with a uniform velocity."""
    lines = ['ix,iy,x,y,u,v,value']
    for iy in range(ny):
        for ix in range(nx):
            k = iy * nx + ix
            val = 1.0 if values is None else values[k]
            lines.append(f'{ix},{iy},{ix * spacing},{iy * spacing},{u},{v},{val!r}')
    return '\n'.join(lines) + '\n'


def vortex_csv(n: int = 4, spacing: float = 10.0) -> str:
    """All-water n x n grid rotating counter-clockwise about its centre.

    The ring of boundary nodes forms a directed cycle; mass pointing out of
    the grid leaks to the sink, so the chain stays transient.
    """
    c = (n - 1) / 2.0
    lines = ['ix,iy,x,y,u,v,value']
    for iy in range(n):
        for ix in range(n):
            val = 0.1 * (iy * n + ix)
            lines.append(f'{ix},{iy},{ix * spacing},{iy * spacing},{-(iy - c)},{ix - c},{val!r}')
    return '\n'.join(lines) + '\n'
