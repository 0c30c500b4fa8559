"""Shared types for flowcov: grid, network, Markov solution, kernels, ensembles, Command, Report."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Literal

import numpy as np
import scipy.sparse as sp

KernelKind = Literal['exponential', 'spherical', 'linear_sill']
KERNEL_KINDS: tuple[str, ...] = ('exponential', 'spherical', 'linear_sill')


@dataclass(frozen=True)
class GridNode:
    """One node of the velocity grid. u, v or value may be missing (None)."""

    ix: int
    iy: int
    x: float  # km
    y: float  # km
    u: float | None  # eastward velocity
    v: float | None  # northward velocity
    value: float | None
    is_water: bool


@dataclass
class VelocityGrid:
    nx: int
    ny: int
    spacing_x: float  # km
    spacing_y: float  # km
    nodes: list[GridNode] = field(default_factory=list)

    def water_nodes(self) -> list[GridNode]:
        """Water nodes in vertex order: row-major by (iy, ix)."""
        return sorted((n for n in self.nodes if n.is_water), key=lambda n: (n.iy, n.ix))


@dataclass(frozen=True)
class Vertex:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    length: float  # km (or travel time with the `time` edge metric)
    prob: float


@dataclass(eq=True)
class DirectedNetwork:
    """Directed linear network with transition probabilities towards the sink S.

    Vertex ids are 0..n-1 and equal their position in `vertices`.
    """

    vertices: list[Vertex]
    edges: list[Edge]
    sink_mass: list[float]
    sources: frozenset[int] = frozenset()
    outlets: frozenset[int] = frozenset()
    edge_metric: str = 'euclidean'

    @property
    def n(self) -> int:
        return len(self.vertices)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.array([[v.x, v.y] for v in self.vertices], dtype=float).reshape(-1, 2)

    @cached_property
    def transition(self) -> sp.csr_matrix:
        """pi_V: the V-restricted transition matrix (sink column dropped)."""
        return self._edge_matrix([e.prob for e in self.edges])

    @cached_property
    def lengths(self) -> sp.csr_matrix:
        """Edge-length matrix D, nonzero on edges only."""
        return self._edge_matrix([e.length for e in self.edges])

    @cached_property
    def influx(self) -> np.ndarray:
        """Column sums of pi_V: total probability mass flowing into each vertex."""
        return np.asarray(self.transition.sum(axis=0)).ravel()

    @cached_property
    def sink(self) -> np.ndarray:
        return np.asarray(self.sink_mass, dtype=float)

    def out_edges(self, vertex: int) -> list[Edge]:
        return self._out_index.get(vertex, [])

    @cached_property
    def _out_index(self) -> dict[int, list[Edge]]:
        index: dict[int, list[Edge]] = {}
        for e in self.edges:
            index.setdefault(e.tail, []).append(e)
        return index

    def _edge_matrix(self, values: list[float]) -> sp.csr_matrix:
        n = self.n
        if not self.edges:
            return sp.csr_matrix((n, n))
        tails = [e.tail for e in self.edges]
        heads = [e.head for e in self.edges]
        return sp.csr_matrix((values, (tails, heads)), shape=(n, n))


@dataclass
class MarkovSolution:
    """Fundamental matrix G, non-return probabilities and reachability of the absorbing chain."""

    G: np.ndarray  # (I - pi_V)^-1
    U: np.ndarray  # U(x) = 1 / G[x, x]
    reach: np.ndarray  # bool, reach[x, y] iff a directed path x -> y exists
    hops: np.ndarray  # hop distance, inf where unreachable
    U_pair: np.ndarray | None = None  # U_pair[x, y] = U(x, y); diagonal holds U(x)

    @property
    def diameter(self) -> int:
        finite = self.hops[np.isfinite(self.hops)]
        return int(finite.max()) if finite.size else 0


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    sill: float  # theta_s
    range: float  # theta_r

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f'Unknown kernel kind: {self.kind}. Available: {", ".join(KERNEL_KINDS)}')
        if not (self.sill > 0 and math.isfinite(self.sill)):
            raise ValueError(f'sill must be positive, got {self.sill}')
        if not (self.range > 0 and math.isfinite(self.range)):
            raise ValueError(f'range must be positive, got {self.range}')

    @property
    def compact(self) -> bool:
        return self.kind != 'exponential'


@dataclass(frozen=True)
class PathWeight:
    path: tuple[tuple[int, int], ...]  # edge sequence as (tail, head)
    length: float
    pi_product: float  # Pi(p)
    beta: float
    weight: float  # w_p

    @property
    def hops(self) -> int:
        return len(self.path)


@dataclass(frozen=True)
class Bin:
    lo: float
    hi: float
    h: float  # representative distance: mean length of the walks inside the bin


@dataclass
class EmpiricalCovariance:
    bins: list[Bin]
    C_hat: np.ndarray
    theta_s_hat: float
    lam: float
    pair_count: int
    W: np.ndarray
    gamma: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return np.array([b.h for b in self.bins])


@dataclass
class FieldEnsemble:
    values: np.ndarray  # M x n
    mean: np.ndarray  # n
    seed: int

    @property
    def M(self) -> int:  # noqa: N802
        return int(self.values.shape[0])

    @property
    def n(self) -> int:
        return int(self.values.shape[1])


@dataclass
class ExcursionResult:
    threshold: float
    alpha: float
    inner_set: list[int]
    outer_set: list[int]
    marginal_probs: np.ndarray
    inner_coverage: float  # MC frequency of {inner subset of E}
    outer_coverage: float  # MC frequency of {E subset of outer}


@dataclass
class StudyRecord:
    theta_r: float
    replicate: int
    theta_s_hat: float
    theta_r_hat: float
    theta_s_hat_euclid: float
    theta_r_hat_euclid: float
    frobenius: float
    frobenius_euclid: float
    kl: float
    kl_euclid: float
    mse_network: float
    mse_euclid: float
    cov_mse_network: float
    cov_mse_euclid: float
    degenerate: bool = False
    note: str = ''


@dataclass
class StudyReport:
    records: list[StudyRecord] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)


class Command:
    """A self-registering CLI command.

    Usage in a command module:

        command = Command(name='covmat', help='Assemble the network covariance matrix')

        @command.arguments
        def arguments(parser):
            parser.add_argument('--net')

        @command.run
        def run(config, report):
            ...
    """

    def __init__(self, name: str, help: str = ''):
        self.name = name
        self.help = help
        self._args_fn: Callable[[Any], None] | None = None
        self._run_fn: Callable[[Any, Report], None] | None = None

    def arguments(self, fn: Callable[[Any], None]) -> Callable[[Any], None]:
        """Decorator to register the argparse hook."""
        self._args_fn = fn
        return fn

    def run(self, fn: Callable[[Any, Report], None]) -> Callable[[Any, Report], None]:
        """Decorator to register the run function."""
        self._run_fn = fn
        return fn

    @property
    def runnable(self) -> bool:
        return self._run_fn is not None

    def configure(self, parser: Any) -> None:
        if self._args_fn is not None:
            self._args_fn(parser)

    def execute(self, config: Any, report: Report) -> None:
        if self._run_fn is None:
            raise RuntimeError(f'Command {self.name} has no run function')
        self._run_fn(config, report)


@dataclass
class Report:
    """Accumulates the outputs and summary values of one command run."""

    command: str = ''
    outputs: list[str] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    status: str = 'ok'

    def add_output(self, path: str) -> None:
        self.outputs.append(str(path))

    def add(self, key: str, value: Any) -> None:
        self.summary[key] = value
