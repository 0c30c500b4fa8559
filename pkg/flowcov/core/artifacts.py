"""On-disk artifact formats: network JSON, MatrixFile, ensembles, parameter JSON, CSV tables.

MatrixFile: `<name>` holds the row-major little-endian float64 payload,
`<name>.json` the sidecar {n_rows, n_cols, dtype, sha256, meta}.
JSON is written with a fixed key order and indent=2; floats round-trip
through repr, so re-serialising a parsed artifact is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from flowcov.core.errors import ArtifactIntegrityError, NetworkSchemaError, ValidationError
from flowcov.core.network import EDGE_METRICS, validate_network
from flowcov.core.types import KERNEL_KINDS, DirectedNetwork, Edge, FieldEnsemble, KernelSpec, StudyReport, Vertex

logger = logging.getLogger(__name__)

DTYPE = '<f8'
FLOAT_FORMAT = '%.17g'
MISSING = 'NA'


# --- networks -----------------------------------------------------------------


def network_to_dict(net: DirectedNetwork) -> dict[str, Any]:
    return {
        'vertices': [{'id': v.id, 'x': v.x, 'y': v.y, 'sink': net.sink_mass[v.id]} for v in net.vertices],
        'edges': [{'tail': e.tail, 'head': e.head, 'length': e.length, 'prob': e.prob} for e in net.edges],
        'sources': sorted(net.sources),
        'outlets': sorted(net.outlets),
        'edge_metric': net.edge_metric,
    }


def dumps_network(net: DirectedNetwork) -> str:
    return json.dumps(network_to_dict(net), indent=2) + '\n'


def loads_network(text: str) -> DirectedNetwork:
    """Parse and validate a network document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkSchemaError(f'network is not valid JSON: {exc}') from exc
    if not isinstance(doc, dict):
        raise NetworkSchemaError('network document must be a JSON object')
    for key in ('vertices', 'edges', 'sources', 'outlets'):
        if not isinstance(doc.get(key), list):
            raise NetworkSchemaError(f'network document needs a list {key!r}')
    edge_metric = doc.get('edge_metric', 'euclidean')
    if edge_metric not in EDGE_METRICS:
        raise NetworkSchemaError(f'unknown edge_metric {edge_metric!r}')

    try:
        vertices = [Vertex(id=int(v['id']), x=_num(v['x']), y=_num(v['y'])) for v in doc['vertices']]
        edges = [
            Edge(tail=int(e['tail']), head=int(e['head']), length=_num(e['length']), prob=_num(e['prob']))
            for e in doc['edges']
        ]
        sources = frozenset(int(s) for s in doc['sources'])
        outlets = frozenset(int(s) for s in doc['outlets'])
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkSchemaError(f'malformed vertex or edge record: {exc}') from exc

    sinks = [v.get('sink') for v in doc['vertices']]
    if all(s is not None for s in sinks):
        sink_mass = [_num(s) for s in sinks]
    else:
        # derive the sink share from the outgoing edges
        out = [0.0] * len(vertices)
        for e in edges:
            if 0 <= e.tail < len(out):
                out[e.tail] += e.prob
        sink_mass = [max(0.0, 1.0 - m) for m in out]

    net = DirectedNetwork(
        vertices=vertices, edges=edges, sink_mass=sink_mass, sources=sources, outlets=outlets, edge_metric=edge_metric
    )
    validate_network(net)
    return net


def write_network(net: DirectedNetwork, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_network(net), encoding='utf-8')
    return path


def read_network(path: str | Path) -> DirectedNetwork:
    return loads_network(_read_text(path))


def _num(raw: Any) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise TypeError(f'expected a number, got {raw!r}')
    val = float(raw)
    if not math.isfinite(val):
        raise ValueError(f'non-finite number {raw!r}')
    return val


# --- matrices -----------------------------------------------------------------


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.json')


def write_matrix(matrix: np.ndarray, path: str | Path, meta: dict[str, Any] | None = None) -> Path:
    """Write the payload and its sidecar. Returns the payload path."""
    data = np.ascontiguousarray(np.atleast_2d(np.asarray(matrix, dtype=float)), dtype=DTYPE)
    payload = data.tobytes(order='C')
    path = Path(path)
    path.write_bytes(payload)
    sidecar = {
        'n_rows': int(data.shape[0]),
        'n_cols': int(data.shape[1]),
        'dtype': DTYPE,
        'sha256': hashlib.sha256(payload).hexdigest(),
        'meta': meta or {},
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + '\n', encoding='utf-8')
    return path


def read_sidecar(path: str | Path) -> dict[str, Any]:
    side = sidecar_path(path)
    try:
        doc = json.loads(_read_text(side))
    except json.JSONDecodeError as exc:
        raise ArtifactIntegrityError(f'{side}: sidecar is not valid JSON') from exc
    for key in ('n_rows', 'n_cols', 'sha256'):
        if key not in doc:
            raise ArtifactIntegrityError(f'{side}: sidecar lacks {key!r}')
    if doc.get('dtype', DTYPE) != DTYPE:
        raise ArtifactIntegrityError(f'{side}: unsupported dtype {doc.get("dtype")!r}')
    return doc


def read_matrix(path: str | Path) -> np.ndarray:
    """Read and verify a MatrixFile."""
    path = Path(path)
    doc = read_sidecar(path)
    if not path.is_file():
        raise ValidationError(f'file not found: {path}')
    payload = path.read_bytes()
    rows, cols = int(doc['n_rows']), int(doc['n_cols'])
    expected = rows * cols * 8
    if len(payload) != expected:
        raise ArtifactIntegrityError(
            f'{path}: truncated payload, {len(payload)} bytes for {rows}x{cols} (expected {expected})'
        )
    digest = hashlib.sha256(payload).hexdigest()
    if digest != doc['sha256']:
        raise ArtifactIntegrityError(f'{path}: checksum mismatch')
    return np.frombuffer(payload, dtype=DTYPE).reshape(rows, cols).astype(float)


# --- ensembles ----------------------------------------------------------------


def write_ensemble(ens: FieldEnsemble, path: str | Path, params: dict[str, Any] | None = None) -> Path:
    meta = {'seed': ens.seed, 'M': ens.M, 'n': ens.n, 'mean': ens.mean.tolist(), 'params': params or {}}
    return write_matrix(ens.values, path, meta=meta)


def read_ensemble(path: str | Path) -> FieldEnsemble:
    values = read_matrix(path)
    meta = read_sidecar(path).get('meta', {})
    if 'seed' not in meta:
        raise ArtifactIntegrityError(f'{path}: not an ensemble (sidecar meta lacks seed)')
    n = values.shape[1]
    mean = np.asarray(meta.get('mean', [0.0] * n), dtype=float)
    if mean.shape != (n,):
        raise ArtifactIntegrityError(f'{path}: mean has {mean.size} entries for {n} vertices')
    return FieldEnsemble(values=values, mean=mean, seed=int(meta['seed']))


# --- parameters ---------------------------------------------------------------


def write_params(path: str | Path, doc: dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2) + '\n', encoding='utf-8')
    return path


def read_params(path: str | Path) -> KernelSpec:
    """Kernel from a parameter document ({kernel, theta_s, theta_r, ...})."""
    try:
        doc = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ValidationError(f'{path}: parameters are not valid JSON') from exc
    if not isinstance(doc, dict):
        raise ValidationError(f'{path}: parameters must be a JSON object')
    kind = doc.get('kernel', 'exponential')
    if kind not in KERNEL_KINDS:
        raise ValidationError(f'{path}: unknown kernel kind {kind!r}')
    try:
        return KernelSpec(kind, float(doc['theta_s']), float(doc['theta_r']))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f'{path}: bad kernel parameters: {exc}') from exc


# --- tables -------------------------------------------------------------------


def write_table(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep=MISSING, lineterminator='\n')
    return path


def read_vertex_table(path: str | Path, n: int) -> tuple[np.ndarray, list[str]]:
    """Read `vertex,<col>[,<col>...]` into an (n, k) array; absent vertices and `NA` become NaN."""
    if not Path(path).is_file():
        raise ValidationError(f'file not found: {path}')
    try:
        frame = pd.read_csv(path, na_values=[MISSING], keep_default_na=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise ValidationError(f'{path}: malformed table: {exc}') from exc
    if 'vertex' not in frame.columns or len(frame.columns) < 2:
        raise ValidationError(f'{path}: needs a vertex column and at least one value column')
    columns = [c for c in frame.columns if c != 'vertex']
    try:
        ids = frame['vertex'].astype(int).to_numpy()
        data = frame[columns].astype(float).to_numpy()
    except (TypeError, ValueError) as exc:
        raise ValidationError(f'{path}: non-numeric entries: {exc}') from exc
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ValidationError(f'{path}: vertex ids must lie in [0, {n})')
    if np.unique(ids).size != ids.size:
        raise ValidationError(f'{path}: duplicate vertex ids')
    out = np.full((n, len(columns)), np.nan)
    out[ids] = data
    return out, columns


def vertex_frame(values: np.ndarray, columns: list[str]) -> pd.DataFrame:
    values = np.asarray(values, dtype=float).reshape(values.shape[0], -1)
    frame = pd.DataFrame(values, columns=columns)
    frame.insert(0, 'vertex', np.arange(values.shape[0]))
    return frame


def study_frame(report: StudyReport) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in report.records])


def _read_text(path: str | Path) -> str:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f'file not found: {path}')
    return path.read_text(encoding='utf-8')
