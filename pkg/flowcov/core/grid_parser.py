"""Parser for gridded velocity/observation CSV exports.

Header: ix,iy,x,y,u,v,value[,water]. Missing numbers are the literal `NA`
(case-sensitive). The optional `water` column (1/0, true/false) marks
water nodes whose value is missing but whose velocity is known.

Spacing is inferred from coordinate deltas and every node is checked
against x = x0 + ix * spacing_x (same for y).
"""

import io
import math

import pandas as pd

from flowcov.core.errors import GridFormatError
from flowcov.core.types import GridNode, VelocityGrid

REQUIRED_COLUMNS = ('ix', 'iy', 'x', 'y', 'u', 'v', 'value')
MISSING = 'NA'
_TRUE = {'1', 'true', 'True', 'TRUE'}
_FALSE = {'0', 'false', 'False', 'FALSE', ''}


def parse_grid_file(path: str, min_water: int = 1) -> VelocityGrid:
    """Parse a grid CSV from disk."""
    with open(path, encoding='utf-8') as f:
        text = f.read()
    return parse_grid(text, min_water=min_water)


def parse_grid(text: str, min_water: int = 1) -> VelocityGrid:
    """Parse a grid CSV document. Fails when fewer than `min_water` water nodes are present."""
    try:
        frame = pd.read_csv(
            io.StringIO(text), dtype=str, keep_default_na=False, skipinitialspace=True, index_col=False
        )
    except pd.errors.EmptyDataError as exc:
        raise GridFormatError('empty grid document') from exc
    except pd.errors.ParserError as exc:
        raise GridFormatError(f'malformed CSV: {exc}') from exc

    columns = [c.strip() for c in frame.columns]
    frame.columns = columns
    missing = [c for c in REQUIRED_COLUMNS if c not in columns]
    if missing:
        raise GridFormatError(f'header must contain {",".join(REQUIRED_COLUMNS)}; missing {",".join(missing)}')
    has_flag = 'water' in columns

    nodes: list[GridNode] = []
    seen: set[tuple[int, int]] = set()
    for pos, record in enumerate(frame.to_dict('records'), start=1):
        node = _parse_row(record, pos, has_flag)
        key = (node.ix, node.iy)
        if key in seen:
            raise GridFormatError(f'duplicate grid index ({node.ix}, {node.iy})', row=pos)
        seen.add(key)
        nodes.append(node)

    water = sum(n.is_water for n in nodes)
    if water < max(min_water, 1):
        raise GridFormatError(f'grid has {water} water node(s), needs at least {max(min_water, 1)}')

    nx = max(n.ix for n in nodes) + 1
    ny = max(n.iy for n in nodes) + 1
    sx = _infer_spacing(nodes, 'x')
    sy = _infer_spacing(nodes, 'y')
    if sx is None and sy is None:
        sx = sy = 1.0
    spacing_x = sx if sx is not None else sy
    spacing_y = sy if sy is not None else sx
    assert spacing_x is not None and spacing_y is not None
    _check_lattice(nodes, spacing_x, spacing_y)
    return VelocityGrid(nx=nx, ny=ny, spacing_x=spacing_x, spacing_y=spacing_y, nodes=nodes)


def _parse_row(record: dict, pos: int, has_flag: bool) -> GridNode:
    for col in REQUIRED_COLUMNS:
        if not isinstance(record.get(col), str) or record[col].strip() == '':
            raise GridFormatError(f'missing field {col!r}', row=pos)
    ix = _int(record['ix'], 'ix', pos)
    iy = _int(record['iy'], 'iy', pos)
    if ix < 0 or iy < 0:
        raise GridFormatError(f'negative grid index ({ix}, {iy})', row=pos)
    x = _float(record['x'], 'x', pos, allow_missing=False)
    y = _float(record['y'], 'y', pos, allow_missing=False)
    u = _float(record['u'], 'u', pos)
    v = _float(record['v'], 'v', pos)
    value = _float(record['value'], 'value', pos)

    flagged = False
    if has_flag:
        raw = str(record.get('water', '')).strip()
        if raw in _TRUE:
            flagged = True
        elif raw not in _FALSE:
            raise GridFormatError(f'bad water flag {raw!r}', row=pos)

    is_water = value is not None or (flagged and u is not None and v is not None)
    return GridNode(ix=ix, iy=iy, x=x, y=y, u=u, v=v, value=value, is_water=is_water)


def _int(raw: str, name: str, pos: int) -> int:
    try:
        return int(raw.strip())
    except ValueError as exc:
        raise GridFormatError(f'{name} is not an integer: {raw!r}', row=pos) from exc


def _float(raw: str, name: str, pos: int, allow_missing: bool = True) -> float | None:
    text = raw.strip()
    if text == MISSING:
        if allow_missing:
            return None
        raise GridFormatError(f'{name} may not be {MISSING}', row=pos)
    try:
        val = float(text)
    except ValueError as exc:
        raise GridFormatError(f'{name} is not a number: {raw!r}', row=pos) from exc
    if not math.isfinite(val):
        raise GridFormatError(f'{name} is not finite: {raw!r}', row=pos)
    return val


def _infer_spacing(nodes: list[GridNode], axis: str) -> float | None:
    """Spacing along one axis from the extreme indices, None when only one index is present."""
    index = (lambda n: n.ix) if axis == 'x' else (lambda n: n.iy)
    coord = (lambda n: n.x) if axis == 'x' else (lambda n: n.y)
    lo = min(index(n) for n in nodes)
    hi = max(index(n) for n in nodes)
    if hi == lo:
        return None
    c_lo = sum(coord(n) for n in nodes if index(n) == lo) / sum(1 for n in nodes if index(n) == lo)
    c_hi = sum(coord(n) for n in nodes if index(n) == hi) / sum(1 for n in nodes if index(n) == hi)
    spacing = (c_hi - c_lo) / (hi - lo)
    if spacing <= 0:
        raise GridFormatError(f'non-positive inferred spacing along {axis}: {spacing}')
    return spacing


def _check_lattice(nodes: list[GridNode], sx: float, sy: float) -> None:
    first = min(nodes, key=lambda n: (n.iy, n.ix))
    x0 = first.x - first.ix * sx
    y0 = first.y - first.iy * sy
    tol_x = 1e-6 * max(sx, 1.0)
    tol_y = 1e-6 * max(sy, 1.0)
    for pos, n in enumerate(nodes, start=1):
        if abs(n.x - (x0 + n.ix * sx)) > tol_x or abs(n.y - (y0 + n.iy * sy)) > tol_y:
            raise GridFormatError(
                f'coordinates ({n.x}, {n.y}) inconsistent with index ({n.ix}, {n.iy}) '
                f'and spacing ({sx}, {sy})',
                row=pos,
            )
