"""Report builder: the one-line JSON summary and the --text rendering."""

import json
import math
from typing import Any

import numpy as np

from flowcov.core.types import Report


def _plain(value: Any) -> Any:
    """numpy scalars/arrays to Python types, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def format_json(report: Report) -> str:
    """Single-line JSON: {command, status, outputs, summary}."""
    obj = {
        'command': report.command,
        'status': report.status,
        'outputs': list(report.outputs),
        'summary': _plain(report.summary),
    }
    return json.dumps(obj, separators=(',', ':'))


def format_text(report: Report) -> str:
    """Format report as human-readable text."""
    lines = [f'flowcov {report.command}: {report.status}']
    for path in report.outputs:
        lines.append(f'  wrote {path}')
    if report.summary:
        lines.append('')
        _text_lines(report.summary, lines, indent=2)
    return '\n'.join(lines)


def _text_lines(data: dict[str, Any], lines: list[str], indent: int) -> None:
    pad = ' ' * indent
    for key, value in data.items():
        value = _plain(value)
        if isinstance(value, dict):
            lines.append(f'{pad}{key}:')
            _text_lines(value, lines, indent + 2)
        elif isinstance(value, float):
            lines.append(f'{pad}{key}: {value:.6g}')
        elif isinstance(value, list) and len(value) > 12:
            shown = ', '.join(f'{v:.6g}' if isinstance(v, float) else str(v) for v in value[:12])
            lines.append(f'{pad}{key}: [{shown}, ...] ({len(value)} items)')
        else:
            lines.append(f'{pad}{key}: {value}')
