"""Exception hierarchy for flowcov.

Two branches, mapped to CLI exit codes by flowcov.__main__:
  ValidationError (exit 2): bad input files, schema violations, bad parameters.
  NumericalError  (exit 3): singular systems, failed factorisations.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class FlowcovError(Exception):
    """Base class for every error raised by flowcov."""

    exit_code = 1


class ValidationError(FlowcovError):
    exit_code = EXIT_VALIDATION


class GridFormatError(ValidationError):
    """Malformed grid CSV. `row` is the 1-based data row (header excluded), 0 for file-level problems."""

    def __init__(self, message: str, row: int = 0):
        self.row = row
        super().__init__(f'row {row}: {message}' if row else message)


class NetworkSchemaError(ValidationError):
    pass


class ArtifactIntegrityError(ValidationError):
    """Checksum mismatch or truncated payload in a MatrixFile."""


class ConfigError(ValidationError):
    pass


class NumericalError(FlowcovError):
    exit_code = EXIT_NUMERICAL


class DecompositionError(NumericalError):
    """Velocity decomposition produced a negative coefficient (misordered sector)."""


class RecurrentSubnetworkError(NumericalError):
    """A closed set of vertices never reaches the sink, so I - pi_V is singular."""

    def __init__(self, component: list[int]):
        self.component = component
        shown = ', '.join(str(v) for v in component[:20])
        more = ' ...' if len(component) > 20 else ''
        super().__init__(f'recurrent subnetwork never reaches the sink: vertices [{shown}{more}]')


class SingularPairError(NumericalError):
    def __init__(self, x: int, y: int):
        self.pair = (x, y)
        super().__init__(f'singular 2x2 block G_AA for pair ({x}, {y})')


class EstimationError(NumericalError):
    pass
