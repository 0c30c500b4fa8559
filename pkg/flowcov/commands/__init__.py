"""flowcov commands, one module per CLI subcommand.

A module named `build_net` defines `command = Command(name='build_net', ...)`
and is invoked as `flowcov build-net`. flowcov.registry.discover() collects
and checks them.

PyInstaller cannot see modules that are only imported by name, so every
command is imported here as well; COMMAND_MODULES is the discovery list a
frozen binary falls back to. Keep the two in sync.
"""

import flowcov.commands.bench as _bench  # noqa: F401
import flowcov.commands.build_net as _build_net  # noqa: F401
import flowcov.commands.covmat as _covmat  # noqa: F401
import flowcov.commands.estimate as _estimate  # noqa: F401
import flowcov.commands.extremes as _extremes  # noqa: F401
import flowcov.commands.krige as _krige  # noqa: F401
import flowcov.commands.simulate as _simulate  # noqa: F401

COMMAND_MODULES = ('bench', 'build_net', 'covmat', 'estimate', 'extremes', 'krige', 'simulate')
