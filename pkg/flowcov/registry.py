"""Command discovery and lookup.

Command modules live in flowcov/commands/. Module `build_net` must define
`command = Command(name='build_net', ...)` with a run hook; the CLI calls it
`build-net`. Lookups accept either spelling.

Normal Python finds the modules with pkgutil.iter_modules. A frozen
PyInstaller binary has no package directory to scan, so discovery falls
back to flowcov.commands.COMMAND_MODULES.
"""

import importlib
import pkgutil
from types import ModuleType

from flowcov.core.types import Command

_registry: dict[str, Command] = {}
_modules: dict[str, ModuleType] = {}


def cli_name(name: str) -> str:
    """Internal command name to its CLI form (underscores to hyphens)."""
    return name.replace('_', '-')


def internal_name(name: str) -> str:
    """CLI command name back to the module name (hyphens to underscores)."""
    return name.replace('-', '_')


def _register(modname: str, module: ModuleType) -> None:
    cmd = getattr(module, 'command', None)
    if not isinstance(cmd, Command):
        return
    if cmd.name != modname:
        raise RuntimeError(f'flowcov.commands.{modname} defines command {cmd.name!r}; it must be named {modname!r}')
    if not cmd.runnable:
        raise RuntimeError(f'command {cli_name(modname)} has no @command.run function')
    _registry[modname] = cmd
    _modules[modname] = module


def discover() -> dict[str, Command]:
    """Import and check every command module once; returns commands keyed by module name."""
    if _registry:
        return _registry

    import flowcov.commands as pkg

    found = [name for _finder, name, _ispkg in pkgutil.iter_modules(pkg.__path__) if not name.startswith('_')]
    for modname in found or pkg.COMMAND_MODULES:
        _register(modname, importlib.import_module(f'flowcov.commands.{modname}'))
    return _registry


def get(name: str) -> Command:
    """Command by CLI or module name."""
    reg = discover()
    key = internal_name(name)
    if key not in reg:
        raise KeyError(f'Unknown command: {name}. Available: {", ".join(sorted(map(cli_name, reg)))}')
    return reg[key]


def docs(name: str) -> str:
    """Full help text: the command module's docstring, else the Command help string."""
    cmd = get(name)
    return (_modules[cmd.name].__doc__ or cmd.help).strip()


def summary(name: str) -> str:
    """First line of docs(name)."""
    text = docs(name)
    return text.splitlines()[0] if text else ''


def all_commands() -> dict[str, Command]:
    return discover()
