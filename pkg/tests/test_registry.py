"""Tests for flowcov.registry — discovery, name forms and module checks."""

from types import ModuleType

import pytest

import flowcov.commands
from flowcov import registry
from flowcov.core.types import Command


def _module(name: str, cmd: object) -> ModuleType:
    module = ModuleType(f'flowcov.commands.{name}', 'Fake command.\n\nLonger text.')
    module.command = cmd  # type: ignore[attr-defined]
    return module


def _runnable(name: str) -> Command:
    cmd = Command(name=name)

    @cmd.run
    def run(config, report) -> None:
        pass

    return cmd


class TestDiscover:
    def test_every_command_module(self):
        assert sorted(registry.all_commands()) == sorted(flowcov.commands.COMMAND_MODULES)

    def test_every_command_runnable(self):
        assert all(cmd.runnable for cmd in registry.all_commands().values())


class TestLookup:
    def test_both_spellings(self):
        assert registry.get('build-net') is registry.get('build_net')

    def test_unknown_lists_cli_names(self):
        with pytest.raises(KeyError, match='build-net'):
            registry.get('plot')

    def test_name_round_trip(self):
        assert registry.cli_name('build_net') == 'build-net'
        assert registry.internal_name('build-net') == 'build_net'

    def test_docs_from_module(self):
        assert registry.summary('covmat') == 'Assemble the network covariance matrix of a kernel.'
        assert 'path-sum' in registry.docs('covmat')


class TestRegister:
    def test_module_without_command_is_skipped(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setattr(registry, '_registry', {})
        registry._register('helpers', ModuleType('flowcov.commands.helpers'))
        assert registry._registry == {}

    def test_name_must_match_module(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setattr(registry, '_registry', {})
        with pytest.raises(RuntimeError, match="must be named 'plot'"):
            registry._register('plot', _module('plot', _runnable('draw')))

    def test_run_hook_required(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setattr(registry, '_registry', {})
        with pytest.raises(RuntimeError, match='no @command.run'):
            registry._register('plot', _module('plot', Command(name='plot')))

    def test_registered_module_supplies_docs(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setattr(registry, '_registry', {})
        monkeypatch.setattr(registry, '_modules', {})
        registry._register('plot', _module('plot', _runnable('plot')))
        assert registry.summary('plot') == 'Fake command.'
