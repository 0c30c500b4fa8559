"""flowcov: flow-informed covariance models on directed networks.

Usage: flowcov <command> [options]

Commands are auto-discovered from flowcov/commands/.
Each command module's docstring is its documentation.
Run `flowcov help <command>` for full module docs.

Every command prints one JSON summary line on stdout
({"command", "status", "outputs", "summary"}); --text prints a readable
report instead. Diagnostics go to stderr.

Config file:
  Any flag can also be set as `key = value` in a config file. The file is
  taken from --config, then $FLOWCOV_CONFIG; otherwise `flowcov.cfg` (or
  `.flowcov.cfg`) is looked up from the current directory upwards, stopping
  at the nearest .git boundary. Flags given on the command line always win.

Exit codes: 0 ok, 2 validation failure, 3 numerical failure.
"""

import argparse
import logging
import sys

from flowcov import registry
from flowcov.core.config import RunConfig, apply_config, load_config
from flowcov.core.errors import EXIT_OK, EXIT_VALIDATION, FlowcovError
from flowcov.core.report import format_json, format_text
from flowcov.core.types import Report

logger = logging.getLogger('flowcov.cli')


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', metavar='PATH', default=None, help='Config file (default: walk up to flowcov.cfg)')
    common.add_argument('--threads', type=int, default=None, metavar='N', help='Cap on worker threads (default 1)')
    common.add_argument('-v', '--verbose', action='store_true', help='Debug logging on stderr')
    common.add_argument('--text', action='store_true', help='Readable report instead of the JSON summary line')
    return common


def _build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    commands = registry.all_commands()

    epilog = (
        'Examples:\n'
        '  flowcov build-net --grid grid.csv --out net.json --values-out values.csv\n'
        '  flowcov covmat --net net.json --kernel exponential --sill 1 --range 150 --out cov.bin\n'
        '  flowcov estimate --net net.json --values values.csv --out params.json\n'
        '  flowcov simulate --net net.json --params params.json --m 500 --seed 42 --out ens.bin\n'
        '  flowcov krige --net net.json --params params.json --obs values.csv --out pred.csv\n'
        '  flowcov extremes --net net.json --ensemble ens.bin --threshold 27 --alpha 0.05 --out sets.json\n'
        '  flowcov bench --seed 7 --replicates 50 --out study.csv\n'
        '  flowcov help estimate\n'
    )
    parser = argparse.ArgumentParser(
        prog='flowcov',
        description='Flow-informed covariance models on directed networks.',
        epilog=epilog,
        formatter_class=argparse.RawTextHelpFormatter,
    )
    sub = parser.add_subparsers(dest='command', help='Command to run')
    common = _common_options()

    subparsers: dict[str, argparse.ArgumentParser] = {}
    for name, cmd in sorted(commands.items()):
        p = sub.add_parser(
            registry.cli_name(name),
            help=registry.summary(name),
            parents=[common],
            description=registry.docs(name),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        cmd.configure(p)
        subparsers[name] = p

    # `help` subcommand prints the full module docstring for a command
    help_parser = sub.add_parser('help', help='Print full docs for a command')
    help_parser.add_argument('topic', nargs='?', help='Command name')
    return parser, subparsers


def _print_help(topic: str | None) -> int:
    """Print full module docstring for a command."""
    commands = registry.all_commands()

    if topic is None:
        print('Available commands:\n')
        for name in sorted(commands):
            print(f'  {registry.cli_name(name):<12} {registry.summary(name)}')
        print('\nRun: flowcov help <command> for full docs.')
        return EXIT_OK

    try:
        doc = registry.docs(topic)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_VALIDATION
    print(doc if doc else f'(No module docs for {topic!r})')
    return EXIT_OK


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format='flowcov: %(levelname)s: %(message)s',
        stream=sys.stderr,
        force=True,
    )
    if not verbose:
        logger.setLevel(logging.INFO)


def _preparse(argv: list[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config', default=None)
    pre.add_argument('-v', '--verbose', action='store_true')
    early, _rest = pre.parse_known_args(argv)
    return early


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subparsers = _build_parser()

    # Config values become parser defaults, so explicit flags still win
    early = _preparse(argv)
    _configure_logging(early.verbose)
    try:
        config_path, values = load_config(early.config)
        unmatched = set(values)
        for p in subparsers.values():
            unmatched &= set(apply_config(p, values))
    except FlowcovError as exc:
        print(f'flowcov: error: {exc}', file=sys.stderr)
        return exc.exit_code
    if config_path is not None:
        logger.info('loaded %s', config_path)
    for key in sorted(unmatched):
        logger.warning('config key %r matches no flag', key)

    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_VALIDATION

    name = args.command
    if name == 'help':
        return _print_help(args.topic)

    report = Report(command=args.command)
    try:
        config = RunConfig.from_namespace(args)
        config.config_path = str(config_path) if config_path else None
        config.validate()
        registry.get(name).execute(config, report)
    except FlowcovError as exc:
        print(f'flowcov: error: {exc}', file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f'flowcov: error: {exc}', file=sys.stderr)
        return EXIT_VALIDATION

    print(format_text(report) if config.text else format_json(report))
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
