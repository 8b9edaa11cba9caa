"""Entry point of the ``hetcon`` program.

Exit codes:

    0  success, whatever the verdicts in the report
    2  invalid command line, configuration or JSON document
    3  numerical error (module error text is logged)
    4  network not certified and --require-certified given
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import hetcon.log
from hetcon.cli.action import ACTIONS, EXIT_CONFIG, EXIT_MATH
from hetcon.cli.schema import ConfigError
from hetcon.error import HetconError
from hetcon.json import JsonError
from hetcon.main import Main

if TYPE_CHECKING:
    from hetcon.cli.action import Action

logger = hetcon.log.getLogger("cli.main")


def main(args: list[str] | None = None) -> int:
    """Run a hetcon sub-command.

    :param args: the command line arguments, ``sys.argv[1:]`` if None
    :return: the exit code
    """
    m = Main(name="hetcon")
    subparsers = m.argument_parser.add_subparsers(
        title="action", description="valid actions", dest="action"
    )
    subparsers.required = True
    actions: dict[str, Action] = {cls.name: cls(subparsers) for cls in ACTIONS}

    try:
        m.parse_args(args)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_CONFIG

    assert m.args is not None
    hetcon.log.debug("running action %s", m.args.action)
    try:
        return actions[m.args.action].run(m.args)
    except (ConfigError, JsonError) as err:
        logger.error(err)
        return EXIT_CONFIG
    except HetconError as err:
        logger.error(err)
        return EXIT_MATH
