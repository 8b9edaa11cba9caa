# type: ignore
import logging
import os

# The user configuration file is looked up when hetcon.config is imported
os.environ["HETCON_CONFIG"] = os.devnull

import hetcon.log  # noqa: E402


def init_testsuite_env():
    """Initialize testsuite environment."""
    # Activate full debug logs
    hetcon.log.activate(level=logging.DEBUG, hetcon_debug=True)

    # Force UTC timezone
    os.environ["TZ"] = "UTC"
    if "HETCON_LOG" in os.environ:
        del os.environ["HETCON_LOG"]


init_testsuite_env()


def pytest_addoption(parser):
    parser.addoption(
        "--ci", action="store_true", help="Tests are running on a CI server"
    )
