import logging

import hetcon.log
from hetcon.main import Main

import pytest


@pytest.fixture(autouse=True)
def restore_logging():
    yield
    hetcon.log.activate(level=logging.DEBUG, hetcon_debug=True)


def test_mainprog(capsys):
    m = Main(name="testmain")
    m.parse_args(["--nocolor"])
    m.argument_parser.print_usage()
    assert "testmain" in capsys.readouterr().out
    assert m.args.nocolor


def test_default_level_from_environment(monkeypatch):
    monkeypatch.setenv("HETCON_LOG", "ERROR")
    m = Main(name="testmain")
    assert m.default_level == logging.ERROR
    m.parse_args([])
    assert m.args.loglevel == logging.ERROR


def test_verbose_lowers_level():
    m = Main(name="testmain", default_level=logging.WARNING)
    m.parse_args(["-v", "-v", "--log-file", "main.log"])
    hetcon.log.debug("full debug record")
    hetcon.log.remove_log_handlers()
    with open("main.log") as f:
        assert "full debug record" in f.read()


def test_known_args_only():
    m = Main(name="testmain")
    m.argument_parser.add_argument("--foo")
    m.parse_args(["--foo", "1", "--bar"], known_args_only=True)
    assert m.args.foo == "1"
