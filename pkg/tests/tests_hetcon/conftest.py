# type: ignore
import json
import os
import shutil
import tempfile

from hetcon.config import Config

import pytest


@pytest.fixture(autouse=True)
def env_protect(request):
    """Protection against environment change.

    The fixture is enabled for all tests and does the following:

    * store/restore env between each tests
    * create a temporary directory and do a cd to it before each
      test. The directory is automatically removed when test ends
    """
    saved_env = dict(os.environ)
    saved_cwd = os.getcwd()
    tempd = tempfile.mkdtemp()
    os.chdir(tempd)
    Config.data = {}

    def restore_env():
        os.chdir(saved_cwd)
        os.environ.clear()
        os.environ.update(saved_env)
        Config.data = {}
        shutil.rmtree(tempd, ignore_errors=True)

    request.addfinalizer(restore_env)


@pytest.fixture
def write_config():
    """Return a function writing a network description in the current dir."""

    def write(data, filename="net.json"):
        with open(filename, "w") as fd:
            if isinstance(data, str):
                fd.write(data)
            else:
                json.dump(data, fd)
        return filename

    return write
