"""Consensus certificates for heterogeneous networks of LTI systems."""

from __future__ import annotations


def version() -> str:
    """Return the installed hetcon version.

    :return: the distribution version or "unknown" when hetcon is used
        from a source tree without being installed
    """
    from importlib.metadata import PackageNotFoundError
    from importlib.metadata import version as dist_version

    try:
        return dist_version("hetcon")
    except PackageNotFoundError:
        return "unknown"
