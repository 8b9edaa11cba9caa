"""Command line front end of hetcon."""
