"""Shared error base so the CLI can map failures onto its exit-code table."""


class PhysiortError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 7
