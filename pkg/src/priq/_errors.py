"""Exception taxonomy shared across the package.

Every error that can surface at the CLI carries a short machine-parsable
category string; the CLI prints it as ``error[<category>]: <message>``.
"""

from __future__ import annotations


class PriqError(Exception):
    """Base class for package errors."""

    category = "internal"


class ManifestError(PriqError, ValueError):
    """Malformed manifest, pair file, cache, or model file."""

    category = "parse-error"


class MissingFileError(PriqError, FileNotFoundError):
    """A referenced file does not exist."""

    category = "missing-file"


class NoEligiblePairsError(PriqError, ValueError):
    """The threshold excludes every candidate pair."""

    category = "no-eligible-pairs"


class InfeasibleProtocolError(PriqError, ValueError):
    """An experiment protocol cannot be satisfied by the given manifests."""

    category = "infeasible-protocol"
