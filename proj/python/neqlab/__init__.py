"""Pilot-wave relaxation, hidden-variable and collapse-model experiments.

Thin wrapper over the compiled ``_neqlab`` module: manifests and summaries
are plain dicts here and JSON text on the C++ side.
"""

import json
from pathlib import Path

from ._neqlab import (
    NumericalError,
    ValidationError,
    __version__,
    clump_predictions,
    collapse_frequencies,
    gambler_ruin,
    h_function,
    interference_verdict,
    list_experiments,
    nucleon_heating_ev_per_s,
    sha256_file,
    singlet_correlation,
    tau_estimate,
    transmission_curve,
)
from . import _neqlab

__all__ = [
    "NumericalError",
    "ValidationError",
    "__version__",
    "clump_predictions",
    "collapse_frequencies",
    "gambler_ruin",
    "h_function",
    "interference_verdict",
    "list_experiments",
    "load_manifest",
    "nucleon_heating_ev_per_s",
    "run_manifest",
    "sha256_file",
    "singlet_correlation",
    "tau_estimate",
    "transmission_curve",
    "validate_manifest",
]


def load_manifest(path):
    return json.loads(Path(path).read_text())


def validate_manifest(manifest):
    """List of (field, reason) pairs; empty when the manifest is valid."""
    return _neqlab.validate_manifest(json.dumps(manifest))


def run_manifest(manifest, seed=None, output=None, threads=0):
    """Runs a manifest dict and returns its run record with parsed summary and manifest."""
    rec = _neqlab.run_manifest(json.dumps(manifest), seed, None if output is None else Path(output), threads)
    rec["summary"] = json.loads(rec["summary"])
    rec["manifest"] = json.loads(rec["manifest"])
    return rec
