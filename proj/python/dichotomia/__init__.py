"""Python wrapper over the native module: parsed-JSON convenience calls.

Each ``*_json`` native function returns the exact report text the
command-line tool writes; the wrappers here parse it into dictionaries.
"""

import json

import _dichotomia

schema_version = _dichotomia.schema_version


def spectrum(config_path, threads=0):
    """Spectral intervals of scales for the configured system."""
    return json.loads(_dichotomia.spectrum_json(str(config_path), threads))


def spectrum_text(config_path, threads=0):
    """Raw spectrum report text (byte-deterministic for a fixed config)."""
    return _dichotomia.spectrum_json(str(config_path), threads)


def gap_check(config_path, threads=0):
    """Spectrum plus the spectral-gap inequality report."""
    return json.loads(_dichotomia.gap_check_json(str(config_path), threads))


def verify(config_path, samples=300, seed=0, threads=0):
    """Invariant/property suite report for the configured system."""
    return json.loads(
        _dichotomia.verify_json(str(config_path), samples, seed, threads)
    )


def conjugate_point(config_path, m, x):
    """Value of the linearizing conjugacy h_m at the point x."""
    return _dichotomia.conjugate_point(str(config_path), m, list(x))
