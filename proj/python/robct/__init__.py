"""Robotic sample holder CT: trajectory planning, detector simulation,
fiducial calibration and iterative reconstruction."""

import json as _json
from pathlib import Path as _Path

from . import _robct
from ._robct import (
    RobctError,
    canonical_json,
    forward_project,
    npix,
    phantom_volume,
    pixel_center,
    pixel_index,
    read_volume,
    set_thread_count,
    sha256_hex,
    waypoints,
    write_volume,
)

__all__ = [
    "RobctError",
    "canonical_json",
    "forward_project",
    "load_config",
    "npix",
    "phantom_volume",
    "pixel_center",
    "pixel_index",
    "read_volume",
    "report",
    "run",
    "set_thread_count",
    "sha256_hex",
    "waypoints",
    "write_volume",
]

STAGES = ("plan", "execute", "measure", "calibrate", "reconstruct")


def _config_text(config):
    if isinstance(config, (str, _Path)) and _Path(config).is_file():
        return _Path(config).read_text()
    if isinstance(config, dict):
        return _json.dumps(config)
    raise TypeError("config must be a dict or a path to a JSON file")


def load_config(config):
    """Validated config dict with every default filled in."""
    return _json.loads(_robct.normalize_config(_config_text(config)))


def run(stage, config, out, compare=None):
    """Runs one pipeline stage in the run directory `out` and returns its summary."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    text = _config_text(config)
    out = _Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if stage == "reconstruct":
        return _robct.run_reconstruct(text, out, None if compare is None else _Path(compare))
    return getattr(_robct, f"run_{stage}")(text, out)


def report(out):
    """Table rows for whatever stages have run in `out`."""
    return _robct.run_report(_Path(out))
