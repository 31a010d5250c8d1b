"""Locate shipped data files, honouring the ``POSTURE_AUDIT_HOME`` override."""
from __future__ import annotations

import os
from pathlib import Path

PACKAGE_DATA = Path(__file__).resolve().parent / "data"
HOME_ENV = "POSTURE_AUDIT_HOME"


def home() -> Path:
    """Working directory for runs, fleet state and user data files."""
    env = os.environ.get(HOME_ENV)
    if env:
        return Path(env)
    return Path.home() / ".posture_audit"


def data_path(name: str) -> Path:
    """Return ``name`` from ``$POSTURE_AUDIT_HOME/data`` if present, else the shipped copy."""
    env = os.environ.get(HOME_ENV)
    if env:
        candidate = Path(env) / "data" / name
        if candidate.exists():
            return candidate
    return PACKAGE_DATA / name
