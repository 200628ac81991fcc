"""PUMA: active-inference counselor agent and dynamic client simulator.

Distributions are plain lists of floats; configs and metrics are dicts.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable, Optional

from ._puma import (
    PumaError,
    bayes_update,
    default_data_dir,
    entropy,
    free_energy,
    fuse,
    kl_divergence,
    log_evidence,
    normalize,
    widen,
    width_alpha,
)
from . import _puma

__all__ = [
    "PumaError",
    "bayes_update",
    "constants",
    "default_config",
    "default_data_dir",
    "dynamic_metrics",
    "entropy",
    "free_energy",
    "fuse",
    "kl_divergence",
    "log_evidence",
    "normalize",
    "resolve_config",
    "run_checks",
    "run_dynamic",
    "widen",
    "width_alpha",
]


def default_config() -> dict:
    return json.loads(_puma._default_config())


def constants() -> dict:
    return json.loads(_puma._constants())


def resolve_config(overrides: Optional[dict] = None) -> dict:
    """Defaults with `overrides` merged on top; raises PumaError on bad values or unknown keys."""
    return json.loads(_puma._resolve_config(json.dumps(overrides or {})))


def run_checks(seed: int = 42) -> list[dict]:
    return _puma._run_checks(seed)


def run_dynamic(
    counselor: str = "puma",
    config: Optional[dict] = None,
    data_dir: Optional[os.PathLike] = None,
    out_dir: Optional[os.PathLike] = None,
    jobs: int = 1,
) -> dict:
    """Runs one session per profile. Returns {"metrics": {...}, "transcripts": [jsonl, ...]}."""
    text = _puma._run_dynamic(
        counselor,
        json.dumps(config or {}),
        Path(data_dir) if data_dir is not None else None,
        Path(out_dir) if out_dir is not None else None,
        jobs,
    )
    return json.loads(text)


def dynamic_metrics(files: Iterable[os.PathLike]) -> dict:
    return json.loads(_puma._dynamic_metrics([Path(f) for f in files]))
