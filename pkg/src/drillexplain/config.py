"""Run configuration files and reproducibility manifests.

One YAML file holds per-command sections; command-line flags override file
values.  Every command writes a RunManifest next to its primary output with
everything needed to reproduce the run: the resolved options and their
hash, seeds, input/output paths, and artifact versions.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from . import __version__
from ._kernels import BACKEND
from .errors import ConfigError


def load_config(path: str | Path | None) -> dict:
    """Whole config document; None means no file (empty sections)."""
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {p}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping of command sections")
    return doc


def command_options(doc: dict, command: str, overrides: dict) -> dict:
    """File section for one command with non-None flag overrides applied."""
    section = doc.get(command, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section '{command}' must be a mapping")
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def config_hash(options: dict) -> str:
    """Stable short hash of resolved options."""
    blob = json.dumps(options, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunManifest:
    """Everything needed to rerun one command and get the same bytes."""

    command: str
    options: dict
    options_hash: str
    seeds: dict
    inputs: list[str]
    outputs: list[str]
    wall_seconds: float
    versions: dict = field(default_factory=lambda: {
        "package": __version__, "kernel_backend": BACKEND})

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


class ManifestTimer:
    """Collects a command's manifest while timing it."""

    def __init__(self, command: str, options: dict):
        self.command = command
        self.options = options
        self.seeds: dict = {}
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self._t0 = time.time()

    def done(self, primary_output: str | Path) -> RunManifest:
        manifest = RunManifest(
            command=self.command,
            options=self.options,
            options_hash=config_hash(self.options),
            seeds=self.seeds,
            inputs=sorted(self.inputs),
            outputs=sorted(self.outputs),
            wall_seconds=time.time() - self._t0,
        )
        manifest.save(Path(str(primary_output) + ".manifest.json"))
        return manifest
