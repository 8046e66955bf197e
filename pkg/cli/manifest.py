"""
Run manifests for PoseLift
Provenance record written next to every command output, and the JSON-lines run log
"""

import hashlib
import json
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import pydantic
from pydantic import BaseModel, Field

from core import __version__

logger = logging.getLogger(__name__)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def artifact_versions() -> Dict[str, str]:
    return {
        "poselift": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
    }


class RunManifest(BaseModel):
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)
    versions: Dict[str, str] = Field(default_factory=artifact_versions)
    fingerprint: str = ""
    started_at: str = ""
    finished_at: str = ""

    def compute_fingerprint(self) -> str:
        """SHA-256 over command, resolved config and input hashes; timestamps are left out"""
        payload = json.dumps(
            {"command": self.command, "config": self.config, "seed": self.seed, "inputs": self.inputs},
            sort_keys=True,
            default=str,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def add_input(self, path):
        self.inputs[str(path)] = file_sha256(path)

    def finish(self) -> "RunManifest":
        self.fingerprint = self.compute_fingerprint()
        self.finished_at = utc_now()
        return self

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"Wrote manifest {path}")
        return path


def manifest_path_for(output) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def append_run_log(log_dir, command: str, exit_code: int, manifest: Optional[RunManifest] = None):
    """One JSON line per CLI invocation"""
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    entry = {
        "timestamp": utc_now(),
        "command": command,
        "exit_code": exit_code,
        "fingerprint": manifest.fingerprint if manifest else None,
        "outputs": manifest.outputs if manifest else [],
    }
    try:
        with open(log_dir / "runs.jsonl", "a", encoding="utf-8") as f:
            f.write(json.dumps(entry) + "\n")
    except OSError as e:
        logger.warning(f"Failed to append to run log: {e}")
