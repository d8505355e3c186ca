"""
Run Manifest - Records what produced a set of artifacts

A manifest names the command, echoes the effective configuration, digests
every input file and stamps the toolkit version. Reports embed it without
the wall-clock duration so equal manifests give byte-identical reports;
manifest.json next to the artifacts keeps the duration.
"""

import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import Any, Dict, Optional, Union

from latentknn import __version__

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def file_digest(path: PathLike) -> str:
    """sha256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def dumps(document: Dict[str, Any]) -> str:
    """Canonical JSON used for every report"""
    return json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


class RunManifest:
    """Manifest of one command run"""

    MANIFEST_FILENAME = "manifest.json"

    def __init__(self, command: str, config: Optional[Dict[str, Any]] = None, seed: Optional[int] = None):
        self._lock = threading.Lock()
        self._data = self._default_manifest()
        self._data["command"] = command
        self._data["config"] = dict(config or {})
        self._data["seed"] = seed

    def _default_manifest(self) -> Dict:
        """Create empty manifest structure"""
        return {
            "command": "",
            "config": {},
            "input_digests": {},
            "seed": None,
            "version": __version__,
            "duration_seconds": None,
        }

    @classmethod
    def load(cls, path: PathLike) -> Optional["RunManifest"]:
        """Load a saved manifest; a missing or corrupted file gives None"""
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            logger.warning(f"Could not read manifest {path}: {e}")
            return None
        manifest = cls(data.get("command", ""))
        manifest._data.update(data)
        return manifest

    @property
    def command(self) -> str:
        return self._data["command"]

    @property
    def config(self) -> Dict[str, Any]:
        return dict(self._data["config"])

    @property
    def input_digests(self) -> Dict[str, str]:
        return dict(self._data["input_digests"])

    def add_input(self, label: str, path: PathLike):
        """Record the digest of an input file under a stable label"""
        with self._lock:
            self._data["input_digests"][label] = file_digest(path)

    def set_duration(self, seconds: float):
        with self._lock:
            self._data["duration_seconds"] = round(seconds, 6)

    def embedded(self) -> Dict[str, Any]:
        """Manifest as embedded in reports: everything except timing"""
        with self._lock:
            data = json.loads(json.dumps(self._data))
        data.pop("duration_seconds", None)
        return data

    def to_dict(self) -> Dict[str, Any]:
        with self._lock:
            return json.loads(json.dumps(self._data))

    def same_run(self, other: "RunManifest") -> bool:
        return self.embedded() == other.embedded()

    def save(self, out_dir: PathLike):
        """Write manifest.json into out_dir"""
        out_dir = Path(out_dir)
        with self._lock:
            try:
                out_dir.mkdir(parents=True, exist_ok=True)
                with open(out_dir / self.MANIFEST_FILENAME, "w", encoding="utf-8") as f:
                    f.write(json.dumps(self._data, indent=2, sort_keys=True, ensure_ascii=False))
                    f.write("\n")
            except (IOError, OSError, PermissionError) as e:
                logger.warning(f"Failed to save manifest: {e}")

    def report(self, body: Dict[str, Any]) -> str:
        """Serialize a report with this manifest embedded"""
        document = dict(body)
        document["manifest"] = self.embedded()
        return dumps(document)
