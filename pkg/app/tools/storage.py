import csv
import json
import logging
import os
import platform
import shutil
from datetime import datetime, timezone
from importlib import metadata
from typing import Any, Dict, Iterable, List, Optional

from app.config import RunConfig, save_config
from app.envgen.demonstration import Demonstration
from app.errors import ConfigurationError
from app.sim.world import World

logger = logging.getLogger(__name__)

TRACKED_PACKAGES = ("numpy", "scipy", "matplotlib", "pydantic", "langgraph", "python-dotenv")


class ArtifactStore:
    """Output directory manager for worlds, demonstrations, checkpoints, CSVs and manifests."""

    def __init__(self, root: Optional[str] = None):
        """Initialize the output root from the argument or the RPF_OUT environment variable."""
        self.root = root or os.getenv("RPF_OUT", "runs/default")

    def open(self) -> "ArtifactStore":
        try:
            os.makedirs(self.root, exist_ok=True)
        except OSError as e:
            logger.error(f"Cannot create output directory {self.root}: {e}")
            raise ConfigurationError(f"output directory {self.root} is not writable: {str(e)}") from e
        return self

    def path(self, *parts: str) -> str:
        full = os.path.join(self.root, *parts)
        os.makedirs(os.path.dirname(full) or ".", exist_ok=True)
        return full

    def exists(self, *parts: str) -> bool:
        return os.path.exists(os.path.join(self.root, *parts))

    # plain files

    def write_text(self, name: str, text: str) -> str:
        target = self.path(name)
        with open(target, "w", encoding="utf-8") as f:
            f.write(text)
        return target

    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, fieldnames: List[str], rows: Iterable[Dict[str, Any]]) -> str:
        target = self.path(name)
        with open(target, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _cell(row.get(k, "")) for k in fieldnames})
        logger.info(f"Wrote {target}")
        return target

    def append_csv(self, name: str, fieldnames: List[str], row: Dict[str, Any]) -> str:
        """Append one row, writing the header when the file is new."""
        target = self.path(name)
        new = not os.path.exists(target)
        with open(target, "a", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
            if new:
                writer.writeheader()
            writer.writerow({k: _cell(row.get(k, "")) for k in fieldnames})
        return target

    # domain artifacts

    def save_world(self, world: World, name: str = "world.json") -> str:
        return self.write_text(name, world.to_json() + "\n")

    def load_world(self, name: str) -> World:
        with open(os.path.join(self.root, name), "r", encoding="utf-8") as f:
            return World.from_dict(json.load(f))

    def save_demonstration(self, demo: Demonstration, name: str = "demo.jsonl") -> str:
        return self.write_text(name, demo.to_jsonl())

    def write_manifest(self, config: RunConfig, command: str, seed: Optional[int] = None, extra: Optional[Dict[str, Any]] = None) -> str:
        """Record what produced this directory: config hash and file, seed, package versions."""
        save_config(config, self.path("config.env"))
        manifest = {
            "command": command,
            "config_hash": config.config_hash(),
            "config_file": "config.env",
            "seed": seed,
            "workers": config.workers,
            "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "python": platform.python_version(),
            "versions": package_versions(),
            **(extra or {}),
        }
        return self.write_json("manifest.json", manifest)


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return value


def package_versions() -> Dict[str, str]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "missing"
    return versions


# Global store instance
store = ArtifactStore()


def get_store() -> ArtifactStore:
    """Get the global artifact store."""
    return store


def init_store(root: Optional[str] = None) -> ArtifactStore:
    """Point the global store at ``root`` and create it. Call this once per CLI run."""
    global store
    try:
        store = ArtifactStore(root).open()
        logger.info(f"Artifact store at {store.root}")
        return store
    except Exception as e:
        logger.error(f"Failed to initialize artifact store: {e}")
        raise


class ArtifactTransaction:
    """Build a directory under a temporary name and move it into place only on success."""

    def __init__(self, store_instance: ArtifactStore, name: str):
        self.store = store_instance
        self.final = store_instance.path(name)
        self.staging = self.final + ".partial"

    def __enter__(self) -> str:
        shutil.rmtree(self.staging, ignore_errors=True)
        os.makedirs(self.staging)
        return self.staging

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            shutil.rmtree(self.staging, ignore_errors=True)
            return False
        shutil.rmtree(self.final, ignore_errors=True)
        os.replace(self.staging, self.final)
        return False
