import hashlib
import json
import logging
import platform
import time
from importlib import metadata
from pathlib import Path

from grid.io import atomic_write_text, frame_to_csv_text

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
RUN_LOG = "run.log"
SWEEP_LOG = "sweep_log.csv"
# written while the run is in progress, left out of the reproducibility hash
UNHASHED_FILES = {RUN_LOG, SWEEP_LOG, MANIFEST}
PACKAGES = ("numpy", "scipy", "pandas", "networkx", "pulp", "pyyaml", "matplotlib", "seaborn", "tabulate")


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions(packages=PACKAGES):
    versions = {"python": platform.python_version()}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


class ResultBundle:
    """
    Output directory of one CLI run.

    Every artifact goes through ``write_*`` (write to a temporary file, then
    rename) so a failed run never leaves a half-written file. ``finalize``
    writes the manifest: sha256 of every file, the bundle hash over the
    reproducible ones, seed, config hash, package versions and wall clock.
    """

    def __init__(self, out_dir, command, seed=None, config_hash=None):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.seed = seed
        self.config_hash = config_hash
        self.files = []
        self._start = time.perf_counter()

    def path(self, name):
        return self.out_dir / name

    def _record(self, name):
        if name not in self.files:
            self.files.append(name)
        return self.path(name)

    def write_text(self, name, text):
        self.path(name).parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(self.path(name), text)
        logger.debug("Wrote %s", self.path(name))
        return self._record(name)

    def write_frame(self, name, df):
        return self.write_text(name, frame_to_csv_text(df))

    def write_json(self, name, data):
        return self.write_text(name, json.dumps(data, sort_keys=True, indent=2) + "\n")

    def attach(self, name):
        """Register a file written by someone else (run log, sweep log)."""
        if not self.path(name).exists():
            raise FileNotFoundError(self.path(name))
        return self._record(name)

    def file_hashes(self):
        return {name: sha256_file(self.path(name)) for name in sorted(self.files) if self.path(name).exists()}

    def bundle_hash(self, hashes=None):
        hashes = self.file_hashes() if hashes is None else hashes
        digest = hashlib.sha256()
        for name in sorted(hashes):
            if name in UNHASHED_FILES:
                continue
            digest.update(f"{name}\0{hashes[name]}\n".encode())
        return digest.hexdigest()

    def manifest(self):
        hashes = self.file_hashes()
        return {
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "bundle_hash": self.bundle_hash(hashes),
            "files": hashes,
            "versions": package_versions(),
            "wall_clock_seconds": round(time.perf_counter() - self._start, 3),
        }

    def finalize(self):
        if self.path(RUN_LOG).exists():
            self.attach(RUN_LOG)
        manifest = self.manifest()
        self.write_json(MANIFEST, manifest)
        logger.info("Results in %s (bundle %s)", self.out_dir, manifest["bundle_hash"][:12])
        return manifest
