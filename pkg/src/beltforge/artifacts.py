"""Content-addressed JSON artifact store plus the deterministic run manifest.

Artifacts are canonical JSON files named ``<kind>-<digest>.json``; the digest
of the canonical bytes is the artifact id, so identical content always maps
to the same file. Wall-clock timings go to a separate run log that is not
part of the manifest, keeping manifests byte-identical across reruns.
"""

import hashlib
import json
from pathlib import Path

from . import SCHEMA
from .errors import FormatError, StageDependencyError


def canonical_json(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"),
                      allow_nan=False).encode()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ArtifactStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def save(self, kind: str, payload: dict) -> str:
        """Persist a payload; returns its content id (digest prefix)."""
        body = dict(payload)
        body["schema"] = SCHEMA
        data = canonical_json(body)
        digest = sha256_hex(data)[:16]
        path = self.root / f"{kind}-{digest}.json"
        if not path.exists():
            path.write_bytes(data)
        return digest

    def _find(self, artifact_id: str) -> Path:
        matches = sorted(self.root.glob(f"*-{artifact_id}.json"))
        if not matches:
            raise StageDependencyError(
                f"artifact {artifact_id!r} not found in {self.root}")
        return matches[0]

    def load(self, artifact_id: str) -> dict:
        path = self._find(artifact_id)
        try:
            payload = json.loads(path.read_bytes())
        except json.JSONDecodeError as exc:
            raise FormatError(f"artifact {path.name} is not valid JSON: {exc}")
        if payload.get("schema") != SCHEMA:
            raise FormatError(
                f"artifact {path.name} carries schema {payload.get('schema')!r}, "
                f"expected {SCHEMA!r}")
        return payload

    def path_of(self, artifact_id: str) -> Path:
        return self._find(artifact_id)

    def file_hash(self, artifact_id: str) -> str:
        return sha256_hex(self._find(artifact_id).read_bytes())

    def list_ids(self, kind: str = None):
        pattern = f"{kind}-*.json" if kind else "*-*.json"
        out = []
        for p in sorted(self.root.glob(pattern)):
            if p.name in ("manifest.json", "run_log.json"):
                continue
            stem_kind, _, digest = p.stem.rpartition("-")
            out.append((stem_kind, digest))
        return out

    def find_corrections(self, base_id: str, provenances=("human", "synthetic")):
        """Corrected-path artifact ids whose base is the given path."""
        out = []
        for kind, digest in self.list_ids("corrected_path"):
            payload = self.load(digest)
            if payload.get("base_id") == base_id \
                    and payload.get("provenance") in provenances:
                out.append(digest)
        return out


class RunManifest:
    """Stage-by-stage artifact record; deterministic by construction."""

    def __init__(self, store: ArtifactStore, config_snapshot=None, master_seed=None):
        self.store = store
        self.data = {
            "kind": "manifest",
            "schema": SCHEMA,
            "master_seed": master_seed,
            "config": config_snapshot,
            "stages": [],
        }

    @classmethod
    def load_or_new(cls, store: ArtifactStore, config_snapshot=None, master_seed=None):
        path = store.root / "manifest.json"
        manifest = cls(store, config_snapshot, master_seed)
        if path.exists():
            manifest.data = json.loads(path.read_bytes())
        return manifest

    def add_stage(self, stage: str, artifacts: dict, extra_files=None):
        """Record a stage's outputs: label -> artifact id (or file name)."""
        hashes = {}
        for label, artifact_id in artifacts.items():
            hashes[artifact_id] = self.store.file_hash(artifact_id)
        for fname in (extra_files or []):
            hashes[fname] = sha256_hex((self.store.root / fname).read_bytes())
        self.data["stages"].append({
            "stage": stage,
            "artifacts": artifacts,
            "hashes": hashes,
        })

    def write(self) -> Path:
        path = self.store.root / "manifest.json"
        path.write_bytes(canonical_json(self.data))
        return path


def append_run_log(store: ArtifactStore, stage: str, seconds: float):
    """Wall-clock timings; deliberately outside the manifest."""
    path = store.root / "run_log.json"
    log = []
    if path.exists():
        log = json.loads(path.read_bytes())
    log.append({"stage": stage, "seconds": seconds})
    path.write_text(json.dumps(log, indent=1))
