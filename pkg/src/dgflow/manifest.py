"""Run manifests: every CLI command records what it read, wrote and measured.

The manifest lists each output file with its sha256 so a later
`verify-manifest` can prove the artifacts are the ones the run produced.
"""

import hashlib
import json
import os
import time

from dgflow.errors import VerificationError

MANIFEST_NAME = "manifest.json"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class RunManifest:
    def __init__(self, command, config, seeds=None):
        self.doc = {
            "command": command,
            "config": config,
            "seeds": seeds or {},
            "inputs": {},
            "outputs": [],
            "metrics": {},
            "timings": {},
        }
        self._t0 = time.perf_counter()

    def add_input(self, label, path):
        self.doc["inputs"][label] = {"path": str(path), "sha256": sha256_file(path)}

    def add_output(self, path, rel_to=None):
        rel = os.path.relpath(str(path), rel_to) if rel_to else os.path.basename(str(path))
        self.doc["outputs"].append({
            "path": rel,
            "sha256": sha256_file(path),
            "bytes": os.path.getsize(path),
        })

    def add_metrics(self, metrics):
        self.doc["metrics"].update(metrics)

    def add_timing(self, label, seconds):
        self.doc["timings"][label] = seconds

    def write(self, out_dir):
        self.doc["timings"]["total_s"] = time.perf_counter() - self._t0
        path = os.path.join(out_dir, MANIFEST_NAME)
        with open(path, "w") as fh:
            json.dump(self.doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def verify_manifest(path):
    """Re-hash every recorded output; raises VerificationError on mismatch."""
    with open(path) as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    problems = []
    for entry in doc.get("outputs", []):
        target = os.path.join(base, entry["path"])
        if not os.path.exists(target):
            problems.append(f"missing output {entry['path']}")
            continue
        digest = sha256_file(target)
        if digest != entry["sha256"]:
            problems.append(
                f"hash mismatch for {entry['path']}: recorded {entry['sha256'][:12]}..., "
                f"found {digest[:12]}..."
            )
    if problems:
        raise VerificationError("; ".join(problems))
    return len(doc.get("outputs", []))
