"""Validates sample configs and resolved CLI configs against the shipped schema."""
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

root = pathlib.Path(sys.argv[1])
cli = sys.argv[2]
validator = jsonschema.Draft202012Validator(json.loads((root / "schemas/config.schema.json").read_text()))
failures = 0
with tempfile.TemporaryDirectory() as tmp:
    for cfg in sorted((root / "configs").glob("*.json")):
        docs = [(cfg.name, json.loads(cfg.read_text()))]
        out = pathlib.Path(tmp) / cfg.stem
        if subprocess.run([cli, "spectrum", "-c", str(cfg), "-o", str(out)], capture_output=True).returncode == 0:
            docs.append((cfg.name + " (resolved)", json.loads((out / "config.resolved.json").read_text())))
        for name, doc in docs:
            errors = [e.message for e in validator.iter_errors(doc)]
            failures += bool(errors)
            print(name, "ok" if not errors else errors)
sys.exit(1 if failures else 0)
