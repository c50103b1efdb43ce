"""Deterministic writers for CSV, NDJSON and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv(path: Path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# schema={SCHEMA_VERSION}"])
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: Path):
    """Return (header, rows) skipping the schema comment line."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("# schema")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, list(reader)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_ndjson(path: Path, records) -> Path:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    return path


def read_ndjson(path: Path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, header: dict, files) -> Path:
    """First line describes the run; one line per output with its checksum."""
    records = [dict(kind="run", **header)]
    for f in sorted(files, key=lambda p: str(p)):
        f = Path(f)
        records.append(
            dict(kind="file", path=f.name, sha256=sha256(f), bytes=f.stat().st_size)
        )
    return write_ndjson(out_dir / "manifest.ndjson", records)


def verify_manifest(out_dir: Path) -> list[str]:
    """Names of listed files whose checksum no longer matches (empty means intact)."""
    bad = []
    for rec in read_ndjson(Path(out_dir) / "manifest.ndjson"):
        if rec.get("kind") != "file":
            continue
        p = Path(out_dir) / rec["path"]
        if not p.exists() or sha256(p) != rec["sha256"]:
            bad.append(rec["path"])
    return bad
