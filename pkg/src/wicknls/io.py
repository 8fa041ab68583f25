"""Output files.  Every artifact carries the config hash; timestamps live only in ``metadata.json``."""
from __future__ import annotations

import csv
import json
import os
import platform
import shutil
import tempfile
import time
from contextlib import contextmanager

import numpy as np

from .exceptions import HashMismatchError

HASH_PREFIX = "# config_hash="


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def write_csv(path, rows, columns, config_hash):
    """CSV with a leading ``# config_hash=`` line and shortest round-trip floats."""
    with open(path, "w", newline="") as fh:
        fh.write(f"{HASH_PREFIX}{config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_csv(path):
    """Returns ``(config_hash, list of dict rows)``."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(HASH_PREFIX):
            raise ValueError(f"{path}: missing config hash line")
        rows = list(csv.DictReader(fh))
    return first[len(HASH_PREFIX):].strip(), rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, obj, config_hash):
    data = {"config_hash": config_hash, **_jsonable(obj)}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_field_records(path, records, config_hash):
    """JSONL of ``(t, field record)`` checkpoints."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({"config_hash": config_hash, **_jsonable(rec)}, separators=(",", ":")) + "\n")


def file_hash(path):
    if path.endswith(".csv"):
        return read_csv(path)[0]
    if path.endswith(".jsonl"):
        with open(path) as fh:
            line = fh.readline()
        return json.loads(line)["config_hash"] if line.strip() else None
    with open(path) as fh:
        return json.load(fh).get("config_hash")


def check_same_hash(paths):
    """Refuse to aggregate outputs produced by different configurations."""
    hashes = {p: file_hash(str(p)) for p in paths}
    distinct = {h for h in hashes.values() if h is not None}
    if len(distinct) > 1:
        raise HashMismatchError(f"outputs come from different configs: {hashes}")
    return distinct.pop() if distinct else None


def write_metadata(path, config_hash, command, elapsed):
    meta = {
        "config_hash": config_hash,
        "command": command,
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "elapsed_seconds": elapsed,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


@contextmanager
def staged_output(out_dir):
    """Write into a scratch directory and move files into ``out_dir`` only on success."""
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    os.makedirs(parent, exist_ok=True)
    scratch = tempfile.mkdtemp(prefix=".staging-", dir=parent)
    try:
        yield scratch
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    os.makedirs(out_dir, exist_ok=True)
    for name in sorted(os.listdir(scratch)):
        os.replace(os.path.join(scratch, name), os.path.join(out_dir, name))
    shutil.rmtree(scratch, ignore_errors=True)
