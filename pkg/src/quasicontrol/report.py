"""Artifact bundles: key-value summary, CSV tables and a hashed manifest."""
import csv
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ReportBundle:
    """Everything a run writes to disk.

    ``tables`` maps a file stem to a list of row dicts; ``fields`` maps a file
    stem to a Trajectory or ControlSchedule; ``texts`` maps a file name to
    raw text (used for the resolved config).
    """

    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    texts: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def check(self, name, passed, detail=""):
        self.checks.append({"check": name, "pass": bool(passed), "detail": detail})
        return bool(passed)

    @property
    def ok(self):
        return all(c["pass"] for c in self.checks)


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def write_table(path, rows, comment=None):
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([format_value(r.get(k)) for k in keys])


def write_kv(path, data):
    with open(path, "w") as fh:
        for k in sorted(data):
            fh.write(f"{k} = {format_value(data[k])}\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def emit_report(bundle, directory):
    """Write ``bundle`` under ``directory`` and return the list of written paths.

    ``manifest.txt`` lists every other file with its sha256; no timestamps
    are written anywhere, so identical runs give identical hashes.
    """
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for name, text in sorted(bundle.texts.items()):
        p = out / name
        p.write_text(text)
        written.append(p)
    summary = dict(bundle.summary)
    summary["status"] = "pass" if bundle.ok else "fail"
    summary["checks_failed"] = sum(not c["pass"] for c in bundle.checks)
    p = out / "summary.kv"
    write_kv(p, summary)
    written.append(p)
    tables = dict(bundle.tables)
    if bundle.checks:
        tables["checks"] = bundle.checks
    for name, rows in sorted(tables.items()):
        p = out / f"{name}.csv"
        write_table(p, rows)
        written.append(p)
    for name, obj in sorted(bundle.fields.items()):
        p = out / f"{name}.csv"
        obj.to_csv(p)
        written.append(p)
    manifest = out / "manifest.txt"
    with open(manifest, "w") as fh:
        for p in sorted(written, key=lambda q: q.name):
            fh.write(f"{sha256_file(p)}  {os.path.relpath(p, out)}\n")
    written.append(manifest)
    return written
