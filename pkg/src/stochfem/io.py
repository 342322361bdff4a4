"""Snapshot, table and manifest writers."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def _fmt(x):
    return format(float(x), ".10g")


def write_vtk(path, mesh, fields, title="stochfem snapshot"):
    """Legacy ASCII VTK polydata: POINTS, triangle POLYGONS, POINT_DATA scalars."""
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET POLYDATA",
             f"POINTS {mesh.n_nodes} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes]
    nt = mesh.n_triangles
    lines.append(f"POLYGONS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    if fields:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (mesh.n_nodes,):
                raise ValueError(f"field {name!r} has shape {values.shape}, "
                                 f"expected ({mesh.n_nodes},)")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in values]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_point_data(path):
    """Parse the POINT_DATA scalars back from a file written by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    out, i = {}, 0
    n = None
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("POINT_DATA"):
            n = int(line.split()[1])
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            out[name] = np.array([float(v) for v in tokens[i + 2:i + 2 + n]])
            i += 1 + n
        i += 1
    return out


def write_nodal_csv(path, mesh, fields):
    path = Path(path)
    names = list(fields)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", *names])
        cols = [np.asarray(fields[k], dtype=float) for k in names]
        for i, (x, y) in enumerate(mesh.nodes):
            w.writerow([_fmt(x), _fmt(y), *(_fmt(c[i]) for c in cols)])
    return path


def write_table(path, header, rows):
    """CSV with fixed float formatting so reruns are byte-identical."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v
                        for v in row])
    return path


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files, meta=None):
    """``manifest.json`` listing every produced file with its sha256."""
    out_dir = Path(out_dir)
    entries = [{"path": str(Path(f).resolve().relative_to(out_dir.resolve())),
                "sha256": sha256(f), "bytes": Path(f).stat().st_size}
               for f in sorted(map(str, files))]
    doc = {"files": entries}
    if meta:
        doc["meta"] = meta
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
