"""CSV run logs and legacy-ASCII VTK snapshots."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .analysis import RECORD_COLUMNS, deformation_surface
from .errors import RaftFEMError


class OutputError(RaftFEMError, OSError):
    pass


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv_log(records, path) -> Path:
    """One header row in ``RECORD_COLUMNS`` order and one row per record."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RECORD_COLUMNS)
            for rec in records:
                row = rec.row() if hasattr(rec, "row") else rec
                w.writerow([_fmt(row[c]) for c in RECORD_COLUMNS])
    except OSError as exc:
        raise OutputError(f"cannot write log {path}: {exc.strerror or exc}") from exc
    return path


class CSVLogger:
    """Streaming variant of :func:`write_csv_log`, one flushed row per record."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("w", newline="")
        except OSError as exc:
            raise OutputError(f"cannot write log {self.path}: {exc.strerror or exc}") from exc
        self._w = csv.writer(self._fh)
        self._w.writerow(RECORD_COLUMNS)

    def write(self, rec):
        row = rec.row()
        self._w.writerow([_fmt(row[c]) for c in RECORD_COLUMNS])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv_log(path) -> list:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_vtk_snapshot(path, mesh, phi, u, rho_vis: float = 1.0, title: str = "membrane") -> Path:
    """Unstructured grid on the deformed surface with point data ``phi`` and ``u``."""
    path = Path(path)
    x = deformation_surface(mesh, u, rho_vis)
    tri = mesh.triangles
    n, f = len(x), len(tri)
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    lines += [" ".join(repr(float(c)) for c in p) for p in x]
    lines.append(f"CELLS {f} {4 * f}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tri]
    lines.append(f"CELL_TYPES {f}")
    lines += ["5"] * f
    lines.append(f"POINT_DATA {n}")
    for name, arr in (("phi", phi), ("u", u)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in np.asarray(arr, dtype=float)]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write snapshot {path}: {exc.strerror or exc}") from exc
    return path


def read_vtk(path) -> dict:
    """Parse a file written by :func:`write_vtk_snapshot`.

    Returns ``points``, ``triangles`` and the point-data arrays by name.
    """
    path = Path(path)
    try:
        tokens = path.read_text().split("\n")
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    out = {"point_data": {}}
    i = 0
    while i < len(tokens):
        line = tokens[i].strip()
        head = line.split()
        if not head:
            i += 1
            continue
        if head[0] == "POINTS":
            n = int(head[1])
            out["points"] = np.array([[float(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif head[0] == "CELLS":
            f = int(head[1])
            out["triangles"] = np.array([[int(v) for v in tokens[i + 1 + k].split()[1:]] for k in range(f)])
            i += f + 1
        elif head[0] == "SCALARS":
            name = head[1]
            n = len(out["points"])
            out["point_data"][name] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += n + 2
        else:
            i += 1
    if "points" not in out or "triangles" not in out:
        raise OutputError(f"{path} is not an unstructured-grid snapshot")
    return out
