"""File writers: diagnostics CSV, plain-text snapshots and legacy VTK."""
import os

import numpy as np

from .diagnostics import ROW_COLUMNS


def format_value(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def format_row(row, columns=ROW_COLUMNS):
    return ",".join(format_value(row[c]) for c in columns)


class CsvWriter:
    """Streams rows to ``path`` and flushes after each one, so a crash keeps every emitted row."""

    def __init__(self, path, columns=ROW_COLUMNS):
        self.columns = tuple(columns)
        self._fh = open(path, "w", newline="")
        self._fh.write(",".join(self.columns) + "\n")
        self._fh.flush()

    def write(self, row):
        self._fh.write(format_row(row, self.columns) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path):
    """Read a file written by :class:`CsvWriter` into a dict of float arrays."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(header)}


def write_snapshot(path, mesh, u, w):
    """One line ``x y z u w rho`` per vertex."""
    table = np.column_stack([mesh.vertices, u, w, mesh.rho])
    np.savetxt(path, table, fmt="%.17g")


def write_vtk(path, mesh, u, w, title="evosurf-ch snapshot"):
    """Legacy ASCII VTK polydata with point fields ``u``, ``w`` and ``rho``."""
    nv, nt = mesh.n_vertices, mesh.n_triangles
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {nv} double\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        fh.write(f"POLYGONS {nt} {4 * nt}\n")
        np.savetxt(fh, np.column_stack([np.full(nt, 3), mesh.triangles]), fmt="%d")
        fh.write(f"POINT_DATA {nv}\n")
        for name, values in (("u", u), ("w", w), ("rho", mesh.rho)):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, np.asarray(values), fmt="%.17g")


def snapshot_path(directory, index, ext="txt"):
    return os.path.join(directory, f"snapshot_{index:05d}.{ext}")
