"""CSV artifacts: kernel dumps, trajectories, snapshots, verification reports.

One self-describing schema for gridded kernels (kernel name, 1-based
indices, node coordinates, value; functions of x alone leave xi empty).
All floats are written with shortest round-trip formatting, and writers
are deterministic so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

__all__ = [
    "render_kernel_csv",
    "render_axis_csv",
    "render_trajectory_csv",
    "render_snapshots_csv",
    "write_text",
    "load_kernel_csv",
]


def _fmt(x: float) -> str:
    return repr(float(x))


def render_kernel_csv(name: str, field: np.ndarray, axis: np.ndarray) -> str:
    """Triangle fields (r, c, Nx, Nx) -> one record per stored node."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["kernel", "i", "j", "x", "xi", "value"])
    r, c, nx, _ = field.shape
    tri_a, tri_b = np.tril_indices(nx)
    for i in range(r):
        for j in range(c):
            vals = field[i, j][tri_a, tri_b]
            for a, b, v in zip(tri_a, tri_b, vals):
                w.writerow([name, i + 1, j + 1, _fmt(axis[a]), _fmt(axis[b]), _fmt(v)])
    return out.getvalue()


def render_axis_csv(names_fields: list, axis: np.ndarray) -> str:
    """Functions of x: list of (name, array (r, c, Nx)); xi left empty."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["kernel", "i", "j", "x", "xi", "value"])
    for name, field in names_fields:
        r, c, nx = field.shape
        for i in range(r):
            for j in range(c):
                for a in range(nx):
                    w.writerow([name, i + 1, j + 1, _fmt(axis[a]), "", _fmt(field[i, j, a])])
    return out.getvalue()


def render_trajectory_csv(traj, m: int) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "l2", "V"] + [f"U_{k + 1}" for k in range(m)])
    lyap = traj.lyapunov
    for k, t in enumerate(traj.times):
        vcell = "" if lyap is None else _fmt(lyap[k])
        w.writerow([_fmt(t), _fmt(traj.l2[k]), vcell] + [_fmt(u) for u in traj.control[k]])
    return out.getvalue()


def render_snapshots_csv(snapshots: dict, n: int, m: int, xs: np.ndarray) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "x"] + [f"u_{k + 1}" for k in range(n)] + [f"v_{k + 1}" for k in range(m)])
    for t in sorted(snapshots):
        st = snapshots[t]
        for c, xc in enumerate(xs):
            w.writerow(
                [_fmt(st.t), _fmt(xc)]
                + [_fmt(st.u[k, c]) for k in range(n)]
                + [_fmt(st.v[k, c]) for k in range(m)]
            )
    return out.getvalue()


def write_text(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8", newline="")


def load_kernel_csv(path: Path) -> dict:
    """Records grouped by (kernel, i, j) as lists of (x, xi-or-None, value)."""
    groups: dict = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "kernel" not in reader.fieldnames:
            raise ValueError(f"{path}: not a kernel dump (missing header)")
        for row in reader:
            key = (row["kernel"], int(row["i"]), int(row["j"]))
            xi = None if row["xi"] == "" else float(row["xi"])
            groups.setdefault(key, []).append((float(row["x"]), xi, float(row["value"])))
    return groups
