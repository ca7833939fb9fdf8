"""CSV serialization with atomic writes and lossless float formatting."""

from __future__ import annotations

import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

from .simcore import Trajectory

TRAJECTORY_HEADER = "t,y,u,u_nom,z"


def format_float(x: float) -> str:
    """17 significant digits; round-trips any double exactly."""
    return "%.17g" % x


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_trajectory_csv(traj: Trajectory, path: str) -> None:
    lines = [TRAJECTORY_HEADER]
    for i in range(traj.n_samples):
        lines.append(
            ",".join(
                format_float(col[i])
                for col in (traj.t, traj.y, traj.u, traj.u_nom, traj.z)
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trajectory_csv(path: str) -> dict[str, np.ndarray]:
    with open(path, "r") as f:
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    if data.size == 0:
        return {name: np.empty(0) for name in header}
    return {name: data[:, i] for i, name in enumerate(header)}
