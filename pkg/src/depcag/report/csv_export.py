"""
Filename: csv_export.py
Description:
    Trajectory export as CSV: header row `t,x_1,...,x_n`, one row per mesh
    node, floats written with repr so that values round-trip exactly.

License: Apache 2.0
"""
import csv
import io
from pathlib import Path
from typing import Optional

from ..engine.dynamics import Trajectory
from ..engine.error import DomainError
from ..utils.log import setup_logger
from .store import atomic_write_text

logger = setup_logger("depcag.store")


def trajectory_csv(traj: Trajectory, member: int = 0) -> str:
    """
    CSV text of one member of a (possibly batched) trajectory.

    :raises DomainError: member outside the batch
    """
    if not 0 <= member < traj.batch:
        raise DomainError(f"batch member {member} outside [0, {traj.batch})")
    ts, xs = traj.samples()
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t"] + [f"x_{i + 1}" for i in range(traj.dim)])
    for t, x in zip(ts, xs[member]):
        writer.writerow([repr(float(t))] + [repr(float(v)) for v in x])
    return buf.getvalue()


def export_trajectory(traj: Trajectory, out_path: Optional[Path] = None, member: int = 0) -> str:
    """
    Write the trajectory CSV to out_path, or just return it when out_path is None.

    :return: the CSV text
    """
    text = trajectory_csv(traj, member)
    if out_path is not None:
        atomic_write_text(Path(out_path), text)
        logger.info(f"Trajectory exported: rows={len(text.splitlines()) - 1} -> {out_path}")
    return text
