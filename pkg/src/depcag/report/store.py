"""
Filename: store.py
Description:
    JSON persistence for run records. Records are rendered with sorted keys
    and fixed indentation, so identical runs produce identical bytes, and
    written through a temporary file so a reader never sees half a report.

License: Apache 2.0
"""
import json
import os
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from ..config import config
from ..model.reports import ReportType, RunRecord
from ..utils.log import setup_logger

logger = setup_logger("depcag.store")


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, newline="")
    os.replace(tmp, path)


def render(record: RunRecord) -> str:
    """Canonical JSON text of a record."""
    return json.dumps(record.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


class ReportStore:
    """Saves and loads run records.

    A bare file name (``report.json``) resolves under results_dir; any path
    with a directory part is used as given.
    """

    def __init__(self, results_dir: Optional[Path] = None):
        self.results_dir = Path(results_dir or config.results_dir)

    def resolve(self, out: Path) -> Path:
        out = Path(out)
        if out.is_absolute() or out.parent != Path("."):
            return out
        return self.results_dir / out

    def save(self, record: RunRecord, out: Path) -> Path:
        path = self.resolve(out)
        atomic_write_text(path, render(record))
        logger.info(f"Report saved: command={record.command} type={record.report.report_type.value} -> {path}")
        return path

    def load(self, out: Path) -> Optional[RunRecord]:
        path = self.resolve(out)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Failed to read report file {path}: {e}")
            return None
        report_type = data.get("report", {}).get("report_type")
        try:
            ReportType(report_type)
        except ValueError:
            logger.error(f"Unknown report_type in {path}: {report_type!r}")
            return None
        try:
            return RunRecord.model_validate(data)
        except ValidationError as e:
            logger.error(f"Malformed report in {path}: {e.errors()[0]['msg']}")
            return None
