import json
import logging
from pathlib import Path

import uvicorn.logging

from src.conf.config import settings
from src.schemas.schemas import Report

logger = logging.getLogger(uvicorn.logging.__name__)

SCHEMA_PATH = Path(__file__).resolve().parents[1] / "schemas" / "report.schema.json"


class ReportRepository:
    """
    Stores reports as JSON files validated by the Report model, and publishes the model's JSON schema.
    """

    def __init__(self, directory: Path | None = None) -> None:
        self.directory = directory

    def resolve(self, path: Path | str | None, command: str) -> Path:
        if path is not None:
            return Path(path)
        return Path(self.directory or settings.reports_dir) / f"{command}.json"

    def save(self, report: Report, path: Path | str | None = None) -> Path:
        """
        Write a report.

        Args:
            report: validated report.
            path: target file; defaults to <reports_dir>/<command>.json.
        Returns:
            Path: the written file.
        """
        target = self.resolve(path, report.command)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"Report written to {target}")
        return target

    def load(self, path: Path | str) -> Report:
        return Report.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def schema(self) -> dict:
        return Report.model_json_schema()

    def published_schema(self) -> dict:
        """Schema committed next to the models, the contract external tools validate against."""
        return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))

    def write_schema(self, path: Path | str) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(self.schema(), indent=2), encoding="utf-8")
        return target


report_repository = ReportRepository()
