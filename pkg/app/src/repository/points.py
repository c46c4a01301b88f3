import csv
from pathlib import Path

import numpy as np

from src.entity.models import PointCloud
from src.exceptions.exceptions import RETURN_MSG, ParseError

LABEL_COLUMN = "label"


class PointsRepository:
    """
    Reads and writes point clouds as CSV: a header row, d numeric columns and an optional final `label`
    column. Floats are written with 17 significant digits so a save/load round trip is lossless.
    """

    def load_points_csv(self, path: Path | str) -> PointCloud:
        """
        Parse a point cloud.

        Args:
            path: CSV file.
        Returns:
            PointCloud: coordinates, labels when a `label` column is present, provenance = path.
        Raises:
            ParseError: empty file, ragged rows or non-numeric cells (with the 1-based line number).
        """
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if not header:
                raise ParseError(RETURN_MSG.csv_empty, line=1)
            has_labels = header[-1].strip().lower() == LABEL_COLUMN
            width = len(header)
            rows, labels = [], []
            for row in reader:
                if not row:
                    continue
                line = reader.line_num
                if len(row) != width:
                    raise ParseError(RETURN_MSG.csv_line.format(
                        line=line, detail=RETURN_MSG.csv_ragged.format(actual=len(row), expected=width)), line=line)
                try:
                    if has_labels:
                        rows.append([float(cell) for cell in row[:-1]])
                        labels.append(int(row[-1]))
                    else:
                        rows.append([float(cell) for cell in row])
                except ValueError as error:
                    bad = next((cell for cell in row if not _is_number(cell)), row[-1])
                    raise ParseError(RETURN_MSG.csv_line.format(line=line, detail=RETURN_MSG.csv_not_numeric.format(cell=bad)),
                                     line=line) from error
        if not rows:
            raise ParseError(RETURN_MSG.csv_empty, line=1)
        return PointCloud(np.array(rows), np.array(labels) if has_labels else None, provenance=str(path))

    def save_points_csv(self, cloud: PointCloud, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = [f"x{i}" for i in range(cloud.d)] + ([LABEL_COLUMN] if cloud.labels is not None else [])
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for i, row in enumerate(cloud.coordinates):
                cells = [format(value, ".17g") for value in row]
                if cloud.labels is not None:
                    cells.append(str(int(cloud.labels[i])))
                writer.writerow(cells)
        return path

    def save_labels_csv(self, labels: np.ndarray, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow([LABEL_COLUMN])
            writer.writerows([[int(label)] for label in labels])
        return path


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


points_repository = PointsRepository()
