"""report command: per-run fitness table + CSV, or the population-size summary across runs."""

import json
import logging
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from app.commands.search import CONFIG_FILE, HISTORY_FILE
from app.database import export_curves_csv, fitness_curves, get_connection, insert_history, population_summary
from app.errors import EXIT_OK, InvalidDataError
from app.models import GenerationRecord

logger = logging.getLogger(__name__)

CURVES_FILE = "fitness_curves.csv"


def read_history(path: Path) -> list[GenerationRecord]:
    try:
        lines = Path(path).read_text().splitlines()
        return [GenerationRecord.model_validate_json(line) for line in lines if line.strip()]
    except (OSError, ValidationError) as e:
        raise InvalidDataError(f"cannot read history {path}: {e}") from e


def _population_size(run_dir: Path) -> Optional[int]:
    try:
        return int(json.loads((run_dir / CONFIG_FILE).read_text())["population_size"])
    except (OSError, ValueError, KeyError) as e:
        logger.warning(f"{run_dir}: no usable config echo ({e})")
        return None


def format_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(headers)] + [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def cmd_report(history_path: Path, csv_path: Optional[Path] = None) -> int:
    history_path = Path(history_path)
    records = read_history(history_path)
    conn = get_connection()
    try:
        insert_history(conn, str(history_path), None, records)
        rows = fitness_curves(conn, str(history_path))
        print(format_table(["generation", "best", "mean", "worst", "new_evals"], rows))
        target = csv_path or history_path.parent / CURVES_FILE
        export_curves_csv(conn, str(history_path), target)
    finally:
        conn.close()
    logger.info(f"wrote fitness curves to {target}")
    return EXIT_OK


def cmd_report_across(run_dirs: Sequence[Path]) -> int:
    """Highest best fitness per population size, one row per size."""
    conn = get_connection()
    try:
        for run_dir in map(Path, run_dirs):
            insert_history(conn, str(run_dir), _population_size(run_dir), read_history(run_dir / HISTORY_FILE))
        rows = population_summary(conn)
    finally:
        conn.close()
    table = [[f"GA, N_p={size}" if size is not None else "GA, N_p=?", best, mean_final, runs]
             for size, best, mean_final, runs in rows]
    print(format_table(["method", "best fitness", "mean final best", "runs"], table))
    return EXIT_OK
