"""In-memory DuckDB store used to query run histories for reports."""

from pathlib import Path
from typing import Sequence

import duckdb

from app.models import GenerationRecord


def _initialize_tables(conn: duckdb.DuckDBPyConnection) -> None:
    conn.execute("""
        CREATE TABLE IF NOT EXISTS history (
            run VARCHAR NOT NULL,
            population_size INTEGER,
            generation INTEGER NOT NULL,
            best_fitness DOUBLE NOT NULL,
            mean_fitness DOUBLE NOT NULL,
            worst_fitness DOUBLE NOT NULL,
            best_genome_key VARCHAR NOT NULL,
            evaluations_performed INTEGER NOT NULL
        )
    """)


def get_connection() -> duckdb.DuckDBPyConnection:
    """Fresh in-memory connection with the history table created."""
    conn = duckdb.connect(":memory:")
    _initialize_tables(conn)
    return conn


def insert_history(
    conn: duckdb.DuckDBPyConnection, run: str, population_size: int | None, records: Sequence[GenerationRecord]
) -> None:
    conn.executemany(
        "INSERT INTO history VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
        [
            [run, population_size, r.generation, r.best_fitness, r.mean_fitness,
             r.worst_fitness, r.best_genome_key, r.evaluations_performed]
            for r in records
        ],
    )


def fitness_curves(conn: duckdb.DuckDBPyConnection, run: str) -> list[tuple]:
    return conn.execute(
        """
        SELECT generation, best_fitness, mean_fitness, worst_fitness, evaluations_performed
        FROM history WHERE run = ? ORDER BY generation
        """,
        [run],
    ).fetchall()


def _literal(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def export_curves_csv(conn: duckdb.DuckDBPyConnection, run: str, path: Path) -> None:
    # COPY does not take bound parameters
    conn.execute(f"""
        COPY (
            SELECT generation, best_fitness, mean_fitness, worst_fitness
            FROM history WHERE run = {_literal(run)} ORDER BY generation
        ) TO {_literal(str(path))} (HEADER, DELIMITER ',')
    """)


def population_summary(conn: duckdb.DuckDBPyConnection) -> list[tuple]:
    """Per population size: highest best fitness, mean final best, number of runs."""
    return conn.execute("""
        WITH finals AS (
            SELECT run, population_size,
                   max(best_fitness) AS run_best,
                   max_by(best_fitness, generation) AS final_best
            FROM history
            GROUP BY run, population_size
        )
        SELECT population_size, max(run_best), avg(final_best), count(*)
        FROM finals
        GROUP BY population_size
        ORDER BY population_size DESC
    """).fetchall()
