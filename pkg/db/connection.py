"""
SQLite Archive Module
Stores verification runs and their check rows for later comparison
"""

import hashlib
import json
import logging
import sqlite3
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from models.errors import ReportExportError
from models.reports import CheckReport

logger = logging.getLogger(__name__)

RUN_TABLE_SQL = """
CREATE TABLE IF NOT EXISTS Run (
    run_id INTEGER PRIMARY KEY AUTOINCREMENT,
    command TEXT NOT NULL,
    config_hash TEXT NOT NULL,
    check_count INTEGER NOT NULL CHECK(check_count >= 0),
    failed_count INTEGER NOT NULL CHECK(failed_count >= 0),
    created_at TIMESTAMP NOT NULL
)
"""

CHECK_TABLE_SQL = """
CREATE TABLE IF NOT EXISTS CheckRow (
    row_id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_id INTEGER NOT NULL,
    check_id TEXT NOT NULL,
    reference TEXT NOT NULL,
    lhs REAL,
    rhs REAL,
    margin REAL,
    passed INTEGER NOT NULL CHECK(passed IN (0, 1)),
    informational INTEGER NOT NULL CHECK(informational IN (0, 1)),
    error_budget REAL,
    seed INTEGER,
    FOREIGN KEY (run_id) REFERENCES Run(run_id) ON DELETE CASCADE
)
"""

INDEXES_SQL = [
    "CREATE INDEX IF NOT EXISTS idx_check_run_id ON CheckRow(run_id)",
    "CREATE INDEX IF NOT EXISTS idx_check_check_id ON CheckRow(check_id)",
    "CREATE INDEX IF NOT EXISTS idx_run_config_hash ON Run(config_hash)",
]


def config_hash(config: dict) -> str:
    """Stable SHA-256 of a config mapping"""
    text = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ReportArchive:
    """Connection manager for the SQLite run archive"""

    def __init__(self, db_path):
        self.connection = None
        self.db_path = Path(db_path)

    def get_connection(self):
        """Open a connection with the archive pragmas"""
        try:
            conn = sqlite3.connect(str(self.db_path), timeout=30.0)
            conn.execute("PRAGMA foreign_keys = ON")
            conn.execute("PRAGMA journal_mode = WAL")
            conn.execute("PRAGMA synchronous = NORMAL")
            return conn
        except sqlite3.Error as e:
            logger.error("archive connection failed: %s", e)
            return None

    def connect(self) -> bool:
        """Open the archive and create its tables"""
        self.connection = self.get_connection()
        if self.connection is None:
            return False
        try:
            for sql in [RUN_TABLE_SQL, CHECK_TABLE_SQL] + INDEXES_SQL:
                self.connection.execute(sql)
            self.connection.commit()
            return True
        except sqlite3.Error as e:
            logger.error("archive initialization failed: %s", e)
            return False

    def disconnect(self):
        if self.connection:
            self.connection.close()
            self.connection = None

    def __enter__(self):
        if not self.connect():
            self.disconnect()
            raise ReportExportError(f"cannot open run archive at {self.db_path}")
        return self

    def __exit__(self, exc_type, exc, tb):
        self.disconnect()

    def archive_run(self, command: str, config: dict,
                    reports: Iterable[CheckReport]) -> Optional[int]:
        """Insert one run with all its check rows; returns the run id"""
        if self.connection is None:
            raise ReportExportError("run archive is not connected")
        reports = list(reports)
        failed = sum(1 for r in reports if r.blocking_failure)
        try:
            cursor = self.connection.cursor()
            cursor.execute(
                "INSERT INTO Run (command, config_hash, check_count, failed_count, created_at) "
                "VALUES (?, ?, ?, ?, ?)",
                (command, config_hash(config), len(reports), failed,
                 datetime.now(timezone.utc).isoformat()))
            run_id = cursor.lastrowid
            cursor.executemany(
                "INSERT INTO CheckRow (run_id, check_id, reference, lhs, rhs, margin, passed, "
                "informational, error_budget, seed) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                [(run_id, r.check_id, r.reference, r.lhs, r.rhs, r.margin, int(r.passed),
                  int(r.informational), r.error_budget, r.seed) for r in reports])
            self.connection.commit()
            cursor.close()
            logger.info("archived run %d (%d checks) in %s", run_id, len(reports), self.db_path)
            return run_id
        except sqlite3.Error as e:
            self.connection.rollback()
            logger.error("archiving run failed: %s", e)
            return None

    def fetch_all(self, query: str, params: tuple = None) -> list:
        """Fetch all results from SELECT query"""
        try:
            cursor = self.connection.cursor()
            cursor.execute(query, params or ())
            result = cursor.fetchall()
            cursor.close()
            return result
        except sqlite3.Error as e:
            logger.error("archive query failed: %s", e)
            return []

    def get_runs(self) -> list:
        return self.fetch_all(
            "SELECT run_id, command, config_hash, check_count, failed_count, created_at "
            "FROM Run ORDER BY run_id")

    def get_checks(self, run_id: int) -> list:
        return self.fetch_all(
            "SELECT check_id, lhs, rhs, margin, passed FROM CheckRow WHERE run_id = ? "
            "ORDER BY check_id", (run_id,))

    def get_archive_info(self) -> dict:
        """Path, size and row counts of the archive"""
        info = {
            "database_path": str(self.db_path),
            "database_exists": self.db_path.exists(),
            "database_size": self.db_path.stat().st_size if self.db_path.exists() else 0,
        }
        for table in ["Run", "CheckRow"]:
            rows = self.fetch_all(f"SELECT COUNT(*) FROM {table}")
            info[f"{table.lower()}_count"] = rows[0][0] if rows else 0
        return info
