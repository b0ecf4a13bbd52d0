import asyncio
import datetime
import logging
import time
from typing import Any, Dict, List, Optional, Tuple

import aiosqlite

from .lab.order_study import OrderSample, OrderStudyReport, format_samples_csv

DEFAULT_DB_PATH = "obx_studies.db"
STUDIES_TABLE = "studies"
SAMPLES_TABLE = "samples"
ORDERS_TABLE = "orders"


class DataLogger:
    """
    Records completed order studies in an SQLite database and reads them back.
    """
    def __init__(self, db_path: str = DEFAULT_DB_PATH):
        """
        Initializes the DataLogger.

        Args:
            db_path: Path to the SQLite database file.
        """
        self.logger = logging.getLogger(self.__class__.__name__)
        self.db_path = db_path
        self._db: Optional[aiosqlite.Connection] = None
        self._lock = asyncio.Lock()

    async def initialize(self):
        """
        Connects to the database and ensures the tables exist.
        Must be called before logging studies.
        """
        async with self._lock:
            if self._db is None:
                try:
                    self._db = await aiosqlite.connect(self.db_path)
                    await self._db.executescript(f"""
                        CREATE TABLE IF NOT EXISTS {STUDIES_TABLE} (
                            id INTEGER PRIMARY KEY AUTOINCREMENT,
                            created REAL,
                            label TEXT,
                            l INTEGER,
                            m INTEGER,
                            k INTEGER,
                            passed INTEGER
                        );
                        CREATE TABLE IF NOT EXISTS {SAMPLES_TABLE} (
                            study_id INTEGER REFERENCES {STUDIES_TABLE}(id),
                            h REAL,
                            i INTEGER,
                            error REAL,
                            floor REAL
                        );
                        CREATE TABLE IF NOT EXISTS {ORDERS_TABLE} (
                            study_id INTEGER REFERENCES {STUDIES_TABLE}(id),
                            i INTEGER,
                            slope REAL,
                            predicted INTEGER,
                            passed INTEGER
                        );
                    """)
                    await self._db.commit()
                    self.logger.info(f"DataLogger initialized. Database: {self.db_path}")
                except Exception as e:
                    self.logger.error(f"Error initializing database {self.db_path}: {e}")
                    self._db = None
                    raise

    async def log_report(self, report: OrderStudyReport, label: str = "") -> Optional[int]:
        """
        Stores a study with its samples and per-order results.

        Args:
            report: The completed study.
            label: Free text describing the system, e.g. "builtin:index3 seed=42".

        Returns:
            The id of the new study row, or None if the logger is not initialized.
        """
        if not self._db:
            self.logger.error("DataLogger not initialized. Cannot log study.")
            return None

        async with self._lock:
            cursor = await self._db.execute(
                f"INSERT INTO {STUDIES_TABLE} (created, label, l, m, k, passed) VALUES (?, ?, ?, ?, ?, ?)",
                (time.time(), label, report.l, report.m, report.index_k, int(report.all_passed)),
            )
            study_id = cursor.lastrowid
            await self._db.executemany(
                f"INSERT INTO {SAMPLES_TABLE} (study_id, h, i, error, floor) VALUES (?, ?, ?, ?, ?)",
                [(study_id, s.h, s.i, s.error, s.floor) for s in report.samples],
            )
            await self._db.executemany(
                f"INSERT INTO {ORDERS_TABLE} (study_id, i, slope, predicted, passed) VALUES (?, ?, ?, ?, ?)",
                [
                    (study_id, r.i, r.slope, r.predicted, None if r.passed is None else int(r.passed))
                    for r in report.results
                ],
            )
            await self._db.commit()
        self.logger.info(f"Logged study {study_id} (l={report.l}, m={report.m}, k={report.index_k})")
        return study_id

    async def get_studies(self) -> List[Dict[str, Any]]:
        """
        Returns stored studies, oldest first, with their per-order results.
        """
        if not self._db:
            self.logger.error("DataLogger not initialized. Cannot retrieve studies.")
            return []
        async with self._db.execute(
            f"SELECT id, created, label, l, m, k, passed FROM {STUDIES_TABLE} ORDER BY id ASC"
        ) as cursor:
            rows = await cursor.fetchall()
        studies = []
        for study_id, created, label, l, m, k, passed in rows:
            async with self._db.execute(
                f"SELECT i, slope, predicted, passed FROM {ORDERS_TABLE} WHERE study_id = ? ORDER BY i ASC",
                (study_id,),
            ) as cursor:
                orders = await cursor.fetchall()
            studies.append({
                "id": study_id,
                "created_iso": datetime.datetime.fromtimestamp(created, tz=datetime.timezone.utc).isoformat(),
                "label": label,
                "l": l,
                "m": m,
                "k": k,
                "passed": bool(passed),
                "orders": [
                    {"i": i, "slope": slope, "predicted": predicted,
                     "pass": None if ok is None else bool(ok)}
                    for i, slope, predicted, ok in orders
                ],
            })
        return studies

    async def get_samples(self, study_id: int) -> List[Tuple]:
        if not self._db:
            self.logger.error("DataLogger not initialized. Cannot retrieve samples.")
            return []
        async with self._db.execute(
            f"SELECT h, i, error, floor FROM {SAMPLES_TABLE} WHERE study_id = ?", (study_id,)
        ) as cursor:
            return list(await cursor.fetchall())

    async def get_samples_as_csv(self, study_id: int) -> Optional[str]:
        """
        Exports a stored study in the order-study CSV format.

        Returns:
            The CSV text, or None if the study has no samples.
        """
        rows = await self.get_samples(study_id)
        if not rows:
            return None
        return format_samples_csv(OrderSample(h=h, i=i, error=error, floor=floor) for h, i, error, floor in rows)

    async def close(self):
        """Closes the database connection."""
        async with self._lock:
            if self._db:
                try:
                    await self._db.close()
                    self.logger.info("DataLogger database connection closed.")
                except Exception as e:
                    self.logger.error(f"Error closing database connection: {e}")
                finally:
                    self._db = None

    async def __aenter__(self):
        await self.initialize()
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        await self.close()
