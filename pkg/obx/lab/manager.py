import asyncio
import logging
import os
from typing import List, Optional, Sequence

from ..analysis.pencil import check_regularity, differentiation_index
from ..analysis.steady_state import PhasorSolution, ac_solve
from ..coefficients import ObreshkovScheme
from ..datalogger import DataLogger
from ..model.dae import LinearDae
from .order_study import (
    DEFAULT_POINTS,
    SLOPE_TOLERANCE,
    OrderSample,
    OrderStudyReport,
    default_h_values,
    one_step_sample,
    summarize,
    widen_count,
    widening_steps,
)

# --- Configuration ---
DEFAULT_MAX_WORKERS = 4
WORKERS_ENV = "OBX_STUDY_WORKERS"


def _max_workers_from_env() -> int:
    raw = os.getenv(WORKERS_ENV)
    if raw is None:
        return DEFAULT_MAX_WORKERS
    try:
        value = int(raw)
        if value < 1:
            raise ValueError("must be at least 1")
        return value
    except ValueError as e:
        logging.getLogger(__name__).warning(
            f"Invalid {WORKERS_ENV}={raw!r}: {e}. Falling back to {DEFAULT_MAX_WORKERS}."
        )
        return DEFAULT_MAX_WORKERS


class StudyManager:
    """
    Runs order studies with the step-size samples evaluated concurrently
    and, when a database path is given, records every finished study.

    Samples are gathered in the order of the h grid, so the report equals
    the one of the sequential ``run_study``.
    """
    def __init__(self, db_path: Optional[str] = None, max_workers: Optional[int] = None):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.max_workers = max_workers if max_workers is not None else _max_workers_from_env()
        self.datalogger: Optional[DataLogger] = DataLogger(db_path) if db_path else None
        self._semaphore: Optional[asyncio.Semaphore] = None
        self._active = False
        self.study_ids: List[int] = []

    @property
    def active(self) -> bool:
        return self._active

    async def start(self):
        """Opens the study database, if any."""
        if self._active:
            self.logger.debug("StudyManager already started.")
            return
        if self.datalogger is not None:
            await self.datalogger.initialize()
        self._semaphore = asyncio.Semaphore(self.max_workers)
        self._active = True
        self.logger.info(f"StudyManager started with {self.max_workers} workers.")

    async def stop(self):
        """Closes the study database."""
        if not self._active:
            return
        self._active = False
        if self.datalogger is not None:
            await self.datalogger.close()
        self.logger.info("StudyManager stopped.")

    async def _sample(self, dae: LinearDae, scheme: ObreshkovScheme, phasor: PhasorSolution, h: float) -> List[OrderSample]:
        async with self._semaphore:
            return await asyncio.to_thread(one_step_sample, dae, scheme, phasor, h)

    async def _sample_grid(self, dae: LinearDae, scheme: ObreshkovScheme, phasor: PhasorSolution,
                           h_values: Sequence[float]) -> List[OrderSample]:
        per_h = await asyncio.gather(*(self._sample(dae, scheme, phasor, float(h)) for h in h_values))
        return [s for group in per_h for s in group]

    async def run_study(
        self,
        dae: LinearDae,
        scheme: ObreshkovScheme,
        h_values: Optional[Sequence[float]] = None,
        points: int = DEFAULT_POINTS,
        tolerance: float = SLOPE_TOLERANCE,
        label: str = "",
    ) -> OrderStudyReport:
        """
        Runs a full order study.

        Args:
            dae: The system under study.
            scheme: The Obreshkov scheme.
            h_values: Step sizes, descending; defaults to the period-relative grid.
            points: Grid size when h_values is not given.
            tolerance: Allowed |slope - predicted order|.
            label: Stored with the study in the database.
        """
        if not self._active:
            raise RuntimeError("StudyManager is not started")
        dae = check_regularity(dae)
        index_k = differentiation_index(dae.C, dae.G)
        phasor = ac_solve(dae)
        widen = h_values is None
        if widen:
            h_values = default_h_values(dae.omega, points)
        self.logger.info(
            f"Order study: scheme (l={scheme.l}, m={scheme.m}), k={index_k}, {len(h_values)} step sizes"
        )
        samples = await self._sample_grid(dae, scheme, phasor, h_values)
        report = summarize(scheme, index_k, h_values, samples, tolerance)
        if widen:
            extra = widening_steps(h_values, widen_count(report), dae.omega)
            if extra:
                self.logger.info(
                    f"i=0 keeps {report.results[0].used} samples above the floor, adding {len(extra)} larger steps"
                )
                samples = await self._sample_grid(dae, scheme, phasor, extra) + samples
                report = summarize(scheme, index_k, [*extra, *h_values], samples, tolerance)

        if self.datalogger is not None:
            study_id = await self.datalogger.log_report(report, label=label)
            if study_id is not None:
                self.study_ids.append(study_id)
        return report

    async def __aenter__(self):
        await self.start()
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        await self.stop()
