import asyncio

import numpy as np

from obx.coefficients import make_scheme
from obx.datalogger import DataLogger
from obx.lab.manager import StudyManager
from obx.lab.order_study import OrderSample, samples_to_csv, summarize
from obx.model.benchmarks import builtin_system


def _synthetic_report():
    h = np.logspace(-2, -3, 5)
    samples = [OrderSample(h=float(x), i=i, error=float(x) ** (3 + i), floor=1e-15) for i in (0, 1) for x in h]
    return summarize(make_scheme(1, 1), 0, h, samples)


def test_log_and_read_back(tmp_path):
    report = _synthetic_report()

    async def scenario():
        async with DataLogger(str(tmp_path / "studies.db")) as logger:
            study_id = await logger.log_report(report, label="synthetic")
            studies = await logger.get_studies()
            csv_text = await logger.get_samples_as_csv(study_id)
            missing = await logger.get_samples_as_csv(study_id + 100)
        return study_id, studies, csv_text, missing

    study_id, studies, csv_text, missing = asyncio.run(scenario())
    assert study_id == 1
    assert len(studies) == 1
    stored = studies[0]
    assert (stored["label"], stored["l"], stored["m"], stored["k"]) == ("synthetic", 1, 1, 0)
    assert stored["passed"] is True
    assert [o["i"] for o in stored["orders"]] == [0, 1]
    assert stored["orders"][0]["predicted"] == 3
    assert stored["orders"][1]["pass"] is True
    assert csv_text == samples_to_csv(report)
    assert missing is None


def test_studies_persist_across_connections(tmp_path):
    path = str(tmp_path / "studies.db")
    report = _synthetic_report()

    async def write_twice():
        async with DataLogger(path) as logger:
            await logger.log_report(report, label="a")
        async with DataLogger(path) as logger:
            await logger.log_report(report, label="b")
            return await logger.get_studies()

    studies = asyncio.run(write_twice())
    assert [s["label"] for s in studies] == ["a", "b"]
    assert [s["id"] for s in studies] == [1, 2]


def test_uninitialized_logger_does_not_write(tmp_path):
    logger = DataLogger(str(tmp_path / "never.db"))

    async def scenario():
        return (
            await logger.log_report(_synthetic_report()),
            await logger.get_studies(),
            await logger.get_samples_as_csv(1),
        )

    assert asyncio.run(scenario()) == (None, [], None)
    assert not (tmp_path / "never.db").exists()


def test_manager_records_studies(tmp_path):
    path = str(tmp_path / "runs.db")
    dae = builtin_system("ode").dae

    async def scenario():
        async with StudyManager(db_path=path, max_workers=2) as manager:
            report = await manager.run_study(dae, make_scheme(1, 1), points=6, label="builtin:ode")
            ids = list(manager.study_ids)
        async with DataLogger(path) as logger:
            return report, ids, await logger.get_studies(), await logger.get_samples_as_csv(ids[0])

    report, ids, studies, csv_text = asyncio.run(scenario())
    assert ids == [1]
    assert studies[0]["label"] == "builtin:ode"
    assert studies[0]["passed"] == report.all_passed
    assert csv_text == samples_to_csv(report)
