import numpy as np
import pytest

from app.ingest import TriageRecord


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def raw_row(record_id="r1", **overrides) -> dict:
    row = {
        "record_id": record_id,
        "gender": "1",
        "age_at_visit": "45",
        "temperature": "98.6",
        "heartrate": "88",
        "resp_rate": "18",
        "pain_score": "5",
        "o2_sat": "98",
        "systolic_bp": "130",
        "diastolic_bp": "80",
        "chief_complaint": "chest pain",
        "acuity": "3",
    }
    row.update(overrides)
    return row


def make_record(record_id="r1", acuity=3, age=45, complaint="chest pain", **vitals) -> TriageRecord:
    fields = dict(
        gender=1,
        temperature=98.6,
        heartrate=88.0,
        resp_rate=18.0,
        pain_score=5,
        o2_sat=98.0,
        systolic_bp=130.0,
        diastolic_bp=80.0,
        unable=0,
    )
    fields.update(vitals)
    return TriageRecord(
        record_id=record_id,
        age_at_visit=age,
        chief_complaint=complaint,
        acuity=acuity,
        **fields,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_probs(rng):
    def draw(n, k=5):
        return rng.dirichlet(np.ones(k), size=n)

    return draw
