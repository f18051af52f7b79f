"""Pytest fixtures for testing."""

import csv

import numpy as np
import pytest

from models.enums import Direction
from models.schemas import IndicatorSchema, IndicatorSpec, RunConfig
from services.relarm import ClusterState


@pytest.fixture
def schema3():
    """Two positive indicators and one negative one."""
    return IndicatorSchema(indicators=[
        IndicatorSpec(name="income", direction=Direction.POSITIVE),
        IndicatorSpec(name="employment", direction=Direction.POSITIVE),
        IndicatorSpec(name="poverty", direction=Direction.NEGATIVE),
    ])


@pytest.fixture
def write_csv(tmp_path):
    """Write rows (header first) to a CSV file under tmp_path and return its path."""
    def _write(name, rows):
        path = tmp_path / name
        with path.open("w", newline="", encoding="utf-8") as handle:
            csv.writer(handle).writerows(rows)
        return path
    return _write


@pytest.fixture
def write_schema(tmp_path):
    """Write an IndicatorSchema as a JSON array file."""
    def _write(schema, name="schema.json"):
        path = tmp_path / name
        path.write_text(
            "[" + ",".join(spec.model_dump_json() for spec in schema.indicators) + "]",
            encoding="utf-8",
        )
        return path
    return _write


def monotone_rows(m=30, shift=None):
    """
    Rows for m entities whose quality increases strictly with the index.

    All three indicators are affine in the index (the negative one decreasing), so the
    normalized data is rank one and the true order is e01 < e02 < ... < eM.
    ``shift`` maps entity index -> offset added to the index before building values.
    """
    shift = shift or {}
    rows = [["entity_id", "group", "income", "employment", "poverty"]]
    for i in range(1, m + 1):
        x = i + shift.get(i, 0.0)
        rows.append([f"e{i:02d}", "advanced", f"{1000 + 50 * x}", f"{40 + 1.5 * x}", f"{30 - 0.5 * x}"])
    return rows


@pytest.fixture
def make_monotone_rows():
    return monotone_rows


@pytest.fixture
def monotone_data(write_csv):
    return write_csv("monotone.csv", monotone_rows())


@pytest.fixture
def fast_config():
    """Small but complete run configuration."""
    return RunConfig(
        year_label="y1",
        clusters=5,
        restarts=10,
        hidden_layers=[10, 10, 10],
        epochs=300,
        seed=7,
    )


@pytest.fixture
def random_cluster_state():
    """Factory for random complete ClusterStates with non-empty clusters."""
    def _make(rng, m, k, entity_ids=None):
        labels = np.concatenate([np.arange(k), rng.integers(0, k, size=m - k)])
        rng.shuffle(labels)
        entity_ids = tuple(entity_ids or [f"c{i:03d}" for i in range(m)])
        projection = rng.permutation(m).astype(float) + 1.0
        within = np.zeros(m, dtype=int)
        for cluster in range(k):
            members = np.where(labels == cluster)[0]
            order = members[np.argsort(-projection[members], kind="stable")]
            within[order] = np.arange(1, len(members) + 1)
        cluster_rank = rng.permutation(k) + 1
        projections = (k + 1 - cluster_rank).astype(float)
        return ClusterState(
            entity_ids=entity_ids,
            labels=labels,
            centers=projections[:, None].copy(),
            rating_vector=np.array([1.0]),
            projections=projections,
            cluster_rank=cluster_rank,
            entity_projection=projection,
            within_cluster_rank=within,
        )
    return _make
