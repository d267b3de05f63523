"""Shared fixtures for lifelog-graphs tests."""

from datetime import date, datetime

import pytest

from src.config import AnalysisConfig, CcmSpec, GraphSchema, PipelineConfig, SynthConfig, TrainConfig
from src.graph import build_day_graph, prepare_graph
from src.ingest import partition_by_day
from src.models import DayBucket, LifelogEvent, SensorKind
from src.synth import default_archetypes, generate_synthetic


@pytest.fixture
def schema():
    return GraphSchema()


@pytest.fixture
def tiny_train_config():
    """Small hidden sizes for fast model tests."""
    return TrainConfig(h1=8, h2=8, h_d=8, batch_size=4, epochs=3, seed=3)


@pytest.fixture
def sphere_spec():
    return CcmSpec(kappa=1.0, d=2)


@pytest.fixture
def make_event():
    def _make(sensor=SensorKind.CALL, entity="+1555", start="2013-11-05 09:12:00", end=None, user_id="u1"):
        return LifelogEvent(
            user_id=user_id,
            sensor=sensor,
            entity_key=entity,
            start=datetime.fromisoformat(start),
            end=datetime.fromisoformat(end) if end else None,
        )

    return _make


@pytest.fixture
def sample_bucket(make_event):
    """One day with a call, an app session, a wifi sighting and a repeated call source."""
    events = [
        make_event(SensorKind.CALL, "+1555", "2013-11-05 09:12:00", "2013-11-05 09:20:00"),
        make_event(SensorKind.APPLICATION_USAGE, "com.chat", "2013-11-05 13:00:00", "2013-11-05 13:40:00"),
        make_event(SensorKind.WIFI, "home-net", "2013-11-05 22:05:00"),
        make_event(SensorKind.CALL, "+1555", "2013-11-05 18:00:00"),
    ]
    return DayBucket(user_id="u1", date=date(2013, 11, 5), events=events)


@pytest.fixture
def small_synthetic():
    """3 archetypes × 1 user × 4 days."""
    return generate_synthetic(default_archetypes(), users_per_archetype=1, days=4, seed=11)


@pytest.fixture
def pipeline_config(tmp_path):
    """Small, fast end-to-end configuration writing under tmp_path."""
    return PipelineConfig(
        out_dir=str(tmp_path / "out"),
        seed=5,
        workers=2,
        schema=GraphSchema(n_max=160),
        ccm=CcmSpec(kappa=1.0, d=2),
        train=TrainConfig(h1=8, h2=8, h_d=8, batch_size=4, epochs=2),
        analysis=AnalysisConfig(runs=2, tsne_iterations=200, classifier_epochs=50),
        synth=SynthConfig(users_per_archetype=1, days=4),
    )


@pytest.fixture
def small_schema():
    return GraphSchema(n_max=160)


@pytest.fixture
def graph_inputs(small_synthetic, small_schema):
    """Padded model inputs for the 12 small synthetic days."""
    _, events = small_synthetic
    return [prepare_graph(build_day_graph(b, small_schema), small_schema) for b in partition_by_day(events)]
