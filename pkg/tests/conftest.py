"""Session fixtures: the tiny model bundle and the synthetic smoke dataset."""

import pytest

from ecgtap.bundle import load_bundle
from ecgtap.evaluation import ExperimentConfig, run_experiment
from ecgtap.svm import TrainConfig

from helpers import build_fixture_bundle, make_smoke_instances


@pytest.fixture(scope="session")
def fixture_bundle_path(tmp_path_factory):
    return build_fixture_bundle(tmp_path_factory.mktemp("bundle") / "fx")


@pytest.fixture(scope="session")
def fixture_bundle(fixture_bundle_path):
    return load_bundle(fixture_bundle_path)


@pytest.fixture(scope="session")
def smoke_instances():
    return make_smoke_instances()


def smoke_experiment_config(jobs: int = 4) -> ExperimentConfig:
    return ExperimentConfig(
        folds=10,
        fold_seed=3,
        select_k=8,
        svm=TrainConfig(shuffle_seed=5, max_epochs=300),
        jobs=jobs,
    )


@pytest.fixture(scope="session")
def smoke_report(fixture_bundle, smoke_instances):
    return run_experiment(smoke_instances, fixture_bundle, smoke_experiment_config())
