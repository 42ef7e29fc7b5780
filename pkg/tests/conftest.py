import numpy as np
import pytest

from cotmask.surrogate_rt import generate_dataset

ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(400, seed=7)


# desk-scale models shared by the acceptance suite: 50,000 samples, 100,000 updates
DESK_SAMPLES = 50_000
DESK_UPDATES = 100_000
DESK_SEED = 0
ENSEMBLE_SIZE = 5


@pytest.fixture(scope="session")
def desk_split():
    from cotmask.core import SplitRatios, split_dataset

    return split_dataset(generate_dataset(DESK_SAMPLES, DESK_SEED), SplitRatios(0.8, 0.1, 0.1), DESK_SEED)


def _train(split, noise, seed):
    from cotmask.features import fit_normalizer
    from cotmask.mlp import TrainConfig, train_model

    train, val, _ = split
    cfg = TrainConfig(num_updates=DESK_UPDATES, noise_level=noise, seed=seed, eval_every=10_000)
    return train_model(train, val, cfg, fit_normalizer(train, noise))


@pytest.fixture(scope="session")
def noise_model(desk_split):
    return _train(desk_split, 0.03, DESK_SEED)


@pytest.fixture(scope="session")
def clean_model(desk_split):
    return _train(desk_split, 0.0, DESK_SEED)


@pytest.fixture(scope="session")
def ensemble_members(desk_split, noise_model):
    return [noise_model[0]] + [_train(desk_split, 0.03, DESK_SEED + k)[0] for k in range(1, ENSEMBLE_SIZE)]
