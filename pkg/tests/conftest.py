import numpy as np
import pytest

from utils import constant_dataset, load_fixture

from voltage_control_bench.config import EnvConfig, LearnerConfig, SynthConfig
from voltage_control_bench.engine.data import synth_dataset


@pytest.fixture(scope="session")
def net2():
    return load_fixture("net2.json")


@pytest.fixture(scope="session")
def net6():
    return load_fixture("net6.json")


@pytest.fixture(scope="session")
def net12():
    return load_fixture("net12.json")


@pytest.fixture(scope="session")
def star4():
    return load_fixture("star4.json")


@pytest.fixture(scope="session")
def synth6(net6):
    return synth_dataset(SynthConfig(days=3), 0, net6)


@pytest.fixture(scope="function")
def flat6(net6):
    # two days, mild load and some PV at every step
    return constant_dataset(net6, 960, load_p=0.03, load_q=0.01, pv_p=0.1)


@pytest.fixture(scope="session")
def short_env_config():
    return EnvConfig(train_horizon=20, eval_horizon=40)


@pytest.fixture(scope="function")
def small_learner_config():
    return LearnerConfig(hidden_sizes=[16, 16], batch_size=8, buffer_size=64, update_every=4, critic_epochs=2)


@pytest.fixture(scope="function")
def rng():
    return np.random.default_rng(0)
