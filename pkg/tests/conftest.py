import functools

import numpy as np
import pytest
from hypothesis import settings

from fairsynth import datasets
from fairsynth.rng import stream
from fairsynth.tabular import Attribute, Dataset, Schema, train_test_split

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def toy_schema(n_feature_levels=(3,), protected=1):
    """Protected attributes first, then features, then a binary outcome."""
    attrs = [Attribute(f"g{i}", ("u", "p"), "protected") for i in range(protected)]
    attrs += [Attribute(f"x{i}", tuple(f"l{j}" for j in range(k)))
              for i, k in enumerate(n_feature_levels)]
    attrs.append(Attribute("y", ("bad", "good"), "outcome"))
    return Schema(tuple(attrs), {f"g{i}": "p" for i in range(protected)}, "good")


def random_dataset(schema, n, seed, weights=False):
    rng = np.random.default_rng(seed)
    rows = np.stack([rng.integers(0, k, size=n) for k in schema.shape], axis=1)
    w = rng.uniform(0.2, 3.0, size=n) if weights else None
    return Dataset(schema, rows, w)


def biased_dataset(schema, n, seed, bias=0.3):
    """Favorable outcome more likely for the privileged level of every protected attribute."""
    rng = np.random.default_rng(seed)
    rows = np.stack([rng.integers(0, k, size=n) for k in schema.shape], axis=1)
    priv = np.ones(n, bool)
    for i in schema.protected:
        priv &= rows[:, i] == 1
    p_fav = np.where(priv, 0.5 + bias / 2, 0.5 - bias / 2)
    rows[:, schema.outcome] = (rng.random(n) < p_fav).astype(np.int64)
    return Dataset(schema, rows)


@functools.lru_cache(maxsize=None)
def load(name):
    return datasets.ingest(name)


@functools.lru_cache(maxsize=None)
def split(name, seed=0):
    return train_test_split(load(name), 0.75, stream(seed, "split"))


@pytest.fixture(scope="session")
def adult():
    return load("adult")


@pytest.fixture(scope="session")
def adult_split():
    return split("adult")


@pytest.fixture(scope="session")
def compas_split():
    return split("compas")


@pytest.fixture(scope="session")
def german_split():
    return split("german")


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
