import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from flowbypass.field import ConditionedFieldSpec, GaussianMixture, labeled  # noqa: E402

X, Y = labeled("x"), labeled("y")


def shifted_pair(delta=0.5, std=0.6):
    """Two-component origin and target with the same layout, target moved by delta."""
    return ConditionedFieldSpec(2, {
        "x": GaussianMixture.from_components([(0.5, [-1.0, 0.0], std), (0.5, [1.0, 0.0], std)]),
        "y": GaussianMixture.from_components([(0.5, [-1.0 + delta, 0.0], std),
                                              (0.5, [1.0 + delta, 0.0], std)]),
    })


def attribute_modes(weight=0.7, std=0.5, sep=2.5, contents=(-2.0, 0.0, 2.0)):
    """Shared modes on two attribute rows; the prompt reweights them."""
    def mix(w_top):
        comps = []
        for c in contents:
            comps.append((w_top / len(contents), [c, sep], std))
            comps.append(((1 - w_top) / len(contents), [c, -sep], std))
        return GaussianMixture.from_components(comps)
    return ConditionedFieldSpec(2, {"x": mix(1 - weight), "y": mix(weight)})


@pytest.fixture
def pair_field():
    return shifted_pair()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
