"""Shared fixtures.  The expensive Monte Carlo artifacts (exact-transition
draws, the first-passage sample, the renewal runs, the sign grid) are
session-scoped so the module tests and the acceptance suite share one
computation of each."""

import pytest
from hypothesis import settings

from ou_harvest.numerics import QuadratureSpec
from ou_harvest.ou_model import Corridor, OUParams
from ou_harvest.functionals import FunctionalContext
from ou_harvest.validation import ValidationData

settings.register_profile("ci", derandomize=True, max_examples=100)
settings.load_profile("ci")

SEED = 42


@pytest.fixture(scope="session")
def pinned_params():
    return OUParams(-1.0, 0.5)


@pytest.fixture(scope="session")
def pinned_corridor():
    return Corridor(1.0, 1.5, 3.0)


@pytest.fixture(scope="session")
def pinned_ctx(pinned_params):
    return FunctionalContext(pinned_params, 1.0, 3.0, QuadratureSpec())


@pytest.fixture(scope="session")
def pinned_data(pinned_params, pinned_corridor):
    """Desk-scale validation data at the pinned parameter set; fixtures are
    lazy, so simulations only run for tests that request them."""
    return ValidationData(pinned_params, pinned_corridor, SEED)
