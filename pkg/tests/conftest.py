import warnings

import pytest

from mixforge.pipeline import FitConfig, fit
from mixforge.synthgen import generate, paper_ground_truth

# a small but real end-to-end fit shared by attribution/forecast/allocator/
# service tests; session-scoped because MCMC dominates the suite's runtime
FIXTURE_SEED = 7
FIXTURE_CONFIG = FitConfig(
    seed=42,
    funnels=("upper", "lower"),
    draws=1200,
    warmup=1200,
    layer2_draws=300,
)


@pytest.fixture(scope="session")
def synthetic_dataset():
    d, components = generate(paper_ground_truth(seed=FIXTURE_SEED), T=130)
    return d, components


@pytest.fixture(scope="session")
def fitted_snapshot(synthetic_dataset):
    d, _ = synthetic_dataset
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit(d, FIXTURE_CONFIG)
