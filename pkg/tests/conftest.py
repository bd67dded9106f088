import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile(
    "numeric", max_examples=60, deadline=None,
)
hypothesis.settings.load_profile("numeric")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def blob_data():
    """Two mildly separated Gaussian blobs in 3-d, labels in {-1, +1}."""
    gen = np.random.default_rng(11)
    X = np.vstack([
        gen.normal(0.35, 0.18, (60, 3)),
        gen.normal(0.65, 0.18, (60, 3)),
    ])
    y = np.array([-1.0] * 60 + [1.0] * 60)
    return np.clip(X, 0.0, 1.0), y


@pytest.fixture(scope="session")
def synth_csv(tmp_path_factory):
    from recourse.dataset import synthetic_two_gaussians, write_csv

    path = tmp_path_factory.mktemp("data") / "synth.csv"
    cols, rows = synthetic_two_gaussians(140, seed=5)
    write_csv(path, cols, rows)
    return str(path)


@pytest.fixture(scope="session")
def synth_config(synth_csv):
    from recourse.harness import config_from_dict

    return config_from_dict({
        "dataset": {
            "path": synth_csv,
            "id_column": "id",
            "label_column": "outcome",
            "positive_label": 1,
        },
        "partition": {
            "direct": ["risk_a", "risk_b"],
            "indirect": ["marker"],
            "unchangeable": ["background"],
        },
        "costs": {"risk_a": {"down": 1.0}, "risk_b": {"down": 1.0}},
        "bounds": {"default": [0.0, 1.0]},
        "policy": "hardline",
        "model": {"type": "logistic", "ridge_grid": [1e-2]},
        "indirect_model": {"sigma_grid": [0.5, 1.0]},
        "optimizer": {"method": "pgd"},
        "budgets": [0, 0.5, 1.0, 2.0],
        "support_k": 5,
        "seed": 3,
    })


@pytest.fixture(scope="session")
def synth_bundle(synth_config):
    from recourse.harness import train_bundle

    return train_bundle(synth_config)


def random_feasible_spec(gen, d=None, allow_zero_costs=True):
    """A random projection spec with bounds containing zero."""
    from recourse.projection import FeasibleSetSpec

    d = d if d is not None else int(gen.integers(1, 5))
    zero_rate = 0.15 if allow_zero_costs else 0.0
    cu = np.where(gen.random(d) < zero_rate, 0.0, gen.uniform(0.2, 3.0, d))
    cd = np.where(gen.random(d) < zero_rate, 0.0, gen.uniform(0.2, 3.0, d))
    lo = -gen.uniform(0.0, 1.0, d)
    hi = gen.uniform(0.0, 1.0, d)
    budget = float(gen.uniform(0.0, 1.5)) if gen.random() > 0.1 else 0.0
    return FeasibleSetSpec(cu, cd, budget, lo, hi)
