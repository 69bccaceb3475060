import numpy as np
import pytest

from mecalib import AnalysisSpec, Dataset, ScenarioConfig, generate_dataset, scenario_spec


@pytest.fixture
def csv_file(tmp_path):
    """Small well-formed CSV with outcome, two replicates, one covariate."""
    path = tmp_path / "data.csv"
    path.write_text(
        "y,x1,x2,age\n"
        "10.5,5.0,5.4,30\n"
        "12.0,7.0,6.6,40\n"
        "9.25,4.0,4.2,35\n"
    )
    return path


@pytest.fixture
def toy_spec():
    return AnalysisSpec(outcome="y", exposure_replicates=("x1", "x2"), covariates=("age",))


def exact_line_dataset(n=30, slope=2.0, intercept=1.0):
    """y is an exact affine function of x: every OLS refit recovers the line."""
    x = np.linspace(0.0, 9.0, n)
    y = intercept + slope * x
    return Dataset(("y", "x"), np.column_stack([y, x]))


def base_scenario_dataset(n=500, rep_index=0, seed=12, **knobs):
    """One synthetic dataset drawn from the base generating mechanism."""
    cfg = ScenarioConfig(name="test", n=n, n_reps=1, seed=seed, **knobs)
    return generate_dataset(cfg, rep_index), scenario_spec(cfg.k)
