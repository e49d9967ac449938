import numpy as np
import pytest

import flowfilt


def canonical():
    prior = flowfilt.GaussianPrior(np.array([0.0]), np.array([[1.0]]))
    meas = flowfilt.LinearMeasurement(np.array([[1.0]]), np.array([[1.0]]), np.array([2.0]))
    return prior, meas


def test_version():
    assert flowfilt.__version__ == "0.1.0"


def test_closed_form_posterior():
    prior, meas = canonical()
    mean, cov = flowfilt.closed_form_posterior(1.0, prior, meas)
    assert mean == pytest.approx([1.0])
    assert cov[0, 0] == pytest.approx(0.5)
    assert flowfilt.lmv_estimate(prior, meas) == pytest.approx([1.0])


def test_moment_odes_reach_posterior():
    prior, meas = canonical()
    flow = flowfilt.make_flow(prior, meas, "constant_q", Q0=np.eye(1))
    grid = flowfilt.LambdaGrid.uniform(200, flowfilt.Scheme.DeterministicRK4)
    nodes, means, covs = flowfilt.solve_moment_odes(flow, grid, prior, meas)
    assert len(nodes) == 201
    assert means[-1] == pytest.approx([1.0], abs=1e-8)
    assert covs[-1][0, 0] == pytest.approx(0.5, abs=1e-8)


def test_ensemble_is_reproducible():
    prior, meas = canonical()
    flow = flowfilt.make_flow(prior, meas, "fixed_q")
    grid = flowfilt.LambdaGrid.uniform(100)
    start = flowfilt.sample_prior(2000, prior, 5)
    a = flowfilt.propagate_ensemble(start, flow, grid, prior, meas, threads=1)
    b = flowfilt.propagate_ensemble(start, flow, grid, prior, meas, threads=3)
    np.testing.assert_array_equal(a.particles, b.particles)
    assert flowfilt.mean_estimate(a)[0] == pytest.approx(1.0, abs=0.1)
    assert flowfilt.covariance_estimate(a)[0, 0] == pytest.approx(0.5, abs=0.1)


def test_errors_map_to_exceptions():
    with pytest.raises(flowfilt.FlowError):
        flowfilt.GaussianPrior(np.array([0.0]), np.array([[-1.0]]))
    prior, meas = canonical()
    with pytest.raises(flowfilt.ParseError):
        flowfilt.make_flow(prior, meas, "constant_q")


def test_run_moments_experiment(tmp_path):
    (tmp_path / "scalar.json").write_text(
        '{"x_prior": [0.0], "P_g": [[1.0]], "H": [[1.0]], "R": [[1.0]], "z": [2.0]}'
    )
    config = {"model": "scalar.json", "flow": {"flow": "exact"}, "experiment": "moments"}
    summary, files = flowfilt.run(config, tmp_path)
    assert summary["terminal_mean"][0] == pytest.approx(1.0, abs=1e-6)
    assert "moments.csv" in files
    assert files["moments.csv"].startswith("lambda,xbar_0")


def test_criterion_runs():
    result = flowfilt.run_criterion(4)
    assert result.passed, result.detail
