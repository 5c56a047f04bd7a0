import numpy as np
import pytest

from sniftle import montecarlo as mc
from sniftle.errors import DomainError, EstimationError, InvalidInputError
from sniftle.flowfield import (builtin_model, double_gyre, linear_saddle, model_from_grid,
                               sample_model_on_grid, zero_model)
from sniftle.flowmap import solve_flow
from sniftle.measures import s2
from sniftle.montecarlo import (Ensemble, McConfig, bound_scaling_study, gaussian_validation,
                                projection_variance_sup, simulate, simulate_pair)
from sniftle.uqcov import UncertaintyScales


def test_no_randomness_collapses_to_center_path():
    model = double_gyre()
    cfg = McConfig(samples=5, em_step=1e-2, seed=1, scales=UncertaintyScales(0.0, 0.0))
    x, lin, alive = simulate(model, [1.0, 0.5], 2.0, cfg)
    assert alive.all()
    assert np.all(x == x[0]) and np.all(lin == x)
    ref = solve_flow(model, [1.0, 0.5], 2.0).position
    np.testing.assert_allclose(x[0], ref, atol=5e-2)


def test_zero_drift_linearization_exact_and_variance():
    t, eps = 2.0, 0.3
    cfg = McConfig(samples=4000, em_step=0.05, seed=3, scales=UncertaintyScales(eps, 0.0))
    x_ens, l_ens = simulate_pair(zero_model(), [0.0, 0.0], t, cfg)
    np.testing.assert_array_equal(x_ens.final_states, l_ens.final_states)
    band = 5 * np.sqrt(2 / cfg.samples) * eps ** 2 * t
    np.testing.assert_allclose(x_ens.covariance, eps ** 2 * t * np.eye(2), atol=band)


def test_linear_drift_linearization_exact():
    xi = np.array([[1.0, 0.3], [0.3, 0.5]])
    cfg = McConfig(samples=2000, em_step=1e-2, seed=5, scales=UncertaintyScales(0.05, 0.02, xi))
    x_ens, l_ens = simulate_pair(linear_saddle(1.0), [0.1, 0.2], 1.0, cfg)
    np.testing.assert_allclose(x_ens.final_states, l_ens.final_states, rtol=1e-12, atol=1e-14)


def test_linear_drift_gaussian_validation_within_sampling_error():
    n = 4000
    xi = np.array([[1.0, 0.3], [0.3, 0.5]])
    cfg = McConfig(samples=n, em_step=1e-3, seed=8, scales=UncertaintyScales(0.05, 0.02, xi))
    rep = gaussian_validation(linear_saddle(0.5), [0.1, 0.2], 1.0, cfg)
    assert rep.cov_rel_error <= 4 * np.sqrt(2 / n)


def test_zero_model_validation():
    cfg = McConfig(samples=3000, em_step=0.1, seed=2, scales=UncertaintyScales(0.1, 0.2))
    rep = gaussian_validation(zero_model(), [1.0, -1.0], 1.0, cfg)
    np.testing.assert_allclose(rep.predicted_cov, (0.04 + 0.01) * np.eye(2), rtol=1e-12)
    assert rep.cov_rel_error <= 4 * np.sqrt(2 / 3000)
    assert rep.mean_abs_error <= 4 * np.sqrt(0.05 / 3000)


def test_seed_determinism_and_chunk_invariance(monkeypatch):
    model = double_gyre()
    cfg = McConfig(samples=300, em_step=1e-2, seed=99, scales=UncertaintyScales(1e-2, 1e-2))
    a = simulate(model, [0.5, 0.5], 1.0, cfg)
    b = simulate(model, [0.5, 0.5], 1.0, cfg)
    np.testing.assert_array_equal(a[0], b[0])
    monkeypatch.setattr(mc, "SAMPLE_CHUNK", 7)
    monkeypatch.setattr(mc, "TIME_BLOCK", 13)
    c = simulate(model, [0.5, 0.5], 1.0, McConfig(300, 1e-2, 99, cfg.scales, workers=4))
    np.testing.assert_array_equal(a[0], c[0])
    np.testing.assert_array_equal(a[1], c[1])
    d = simulate(model, [0.5, 0.5], 1.0, McConfig(300, 1e-2, 100, cfg.scales))
    assert not np.array_equal(a[0], d[0])


def test_reduction_is_order_insensitive(rng):
    states = rng.normal(size=(500, 2))
    a = Ensemble.from_states(states)
    b = Ensemble.from_states(states[rng.permutation(500)])
    np.testing.assert_allclose(b.mean, a.mean, rtol=1e-10)
    np.testing.assert_allclose(b.covariance, a.covariance, rtol=1e-10)


def test_em_variance_converges_like_inverse_sqrt_n():
    t = 1.0
    errs = {}
    for n in (400, 6400):
        runs = []
        for seed in range(6):
            cfg = McConfig(samples=n, em_step=0.25, seed=seed, scales=UncertaintyScales(1.0, 0.0))
            x, _, _ = simulate(zero_model(), [0.0, 0.0], t, cfg, linear=False)
            runs.append(np.linalg.norm(Ensemble.from_states(x).covariance - t * np.eye(2)))
        errs[n] = np.mean(runs)
    # 16x the samples should shrink the error by about 4x
    assert 2.0 < errs[400] / errs[6400] < 8.0


def test_projection_variance_sup_examples(rng):
    pts = np.tile([1.0, 2.0], (10, 1))
    assert projection_variance_sup(Ensemble.from_states(pts), [1.0, 2.0], 1.0) == 0.0
    draws = rng.normal(size=(100_000, 2)) * [2.0, 1.0]
    assert projection_variance_sup(Ensemble.from_states(draws), [0, 0], 1.0) == pytest.approx(4.0, rel=0.05)
    with pytest.raises(EstimationError):
        projection_variance_sup(draws[:1], [0, 0], 1.0)
    with pytest.raises(InvalidInputError):
        projection_variance_sup(draws, [0, 0], 0.0)


def test_projection_variance_sup_equals_dense_sweep(rng):
    draws = rng.normal(size=(2000, 2)) @ np.array([[1.0, 0.0], [0.8, 0.4]]).T
    sup = projection_variance_sup(draws, [0.0, 0.0], 0.5)
    theta = np.arange(0, np.pi, 1e-3)
    p = np.stack([np.cos(theta), np.sin(theta)])
    dev = draws / 0.5
    sweep = np.max(np.var(dev @ p, axis=0, ddof=1))
    assert sweep <= sup * (1 + 1e-12)
    assert sup == pytest.approx(sweep, rel=1e-6)


def test_saddle_projection_matches_s2():
    eps = 1e-3
    cfg = McConfig(samples=4000, em_step=1e-3, seed=4, scales=UncertaintyScales(eps, 0.0))
    model = linear_saddle(1.0)
    x, _, _ = simulate(model, [0.0, 0.0], 1.0, cfg, linear=False)
    sol = solve_flow(model, [0.0, 0.0], 1.0)
    est = projection_variance_sup(x, sol.position, eps)
    assert est == pytest.approx(s2(sol), rel=0.1)


def _gridded_saddle():
    data = sample_model_on_grid(builtin_model("linear_saddle", a=1.0),
                                [np.linspace(-1, 1, 21), np.linspace(-1, 1, 21)], [0.0, 5.0])
    return model_from_grid(data)


def test_domain_exit_abort_and_skip():
    model = _gridded_saddle()
    scales = UncertaintyScales(0.0, 0.3)
    with pytest.raises(DomainError):
        simulate(model, [0.5, 0.0], 0.5, McConfig(200, 1e-2, 1, scales))
    x_ens, l_ens = simulate_pair(model, [0.5, 0.0], 0.5, McConfig(200, 1e-2, 1, scales, on_exit="skip"))
    assert 0 < x_ens.skipped < 200
    assert x_ens.size == l_ens.size == 200 - x_ens.skipped


def test_scaling_study_linear_is_degenerate():
    cfg = McConfig(samples=200, em_step=1e-2, seed=0)
    study = bound_scaling_study(linear_saddle(1.0), [0.1, 0.1], 1.0, "eps_only",
                                [1e-1, 3e-2, 1e-2, 3e-3], [1, 2], cfg)
    assert all(f.status == "degenerate-zero" for f in study.fits.values())
    assert len(study.rows) == 8


def test_scaling_study_quadratic_on_gyre():
    cfg = McConfig(samples=400, em_step=1e-2, seed=0)
    study = bound_scaling_study(double_gyre(), [1.0, 0.5], 2.0, "eps_only",
                                [1e-1, 3e-2, 1e-2, 3e-3], [1], cfg)
    assert 1.7 <= study.fits[1.0].slope <= 2.3
    text = study.to_csv(["hdr"])
    assert text.splitlines()[0] == "# hdr"
    assert "scale,r,moment,stderr" in text


def test_scaling_study_rejects_too_few_levels():
    with pytest.raises(InvalidInputError, match="insufficient levels"):
        bound_scaling_study(double_gyre(), [1.0, 0.5], 1.0, "eps_only", [1e-1, 1e-3], [1],
                            McConfig(samples=10))


def test_config_validation():
    with pytest.raises(InvalidInputError):
        McConfig(samples=1)
    with pytest.raises(InvalidInputError):
        McConfig(on_exit="ignore")
