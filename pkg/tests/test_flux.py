"""Coefficient field sampling and the flux axioms."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czlab.errors import DomainError, ValidationError
from czlab.flux import (
    FluxParams,
    LINEAR,
    NONLINEAR,
    UniformLaw,
    check_flux_axioms,
    evaluate_flux,
    evaluate_flux_map,
    load_environment,
    sample_environment,
    save_environment,
)


def test_zero_contrast_identity():
    params = FluxParams(lambda_ellipticity=1.0)  # law collapses to [1, 1]
    env = sample_environment(7, 16.0, params)
    assert np.all(env.cell_values == 1.0)
    xi = np.array([2.0, -3.0])
    np.testing.assert_allclose(evaluate_flux(env, xi, (0.3, 0.7)), xi)


def test_determinism_and_seed_sensitivity():
    params = FluxParams(lambda_ellipticity=4.0)
    a = sample_environment(7, 16.0, params)
    b = sample_environment(7, 16.0, params)
    c = sample_environment(8, 16.0, params)
    np.testing.assert_array_equal(a.cell_values, b.cell_values)
    assert np.any(a.cell_values != c.cell_values)


def test_macro_radius_floor():
    with pytest.raises(DomainError):
        sample_environment(0, 9.0, FluxParams(lambda_ellipticity=2.0))
    with pytest.raises(ValidationError):
        sample_environment(0, 10.3, FluxParams(lambda_ellipticity=2.0))


def test_params_validation():
    with pytest.raises(ValidationError):
        FluxParams(lambda_ellipticity=0.5)
    with pytest.raises(ValidationError):
        FluxParams(lambda_ellipticity=2.0, family="nope")
    with pytest.raises(ValidationError):
        FluxParams(lambda_ellipticity=2.0, contrast_law=UniformLaw(0.1, 1.0))
    with pytest.raises(ValidationError):
        # perturbation pushes the Lipschitz constant past Lambda
        FluxParams(lambda_ellipticity=2.0, family=NONLINEAR,
                   contrast_law=UniformLaw(0.5, 2.0), perturbation_weight=0.5)


def test_zero_gradient_maps_to_zero():
    for family, w in ((LINEAR, 0.0), (NONLINEAR, 0.5)):
        params = FluxParams(lambda_ellipticity=2.0, family=family, perturbation_weight=w)
        env = sample_environment(3, 12.0, params)
        out = evaluate_flux(env, np.zeros(2), (1.0, 1.0))
        np.testing.assert_allclose(out, 0.0)


def test_flux_map_matches_pointwise():
    params = FluxParams(lambda_ellipticity=4.0, family=NONLINEAR, perturbation_weight=0.25)
    env = sample_environment(11, 12.0, params)
    rng = np.random.default_rng(0)
    xs = rng.uniform(-12, 12, 20)
    ys = rng.uniform(-12, 12, 20)
    xi = rng.normal(0, 3, (20, 2))
    batched = evaluate_flux_map(env, xi, xs, ys)
    for k in range(20):
        np.testing.assert_allclose(
            batched[k], evaluate_flux(env, xi[k], (xs[k], ys[k])), rtol=1e-12
        )


@settings(max_examples=20, deadline=None)
@given(
    st.integers(min_value=0, max_value=10**6),
    st.sampled_from([LINEAR, NONLINEAR]),
    # nonlinear default law needs 1/Lambda <= Lambda - weight
    st.floats(min_value=1.5, max_value=8.0),
)
def test_axioms_property(seed, family, lam):
    w = 0.25 if family == NONLINEAR else 0.0
    params = FluxParams(lambda_ellipticity=lam, family=family, perturbation_weight=w)
    env = sample_environment(seed, 10.0, params)
    report = check_flux_axioms(env, n_samples=500, rng_seed=seed + 1)
    assert report.passed, (report.worst_lipschitz_ratio, report.worst_monotonicity_ratio)


def test_axiom_sweep_hits_every_cell():
    # worst monotonicity ratio should find the smallest cell scalar when the
    # sweep covers all cells (linear family: ratio == lambda exactly)
    params = FluxParams(lambda_ellipticity=4.0)
    env = sample_environment(5, 10.0, params)
    n_cells = env.n_cells ** 2
    report = check_flux_axioms(env, n_samples=n_cells, rng_seed=0)
    assert report.worst_monotonicity_ratio == pytest.approx(float(env.cell_values.min()))
    assert report.worst_lipschitz_ratio == pytest.approx(float(env.cell_values.max()))


def test_environment_roundtrip(tmp_path):
    for family, w in ((LINEAR, 0.0), (NONLINEAR, 0.3)):
        params = FluxParams(lambda_ellipticity=3.0, family=family, perturbation_weight=w)
        env = sample_environment(21, 11.0, params)
        path = tmp_path / ("env_%s.txt" % family)
        save_environment(path, env)
        back = load_environment(path)
        np.testing.assert_array_equal(back.cell_values, env.cell_values)
        assert back.params.family == family
        assert back.seed == 21
        assert back.macro_radius == 11.0
