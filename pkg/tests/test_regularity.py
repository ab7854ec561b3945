"""Minimal radius, K fields, moments, gradient-integrability report."""

import math

import numpy as np
import pytest

from czlab.czkit import derive_exponents
from czlab.errors import CalibrationError, ValidationError
from czlab.flux import FluxParams, sample_environment
from czlab.lattice import Ball, Grid, ScalarField, ladder_radii
from czlab.regularity import (
    KField,
    ProbeConfig,
    build_K_field,
    compute_Y_R,
    jensen_gap,
    k_field_nodal,
    k_tail_concavity,
    membership_A,
    minimal_radius,
    verify_w1p,
)
from fractions import Fraction as F


def affine(grid, gx, gy):
    x, y = grid.node_coords()
    return ScalarField(grid, gx * x + gy * y)


def test_minimal_radius_affine():
    g = Grid(16.0, 0.25)
    u = affine(g, 2.0, 1.0)
    region = Ball((0.0, 0.0), 16.0)
    rep = minimal_radius(u, region, C_lip=1.0)
    base = ladder_radii(g, 0.0, max_radius=8.0)[0]
    assert rep.minimal_radius == pytest.approx(base)
    assert rep.M_drive == pytest.approx(math.sqrt(5.0))
    assert rep.X_estimate == pytest.approx(base / math.log(2 + math.sqrt(5.0)))
    assert rep.oscillation_M >= 0.0


def test_minimal_radius_impossible_bound():
    g = Grid(16.0, 0.25)
    u = affine(g, 1.0, 0.0)
    with pytest.raises(CalibrationError):
        minimal_radius(u, Ball((0.0, 0.0), 16.0), C_lip=0.0)


def test_minimal_radius_monotone_in_C_lip():
    g = Grid(16.0, 0.25)
    env = sample_environment(1, 16.0, FluxParams(lambda_ellipticity=4.0))
    from czlab.solver import DirichletProblem, solve

    rng = np.random.default_rng(0)
    bdata = ScalarField(g, rng.normal(0, 1, (g.node_count,) * 2))
    u = solve(DirichletProblem(env, "box", bdata, tolerance=1e-9)).solution
    region = Ball((0.0, 0.0), 12.0)
    prev = math.inf
    for C in (1.2, 1.5, 2.0, 4.0, 8.0):
        try:
            r = minimal_radius(u, region, C_lip=C).minimal_radius
        except CalibrationError:
            continue
        assert r <= prev + 1e-12
        prev = r


def test_minimal_radius_bruteforce_scan():
    # cross-check the suffix rule against an explicit scan over ladder radii
    g = Grid(16.0, 0.25)
    env = sample_environment(6, 16.0, FluxParams(lambda_ellipticity=4.0))
    from czlab.lattice import disc_average
    from czlab.regularity import _grad_sq_nodal
    from czlab.solver import DirichletProblem, solve

    u = solve(DirichletProblem(env, "box", affine(g, 1.0, 1.0), tolerance=1e-9)).solution
    region = Ball((0.0, 0.0), 12.0)
    C = 1.3
    rep = minimal_radius(u, region, C_lip=C)
    phi = _grad_sq_nodal(u)
    M2 = disc_average(phi, region.center, region.radius)
    radii = ladder_radii(g, 0.0, max_radius=region.radius / 2)
    radii = radii[radii <= region.radius / 2 + 1e-12]
    best = None
    for i, r in enumerate(radii):
        if all(disc_average(phi, region.center, float(rr)) <= C * M2 * (1 + 1e-12)
               for rr in radii[i:]):
            best = float(r)
            break
    assert best == pytest.approx(rep.minimal_radius)


def test_membership_trivial_cases():
    g = Grid(16.0, 0.25)
    ones = ScalarField(g, np.ones((g.node_count,) * 2))
    ok, worst = membership_A(affine(g, 1.0, 0.0), Ball((0.0, 0.0), 4.0), ones)
    assert ok and worst == pytest.approx(1.0, abs=0.05)
    ok, worst = membership_A(ScalarField(g, np.zeros((g.node_count,) * 2)),
                             Ball((0.0, 0.0), 4.0), ones)
    assert ok and worst == 0.0


def test_membership_self_consistent_maximizer():
    g = Grid(16.0, 0.25)
    env = sample_environment(4, 16.0, FluxParams(lambda_ellipticity=4.0))
    from czlab.lattice import disc_average, disc_average_map
    from czlab.regularity import _grad_sq_nodal
    from czlab.solver import DirichletProblem, solve

    u = solve(DirichletProblem(env, "box", affine(g, 1.0, 0.5), tolerance=1e-9)).solution
    ball = Ball((0.0, 0.0), 4.0)
    phi = _grad_sq_nodal(u)
    global_avg = disc_average(phi, ball.center, 2 * ball.radius)
    kstar = ScalarField(g, disc_average_map(phi, 1.0) / global_avg)
    ok, worst = membership_A(u, ball, kstar)
    assert ok
    assert worst == pytest.approx(1.0, rel=1e-9)


def test_build_K_field_invariants():
    env = sample_environment(3, 16.0, FluxParams(lambda_ellipticity=4.0))
    kf = build_K_field(env, ProbeConfig(r_probe=6.0, stride=8, C_lip=2.0))
    assert np.all(kf.cell_K >= 1.0)
    assert np.all(kf.cell_X >= 1.0)
    assert kf.censored_fraction <= 0.01
    # K = X^d log^d(2+X) by construction
    np.testing.assert_allclose(
        kf.cell_K, kf.cell_X ** 2 * np.log(2 + kf.cell_X) ** 2, rtol=1e-12
    )
    nod = k_field_nodal(kf)
    assert nod.values.shape == (kf.grid.node_count,) * 2


def test_constant_environment_K_constant():
    env = sample_environment(7, 16.0, FluxParams(lambda_ellipticity=1.0))
    kf = build_K_field(env, ProbeConfig(r_probe=6.0, stride=8, C_lip=2.0))
    probed_vals = kf.cell_K[kf.probed]
    assert np.max(probed_vals) - np.min(probed_vals) < 1e-9


def test_compute_Y_R_unit_and_homogeneity():
    env = sample_environment(3, 16.0, FluxParams(lambda_ellipticity=4.0))
    kf = build_K_field(env, ProbeConfig(r_probe=6.0, stride=8, C_lip=2.0))
    kf.cell_K[:] = 1.0
    rep = compute_Y_R(kf, 4.0, 8.0, C_Y=2.0)
    assert rep.Z_R == 1.0 and rep.Y_R == 2.0
    kf.cell_K[:] = 2.0
    rep2 = compute_Y_R(kf, 4.0, 8.0, C_Y=2.0)
    assert rep2.Z_R == pytest.approx(2.0 ** 4)
    assert rep2.Y_R / 2.0 == pytest.approx((2.0 ** 4) ** (6.0 / 8.0))
    with pytest.raises(ValidationError):
        compute_Y_R(kf, 8.0, 4.0, C_Y=1.0)


def test_jensen_surrogate_on_sampled_K():
    env = sample_environment(5, 16.0, FluxParams(lambda_ellipticity=4.0))
    kf = build_K_field(env, ProbeConfig(r_probe=6.0, stride=8, C_lip=2.0))
    exps = derive_exponents(4, 8, 3, F(1, 2))
    n = float(exps.n_moment)
    lhs, rhs = jensen_gap(kf.cell_K[kf.probed], 2.0, n, 8.0)
    assert lhs >= rhs * (1 - 1e-12)


def test_k_tail_concavity_exponential_passes():
    # exponential survival is exactly linear in x: no positive bulge
    rng = np.random.default_rng(11)
    k = (1.0 + rng.exponential(2.0, 5000)) ** 2  # so k^0.5 is 1 + Exp(2)
    rep = k_tail_concavity(k, 0.5)
    assert rep.passed, rep.worst_bulge
    assert rep.worst_bulge <= 0.15


def test_k_tail_concavity_bimodal_fails():
    # two far-apart clusters make log-survival a staircase: convex corner
    rng = np.random.default_rng(12)
    k = np.concatenate([
        1.0 + 0.01 * rng.random(4000), 50.0 + 0.01 * rng.random(800)
    ])
    rep = k_tail_concavity(k, 1.0)
    assert not rep.passed


def test_k_tail_concavity_validation():
    with pytest.raises(ValidationError):
        k_tail_concavity(np.ones(10), 0.5)
    with pytest.raises(ValidationError):
        k_tail_concavity(np.ones(100), 0.5)  # no spread


def test_verify_w1p_zero_solution():
    g = Grid(16.0, 0.25)
    exps = derive_exponents(4, 8, 3, F(1, 2))
    u = ScalarField(g, np.zeros((g.node_count,) * 2))
    f2 = ScalarField(g, np.zeros((g.node_count,) * 2))
    rep = verify_w1p(u, f2, Y_R=1.0, exps=exps)
    assert rep.lhs == 0.0
    assert rep.lhs <= rep.rhs
    assert rep.M == 0.0


def test_verify_w1p_maximal_dominates():
    g = Grid(16.0, 0.25)
    env = sample_environment(12, 16.0, FluxParams(lambda_ellipticity=4.0))
    from czlab.lattice import VectorField
    from czlab.solver import DirichletProblem, nodal_from_element, solve

    rng = np.random.default_rng(0)
    ne = g.node_count - 1
    f = VectorField(g, rng.normal(0, 2, (2, ne, ne, 2)) * (rng.random((2, ne, ne, 1)) < 0.05),
                    location="element")
    zero = ScalarField(g, np.zeros((g.node_count,) * 2))
    u = solve(DirichletProblem(env, "box", zero, rhs_vector_field=f, tolerance=1e-9)).solution
    f2 = ScalarField(g, nodal_from_element(g, f.squared_magnitude()))
    exps = derive_exponents(4, 8, 3, F(1, 2))
    rep = verify_w1p(u, f2, Y_R=1.5, exps=exps)
    assert rep.lhs <= rep.lhs_maximal * (1 + 1e-12)
    assert rep.rhs > 0
    assert rep.ratio == rep.lhs / rep.rhs
