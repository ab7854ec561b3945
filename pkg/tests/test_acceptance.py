"""Top-level acceptance checks.

Each test covers one acceptance criterion and prints a single PASS/FAIL
line (run with -s to see them live).  The ensemble-backed checks share a
session fixture that runs the 100 evaluation trials (seeds 50-149) at
R=32 with the default experiment configuration; the calibration
constants they compare against were frozen on seeds 0-49 and live in
czlab.calibration.
"""

import math
import time
from fractions import Fraction as F

import numpy as np
import pytest

from czlab import calibration
from czlab.czkit import derive_exponents, vitali_select
from czlab.flux import FluxParams, NONLINEAR, sample_environment
from czlab.harness import (
    ExperimentConfig,
    build_f,
    fit_tail_exponent,
    pool_tails,
    run_ensemble,
)
from czlab.lattice import (
    Ball,
    DEFAULT_LADDER_RATIO,
    Grid,
    NormSpec,
    ScalarField,
    coarsened_norm,
    cumulative_disc_counts,
    disc_average,
    disc_halfwidths,
    maximal_fn,
)
from czlab.regularity import k_tail_concavity
from czlab.report import emit_report
from czlab.solver import (
    DirichletProblem,
    box_domain,
    element_coefficients,
    gradient_field,
    nodal_from_element,
    solve,
    stiffness_matrix,
)

EVAL_SEEDS = range(50, 150)


def _report(num, name, ok, detail=""):
    line = "ACCEPTANCE %2d %-24s %s%s" % (
        num, name, "PASS" if ok else "FAIL", " | " + detail if detail else ""
    )
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def eval_ensemble(tmp_path_factory):
    out = tmp_path_factory.mktemp("eval")
    cfg = ExperimentConfig(output_dir=str(out))
    t0 = time.time()
    records = run_ensemble(cfg, seeds=EVAL_SEEDS)
    return cfg, records, time.time() - t0


# ---------------------------------------------------------------------------
# 1. exponent algebra

def test_criterion_1_exponent_algebra():
    t0 = time.time()
    e = derive_exponents(4, 8, 3, F(1, 2))
    exact = (e.theta == F(3, 4) and e.nu == F(1, 2) and e.m_schedule == F(8))
    n_checked = 0
    for pn in range(2, 42):
        p = F(2) + F(pn, 7)
        q = p + F(1 + (pn % 5), 3)
        m = F(2) + (p - 2) * F(1 + (pn % 3), 5)
        if not (2 < m < p):
            continue
        s = F(4, 1) / (m + 2) / 2
        for dq in range(1, 6):
            ee = derive_exponents(p, q + F(dq, 11), m, s)
            qq = q + F(dq, 11)
            assert ee.theta == (p * p + 2 * p) / (p * p + 2 * qq)
            assert ee.theta == p / (2 * ee.m_schedule) + 4 * ee.nu / p
            n_checked += 1
    elapsed = time.time() - t0
    _report(1, "exponent algebra", exact and n_checked >= 200 and elapsed < 1.0,
            "%d cases, identity exact, %.2fs" % (n_checked, elapsed))


# ---------------------------------------------------------------------------
# 2. solver oracle equivalence

def test_criterion_2_solver_oracle():
    t0 = time.time()
    grid = Grid(4.0, 0.5)  # 8x8 box of unit cells at delta = 1/2
    env = sample_environment(13, 10.0, FluxParams(lambda_ellipticity=4.0))
    lam, _ = element_coefficients(env, grid)
    spec = box_domain(grid)
    A = stiffness_matrix(grid, lam, spec.elem_mask).toarray()
    rng = np.random.default_rng(2)
    bdata = ScalarField(grid, rng.normal(0, 1, (grid.node_count,) * 2))
    rep = solve(DirichletProblem(env, "box", bdata, tolerance=1e-12))
    inside = spec.inside.ravel()
    u_b = np.where(spec.boundary, bdata.values, 0.0).ravel()
    dense = u_b.copy()
    dense[inside] = np.linalg.solve(A[np.ix_(inside, inside)], -(A @ u_b)[inside])
    dense = dense.reshape((grid.node_count,) * 2)

    def h1(vals):
        du = gradient_field(grid, ScalarField(grid, vals))
        return float(np.sqrt(np.mean(vals ** 2)) + np.sqrt(np.mean(du.squared_magnitude())))

    rel = h1(rep.solution.values - dense) / h1(dense)

    env1 = sample_environment(0, 10.0, FluxParams(lambda_ellipticity=1.0))
    g1 = Grid(10.0, 0.5)
    x, y = g1.node_coords()
    aff = ScalarField(g1, 2.0 * x - y + 0.5)
    rep1 = solve(DirichletProblem(env1, "box", aff))
    aff_err = float(np.max(np.abs(rep1.solution.values - aff.values)))
    elapsed = time.time() - t0
    _report(2, "solver oracle", rel < 1e-8 and aff_err < 1e-8 and elapsed < 10.0,
            "dense rel %.2e, affine %.2e, %.1fs" % (rel, aff_err, elapsed))


# ---------------------------------------------------------------------------
# 3. monotone contraction

def test_criterion_3_contraction():
    lam = 2.0
    bound = math.sqrt(1.0 - lam ** -4.0) + 0.05
    grid = Grid(10.0, 0.5)
    params = FluxParams(lambda_ellipticity=lam, family=NONLINEAR,
                        perturbation_weight=0.5)
    rng = np.random.default_rng(0)
    worst = 0.0
    for trial in range(20):
        env = sample_environment(trial, 10.0, params)
        bdata = ScalarField(grid, rng.normal(0, 1, (grid.node_count,) * 2))
        rep = solve(DirichletProblem(env, "box", bdata, tolerance=1e-10))
        assert rep.converged
        trace = rep.energy_trace
        k = min(9, len(trace))
        worst = max(worst, (trace[-1] / trace[-k]) ** (1.0 / (k - 1)))
    _report(3, "monotone contraction", worst <= bound,
            "worst ratio %.4f <= %.4f on 20 problems" % (worst, bound))


# ---------------------------------------------------------------------------
# 4. maximal-function inequalities

def _random_maximal_field(seed, R=16.0, delta=0.25):
    # same lognormal-plus-spikes family the regression constants were
    # frozen on (calibration seeds 0-49); here evaluated on seeds 50-149
    g = Grid(R, delta)
    rng = np.random.default_rng(seed)
    n = g.node_count
    vals = rng.lognormal(0.0, 1.0, (n, n))
    spikes = rng.random((n, n)) < 0.001
    vals = np.where(spikes, vals * rng.uniform(50, 500, (n, n)), vals)
    return ScalarField(g, vals)


def test_criterion_4_maximal_inequalities():
    t0 = time.time()
    h = 1.0
    worst = {"weak": 0.0, "s3": 0.0, "s4": 0.0, "inf": 0.0}
    for seed in EVAL_SEEDS:
        phi = _random_maximal_field(seed)
        g = phi.grid
        box = Ball((0.0, 0.0), g.diameter / 2)
        m = maximal_fn(phi, h)
        meas = g.spacing ** 2
        l1 = coarsened_norm(phi, NormSpec(1.0, h, box, normalized=False))
        for t in np.quantile(m.values, [0.5, 0.9, 0.99, 0.999]):
            lhs = t * np.count_nonzero(m.values > t) * meas
            worst["weak"] = max(worst["weak"], lhs / l1)
        phi2 = ScalarField(g, phi.values ** 2)
        for p, key in ((3.0, "s3"), (4.0, "s4")):
            lhs = coarsened_norm(m, NormSpec(p, 0.0, box, normalized=False)) ** p
            rhs = coarsened_norm(phi2, NormSpec(p / 2, h, box, normalized=False)) ** (p / 2)
            worst[key] = max(worst[key], lhs / rhs)
        inner = g.ball_mask(Ball((0.0, 0.0), g.macro_radius / 8))
        worst["inf"] = max(
            worst["inf"],
            m.values[inner].min() / disc_average(phi, (0.0, 0.0), g.macro_radius),
        )
    ok = (worst["weak"] <= calibration.C_WEAK
          and worst["s3"] <= calibration.C_STRONG_P3
          and worst["s4"] <= calibration.C_STRONG_P4
          and worst["inf"] <= calibration.C_INF)

    # exhaustive ladder sandwich at R=8, delta=1/2
    from czlab.kernels import disc_sum_map

    g = Grid(8.0, 0.5)
    rng = np.random.default_rng(7)
    phi = ScalarField(g, rng.lognormal(0, 1, (g.node_count,) * 2))
    m = maximal_fn(phi, h)
    counts = cumulative_disc_counts(int((g.diameter / g.spacing) ** 2) + 1)
    vals = np.abs(phi.masked_values())
    brute = np.zeros_like(vals)
    base_s = int((h / g.spacing) ** 2)
    for s in range(base_s, int((g.diameter / g.spacing) ** 2) + 1):
        if s > base_s and counts[s] == counts[s - 1]:
            continue
        np.maximum(brute, disc_sum_map(vals, disc_halfwidths(s)) / counts[s], out=brute)
    sandwich = (np.all(m.values <= brute + 1e-12)
                and np.all(brute <= DEFAULT_LADDER_RATIO ** 2 * m.values + 1e-12))
    elapsed = time.time() - t0
    _report(4, "maximal inequalities", ok and sandwich and elapsed < 120.0,
            "worst w %.3f s3 %.4f s4 %.5f inf %.2f, sandwich %s, %.0fs"
            % (worst["weak"], worst["s3"], worst["s4"], worst["inf"],
               sandwich, elapsed))


# ---------------------------------------------------------------------------
# 5. Vitali properties

def test_criterion_5_vitali():
    rng = np.random.default_rng(42)
    failures = 0
    for _ in range(1000):
        n = int(rng.integers(1, 25))
        balls = [
            ((float(rng.uniform(-20, 20)), float(rng.uniform(-20, 20))),
             float(rng.uniform(0.2, 4.0)))
            for _ in range(n)
        ]
        kept = vitali_select(balls)
        C = np.array([b[0] for b in balls])
        Rr = np.array([b[1] for b in balls])
        kc, kr = C[kept], Rr[kept]
        for a in range(len(kept)):
            for b in range(a + 1, len(kept)):
                if np.hypot(*(kc[a] - kc[b])) < kr[a] + kr[b] - 1e-12:
                    failures += 1
        for i in range(len(balls)):
            if not any(np.hypot(*(C[i] - kc[j])) + Rr[i] <= 5 * kr[j] + 1e-9
                       for j in range(len(kept))):
                failures += 1
    _report(5, "Vitali covering", failures == 0,
            "1000 families, %d failures" % failures)


# ---------------------------------------------------------------------------
# 6. good-lambda empirical inequality (evaluation ensemble)

def test_criterion_6_good_lambda(eval_ensemble):
    cfg, records, elapsed = eval_ensemble
    ok_records = [r for r in records if r.status == "ok"]
    n_rows = n_aborted = n_violations = 0
    worst = 0.0
    for r in ok_records:
        for row in r.goodlambda_rows:
            if row["status"] != "ok":
                n_aborted += 1
                continue
            n_rows += 1
            n_violations += row["n_decay_violations"]
            if row["c_meas"] > worst:
                worst = row["c_meas"]
    ok = (len(ok_records) == len(records)
          and n_rows > 0
          and worst <= calibration.C_MEAS
          and n_violations == 0
          and elapsed < 1800.0)
    _report(6, "good-lambda inequality", ok,
            "%d rows (%d aborted), worst c_meas %.4g <= %g, "
            "decay violations %d, ensemble %.0fs"
            % (n_rows, n_aborted, worst, calibration.C_MEAS,
               n_violations, elapsed))


# ---------------------------------------------------------------------------
# 7. tail exponent (evaluation ensemble)

def test_criterion_7_tail_exponent(eval_ensemble):
    cfg, records, _ = eval_ensemble
    table = pool_tails(records, cfg.exponents())
    slope, stderr = fit_tail_exponent(table, window=(4.0, 64.0))
    target = float(cfg.exponents().tail_slope()) + 0.15  # -0.35 at (4,8)
    _report(7, "tail exponent", slope <= target,
            "fitted %.3f +/- %.3f <= %.2f (predicted %.2f)"
            % (slope, stderr, target, table.predicted_slope))


# ---------------------------------------------------------------------------
# 8. constant-coefficient CZ sanity

def test_criterion_8_constant_coefficient():
    ratios = {}
    for R in (16.0, 32.0, 64.0):
        cfg = ExperimentConfig(macro_radius=R, f_pattern="smooth",
                               lambda_ellipticity=1.0, output_dir="/tmp/czsan")
        grid = cfg.grid()
        env = sample_environment(0, R, cfg.flux_params())
        f = build_f(cfg, 0)
        zero = ScalarField(grid, np.zeros((grid.node_count,) * 2))
        rep = solve(DirichletProblem(env, "box", zero, rhs_vector_field=f,
                                     tolerance=1e-10))
        gmag = ScalarField(grid, np.sqrt(
            nodal_from_element(grid, gradient_field(grid, rep.solution).squared_magnitude())))
        fmag = ScalarField(grid, np.sqrt(
            nodal_from_element(grid, f.squared_magnitude())))
        num = coarsened_norm(gmag, NormSpec(4.0, 1.0, Ball((0.0, 0.0), R / 2)))
        den = (coarsened_norm(gmag, NormSpec(2.0, 1.0, Ball((0.0, 0.0), R)))
               + coarsened_norm(fmag, NormSpec(4.0, 1.0, Ball((0.0, 0.0), R))))
        ratios[R] = num / den
    vals = list(ratios.values())
    drift = (max(vals) - min(vals)) / (sum(vals) / len(vals))
    _report(8, "constant-coefficient CZ", drift < 0.10,
            "ratios " + " ".join("%.4f" % v for v in vals)
            + ", drift %.1f%%" % (100 * drift))


# ---------------------------------------------------------------------------
# 9. W^{1,p} verification (evaluation ensemble)

def test_criterion_9_w1p(eval_ensemble):
    cfg, records, _ = eval_ensemble
    ok_records = [r for r in records if r.status == "ok"]
    failures = [r for r in ok_records if not (r.w1p_ratio <= 1.0)]
    for r in failures:
        print("    w1p failure seed %d: lhs %.4g rhs %.4g ratio %.4g M %.4g Y_R %.4g"
              % (r.seed, r.w1p_lhs, r.w1p_rhs, r.w1p_ratio, r.M, r.Y_R))
    rate = 1.0 - len(failures) / len(ok_records)
    _report(9, "W1p verification", rate >= 0.95,
            "ratio <= 1 on %.0f%% of %d trials" % (100 * rate, len(ok_records)))


# ---------------------------------------------------------------------------
# 10. moment stability (evaluation ensemble)

def test_criterion_10_moment_stability(eval_ensemble):
    cfg, records, _ = eval_ensemble
    ok_records = [r for r in records if r.status == "ok"]
    s = float(cfg.exponents().s_integrability)
    ex = np.exp(np.array([r.Y_R for r in ok_records]) ** s)
    m50, m100 = float(np.mean(ex[:50])), float(np.mean(ex))
    change = max(m50, m100) / min(m50, m100)
    pooled_k = np.concatenate([r.k_values for r in ok_records])
    conc = k_tail_concavity(pooled_k, float(cfg.exponents().n_moment))
    _report(10, "moment stability", change < 2.0 and conc.passed,
            "mean exp(Y^s) %.3f vs %.3f (x%.2f), concavity bulge %.3f <= %.2f"
            % (m50, m100, change, conc.worst_bulge, conc.tolerance))


# ---------------------------------------------------------------------------
# 11. determinism

def test_criterion_11_determinism(tmp_path):
    out = tmp_path / "run"
    cfg = ExperimentConfig(macro_radius=16.0, n_trials=3, base_seed=50,
                           probe_radius=6.0, probe_stride=8,
                           output_dir=str(out))

    def one_run():
        records = run_ensemble(cfg)
        paths = emit_report(records, cfg)
        blobs = {}
        for name, p in sorted(paths.items()):
            with open(p, "rb") as fh:
                blobs[name] = fh.read()
        return blobs

    first = one_run()
    import shutil

    shutil.rmtree(out)
    second = one_run()
    same = set(first) == set(second) and all(first[k] == second[k] for k in first)
    _report(11, "determinism", same,
            "%d report files byte-identical across two runs" % len(first))
