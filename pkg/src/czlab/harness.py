"""Seeded Monte Carlo experiment runner and report writer.

One trial = one environment seed pushed through the whole pipeline:
sample, build f, solve, maximal field, tail table, good-lambda rows,
K field, moments, gradient-integrability check.  Everything downstream of
(config, seed) is deterministic, including the emitted files.
"""

from dataclasses import dataclass, asdict, field as dc_field
from fractions import Fraction
import hashlib
import json
import math
import os

import numpy as np

from czlab import calibration
from czlab.czkit import GoodLambdaFields, derive_exponents, good_lambda_report
from czlab.errors import (
    CzlabError,
    FitError,
    GeometryExhaustedError,
    ValidationError,
)
from czlab.flux import FluxParams, LINEAR, NONLINEAR, sample_environment
from czlab.lattice import (
    Ball,
    Grid,
    NormSpec,
    ScalarField,
    VectorField,
    coarsened_norm,
    maximal_fn,
)
from czlab.regularity import (
    ProbeConfig,
    build_K_field,
    compute_Y_R,
    verify_w1p,
)
from czlab.solver import (
    DirichletProblem,
    gradient_field,
    nodal_from_element,
    solve,
)

F_PATTERNS = ("zero", "smooth", "sparse-spikes")
TAIL_J = tuple(range(2, 13))  # thresholds t_star * 2^(j/2)


@dataclass
class ExperimentConfig:
    macro_radius: float = 32.0
    spacing: float = 0.25
    lambda_ellipticity: float = 4.0
    family: str = LINEAR
    perturbation_weight: float = 0.0
    p: Fraction = Fraction(4)
    q: Fraction = Fraction(8)
    m_norm: Fraction = Fraction(3)
    s_integrability: Fraction = Fraction(1, 2)
    f_pattern: str = "sparse-spikes"
    f_amplitude: float = calibration.F_AMPLITUDE
    f_density: float = calibration.F_DENSITY
    n_trials: int = 100
    base_seed: int = 50
    coarsening_h: float = 1.0
    sigma_gl: float = 1.0 / 32.0     # fixed sigma for per-trial good-lambda rows
    c0_gl: float = 1.0 / 4.0         # its c_0 (beta = c0^(2/(p-2)) sigma^(-2/(p-2)))
    C_lip: float = calibration.C_LIP
    C_Y: float = calibration.C_Y
    C_gate: float = calibration.C_GATE
    C_0: float = calibration.C_0
    c_0: float = calibration.C_0_SMALL
    C_climb: float = calibration.C_CLIMB
    c_level: float = calibration.C_LEVEL
    C_meas: float = calibration.C_MEAS
    probe_radius: float = 6.0
    probe_stride: int = 8
    solver_tolerance: float = 1e-8
    output_dir: str = "czlab-out"

    def __post_init__(self):
        if self.f_pattern not in F_PATTERNS:
            raise ValidationError("f_pattern must be one of %s" % (F_PATTERNS,))
        if self.family not in (LINEAR, NONLINEAR):
            raise ValidationError("unknown family %r" % (self.family,))
        if self.n_trials < 1 or self.base_seed < 0:
            raise ValidationError("need n_trials >= 1 and base_seed >= 0")
        if not (0 <= self.f_density <= 1):
            raise ValidationError("f_density must lie in [0, 1]")
        # fail early on anything a trial would reject later
        self.exponents()
        self.flux_params()
        Grid(self.macro_radius, self.spacing)
        beta = self.c0_gl ** (2.0 / (float(self.p) - 2.0)) * self.sigma_gl ** (
            -2.0 / (float(self.p) - 2.0)
        )
        if beta < self.C_gate * (1 - 1e-12):
            raise ValidationError(
                "good-lambda row parameters violate the gate: beta=%g < %g"
                % (beta, self.C_gate)
            )

    def exponents(self):
        return derive_exponents(self.p, self.q, self.m_norm, self.s_integrability)

    def flux_params(self):
        return FluxParams(
            lambda_ellipticity=self.lambda_ellipticity,
            family=self.family,
            perturbation_weight=self.perturbation_weight,
        )

    def grid(self):
        return Grid(self.macro_radius, self.spacing)


_FRACTION_KEYS = ("p", "q", "m_norm", "s_integrability")
_INT_KEYS = ("n_trials", "base_seed", "probe_stride")
_STR_KEYS = ("family", "f_pattern", "output_dir")


def config_to_text(config):
    """Canonical key=value serialization (also what gets hashed)."""
    lines = []
    for key, val in sorted(asdict(config).items()):
        if isinstance(val, Fraction):
            lines.append("%s = %s" % (key, val))
        elif isinstance(val, float):
            lines.append("%s = %.17g" % (key, val))
        else:
            lines.append("%s = %s" % (key, val))
    return "\n".join(lines) + "\n"


def config_hash(config):
    return hashlib.sha256(config_to_text(config).encode()).hexdigest()[:16]


def write_config(path, config):
    with open(path, "w") as fh:
        fh.write(config_to_text(config))


def parse_config(path):
    """Read the plain-text key = value format; '#' starts a comment."""
    kwargs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError("%s:%d: expected key = value" % (path, lineno))
            key, val = (part.strip() for part in line.split("=", 1))
            if key in _FRACTION_KEYS:
                kwargs[key] = Fraction(val)
            elif key in _INT_KEYS:
                kwargs[key] = int(val)
            elif key in _STR_KEYS:
                kwargs[key] = val
            else:
                kwargs[key] = float(val)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ValidationError("bad config key: %s" % exc) from None


# ---------------------------------------------------------------------------
# f patterns

def build_f(config, seed):
    """Element vector field f for the trial; deterministic in (config, seed)."""
    grid = config.grid()
    ne = grid.node_count - 1
    vals = np.zeros((2, ne, ne, 2))
    if config.f_pattern == "zero":
        return VectorField(grid, vals, location="element")
    R = grid.macro_radius
    if config.f_pattern == "smooth":
        # fixed smooth divergence-form load, no randomness
        from czlab.solver import element_barycenters
        bx, by = element_barycenters(grid)
        A = config.f_amplitude
        vals[..., 0] = A * np.sin(math.pi * bx / R) * np.cos(math.pi * by / R)
        vals[..., 1] = A * np.cos(math.pi * bx / R) * np.sin(math.pi * by / R)
        return VectorField(grid, vals, location="element")
    # sparse-spikes: constant vector on a sparse random subset of the unit
    # cells centered in B_{R/2 - 2}.  The support is restricted to the half
    # ball so every spike is visible to the tail statistics (which live on
    # B_{R/2}); a spike outside B_R would deflate t_star without ever
    # registering in the maximal field.  The subset has fixed size
    # max(1, round(density * n_candidates)) so no trial is accidentally
    # trivial and t_star is not inflated by crowded realizations.
    nc = int(round(2 * R))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7, nc]))
    cx = np.arange(nc)[:, None] + 0.5 - R
    cy = np.arange(nc)[None, :] + 0.5 - R
    candidates = np.argwhere(np.hypot(cx, cy) <= R / 2.0 - 2.0)
    n_spikes = max(1, int(round(config.f_density * len(candidates))))
    chosen = candidates[rng.choice(len(candidates), size=n_spikes, replace=False)]
    hit = np.zeros((nc, nc), dtype=bool)
    hit[chosen[:, 0], chosen[:, 1]] = True
    angle = rng.uniform(0.0, 2 * math.pi, (nc, nc))
    fx = np.where(hit, config.f_amplitude * np.cos(angle), 0.0)
    fy = np.where(hit, config.f_amplitude * np.sin(angle), 0.0)
    per = int(round(1.0 / grid.spacing))  # elements per unit cell per axis
    fx_e = np.repeat(np.repeat(fx, per, axis=0), per, axis=1)
    fy_e = np.repeat(np.repeat(fy, per, axis=0), per, axis=1)
    for tri in (0, 1):
        vals[tri, ..., 0] = fx_e
        vals[tri, ..., 1] = fy_e
    return VectorField(grid, vals, location="element")


# ---------------------------------------------------------------------------
# trials

@dataclass
class TrialRecord:
    seed: int
    status: str                      # "ok" or "failed"
    error: str = ""
    solve_iterations: int = 0
    solve_residual: float = 0.0
    t_star: float = 0.0
    M: float = 0.0
    tail_thresholds: list = dc_field(default_factory=list)   # T_j / t_star
    tail_measures: list = dc_field(default_factory=list)     # |{M_1 > T_j}| in B_{R/2}
    half_ball_measure: float = 0.0
    goodlambda_rows: list = dc_field(default_factory=list)   # dicts per level
    Y_R: float = 0.0
    Z_R: float = 0.0
    censored_fraction: float = 0.0
    w1p_lhs: float = 0.0
    w1p_rhs: float = 0.0
    w1p_ratio: float = 0.0
    w1p_lhs_maximal: float = 0.0
    k_values: list = dc_field(default_factory=list)          # probed-cell K values
    elapsed: float = 0.0


def run_trial(config, seed):
    """One full experiment; never raises on per-trial pipeline errors."""
    import time

    t0 = time.time()
    try:
        record = _run_trial_inner(config, seed)
    except CzlabError as exc:
        record = TrialRecord(seed=int(seed), status="failed",
                             error="%s: %s" % (type(exc).__name__, exc))
    record.elapsed = round(time.time() - t0, 3)
    return record


def _run_trial_inner(config, seed):
    grid = config.grid()
    R = grid.macro_radius
    exps = config.exponents()
    p = float(exps.p)
    env = sample_environment(seed, R, config.flux_params())
    f = build_f(config, seed)
    zero = ScalarField(grid, np.zeros((grid.node_count,) * 2))
    rep = solve(DirichletProblem(env, "box", zero, rhs_vector_field=f,
                                 tolerance=config.solver_tolerance))
    grad = gradient_field(grid, rep.solution)
    mu2 = ScalarField(grid, nodal_from_element(grid, grad.squared_magnitude()))
    f2 = ScalarField(grid, nodal_from_element(grid, f.squared_magnitude()))
    h = config.coarsening_h
    mu2_max = maximal_fn(mu2, h)

    BR = Ball((0.0, 0.0), R)
    t_star = (
        coarsened_norm(mu2, NormSpec(1.0, h, BR))
        + coarsened_norm(f2, NormSpec(p / 2.0, h, BR))
    )
    half = grid.ball_mask(Ball((0.0, 0.0), R / 2.0))
    meas = grid.spacing ** grid.dimension
    half_measure = float(np.count_nonzero(half)) * meas
    thresholds = [2.0 ** (j / 2.0) for j in TAIL_J]
    tails = [
        float(np.count_nonzero(half & (mu2_max.values > mult * t_star))) * meas
        for mult in thresholds
    ]

    # K field and moments
    kf = build_K_field(env, ProbeConfig(
        r_probe=config.probe_radius, stride=config.probe_stride,
        C_lip=config.C_lip, tolerance=config.solver_tolerance,
    ), grid_spacing=config.spacing)
    if kf.censored_fraction > 0.01:
        raise ValidationError(
            "trial discarded: censored probe fraction %g > 1%%" % kf.censored_fraction
        )
    moments = compute_Y_R(kf, p, float(exps.q), config.C_Y,
                          s=float(exps.s_integrability), n=float(exps.n_moment))

    # good-lambda rows at the tail ladder levels, fixed (sigma, omega)
    sigma = config.sigma_gl
    beta = config.c0_gl ** (2.0 / (p - 2.0)) * sigma ** (-2.0 / (p - 2.0))
    q = float(exps.q)
    omega = beta ** ((q - 2.0) / q) * sigma ** (2.0 / q)
    f2_max = maximal_fn(f2, h)
    from czlab.regularity import k_field_nodal
    kq2 = ScalarField(grid, k_field_nodal(kf).values ** (q / 2.0))
    kq2_max = maximal_fn(kq2, h)
    fields = GoodLambdaFields(mu2_max=mu2_max, f2=f2, kq2=kq2,
                              f2_max=f2_max, kq2_max=kq2_max)
    rows = []
    for mult in thresholds if t_star > 0 else ():
        t = mult * t_star
        try:
            gl = good_lambda_report(
                fields, t, sigma, omega, exps, R,
                gate_constant=config.C_gate, c_climb=config.C_climb,
                c_level=config.c_level,
            )
            rows.append({
                "t_over_tstar": mult, "status": "ok",
                "lhs": gl.lhs, "rhs_decay": gl.rhs_decay,
                "rhs_f": gl.rhs_f, "rhs_k": gl.rhs_k, "c_meas": gl.c_meas,
                "n_balls": gl.n_balls, "n_good": gl.n_good,
                "n_bad_f": gl.n_bad_f, "n_bad_k": gl.n_bad_k,
                "n_decay_violations": gl.n_decay_violations,
            })
        except GeometryExhaustedError as exc:
            rows.append({"t_over_tstar": mult, "status": "aborted",
                         "error": str(exc)})

    w1p = verify_w1p(rep.solution, f2, moments.Y_R, exps, coarsening_h=h)

    return TrialRecord(
        seed=int(seed), status="ok",
        solve_iterations=rep.iterations, solve_residual=rep.final_residual,
        t_star=t_star, M=w1p.M,
        tail_thresholds=thresholds, tail_measures=tails,
        half_ball_measure=half_measure,
        goodlambda_rows=rows,
        Y_R=moments.Y_R, Z_R=moments.Z_R,
        censored_fraction=kf.censored_fraction,
        w1p_lhs=w1p.lhs, w1p_rhs=w1p.rhs, w1p_ratio=w1p.ratio,
        w1p_lhs_maximal=w1p.lhs_maximal,
        k_values=[float(v) for v in kf.cell_K[kf.probed]],
    )


def record_path(config, seed):
    return os.path.join(config.output_dir, "trial_%06d.json" % seed)


def save_record(config, record):
    os.makedirs(config.output_dir, exist_ok=True)
    with open(record_path(config, record.seed), "w") as fh:
        json.dump(asdict(record), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_record(path):
    with open(path) as fh:
        return TrialRecord(**json.load(fh))


def run_ensemble(config, seeds=None, workers=None, progress=None):
    """Run trials (optionally in a process pool) and persist them in seed order.

    Worker count comes from the CZLAB_WORKERS environment variable when not
    given; parallelism cannot change any numeric output because trials are
    independent and aggregation is by sorted seed.
    """
    if seeds is None:
        seeds = range(config.base_seed, config.base_seed + config.n_trials)
    seeds = sorted(int(s) for s in seeds)
    if workers is None:
        workers = int(os.environ.get("CZLAB_WORKERS", "1"))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_trial_star, [(config, s) for s in seeds]))
    else:
        records = []
        for s in seeds:
            records.append(run_trial(config, s))
            if progress:
                progress(records[-1])
    records.sort(key=lambda r: r.seed)
    for rec in records:
        save_record(config, rec)
    return records


def _trial_star(args):
    return run_trial(*args)


# ---------------------------------------------------------------------------
# pooling and fitting

@dataclass
class TailTable:
    thresholds: list                 # T / t_star
    pooled_fractions: list
    n_trials: int
    predicted_slope: float
    fitted_slope: float = math.nan
    fitted_stderr: float = math.nan
    fit_window: tuple = (4.0, 64.0)
    fit_residuals: list = dc_field(default_factory=list)


def pool_tails(records, exps):
    """Pooled tail fractions over the ok trials (tail mass / total half-ball mass)."""
    ok = [r for r in records if r.status == "ok"]
    if not ok:
        raise ValidationError("no successful trials to pool")
    thresholds = ok[0].tail_thresholds
    total = sum(r.half_ball_measure for r in ok)
    pooled = []
    for j in range(len(thresholds)):
        pooled.append(sum(r.tail_measures[j] for r in ok) / total)
    if any(pooled[j] < pooled[j + 1] - 1e-15 for j in range(len(pooled) - 1)):
        raise ValidationError("pooled tail fractions not monotone")
    return TailTable(
        thresholds=list(thresholds), pooled_fractions=pooled, n_trials=len(ok),
        predicted_slope=float(exps.tail_slope()),
    )


def fit_tail_exponent(table, window=(4.0, 64.0)):
    """Least-squares slope of log fraction vs log threshold inside the window."""
    ts = np.asarray(table.thresholds)
    fr = np.asarray(table.pooled_fractions)
    keep = (ts >= window[0] * (1 - 1e-12)) & (ts <= window[1] * (1 + 1e-12)) & (fr > 0)
    if np.count_nonzero(keep) < 5:
        raise FitError(
            "need >= 5 nonzero tail points in window %s, have %d"
            % (window, int(np.count_nonzero(keep)))
        )
    x = np.log(ts[keep])
    y = np.log(fr[keep])
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    fitted = A @ coef
    resid = y - fitted
    dof = max(1, len(x) - 2)
    sxx = float(np.sum((x - np.mean(x)) ** 2))
    stderr = math.sqrt(float(np.sum(resid ** 2)) / dof / sxx) if sxx > 0 else math.inf
    table.fitted_slope = slope
    table.fitted_stderr = stderr
    table.fit_window = tuple(window)
    table.fit_residuals = [float(r) for r in resid]
    return slope, stderr
