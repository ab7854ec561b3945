"""Lipschitz-scale instrumentation: minimal radius, X / K fields, moments.

Everything here is measurement, not proof: X is estimated relative to the
calibration constant C_lip, K fields are built from a finite affine probe
family, and the moment pipeline turns them into the Y_R / Z_R quantities
whose empirical stability is the point of the ensemble runs.
"""

from dataclasses import dataclass, field as dc_field
import math

import numpy as np

from czlab.errors import CalibrationError, NonConvergenceError, ValidationError
from czlab.lattice import (
    Ball,
    NormSpec,
    ScalarField,
    coarsened_norm,
    disc_average,
    disc_average_map,
    ladder_radii,
    maximal_fn,
)
from czlab.solver import (
    DirichletProblem,
    ball_domain,
    gradient_field,
    nodal_from_element,
    solve,
)


@dataclass
class LipschitzReport:
    minimal_radius: float
    M_drive: float
    X_estimate: float
    C_lip: float
    oscillation_M: float       # R^-1 (inf_a avg |u - a|^2)^(1/2) variant, logged only
    worst_ratio: float         # max over qualifying radii of avg / M^2


@dataclass
class KField:
    """Per-unit-cell K(z) = X(z)^d log^d(2+X(z)) with probe bookkeeping."""

    grid: object
    cell_K: np.ndarray          # (2R, 2R)
    cell_X: np.ndarray
    probed: np.ndarray          # bool, cells actually probed
    censored: np.ndarray        # bool, probe failed; value nearest-filled
    C_lip: float

    @property
    def censored_fraction(self):
        return float(np.count_nonzero(self.censored)) / self.censored.size


@dataclass
class MomentReport:
    Y_R: float
    Z_R: float
    p: float
    q: float
    s: float
    n: float
    C_Y: float
    censored_fraction: float = 0.0


def _grad_sq_nodal(u):
    grid = u.grid
    grad = gradient_field(grid, u)
    return ScalarField(grid, nodal_from_element(grid, grad.squared_magnitude()))


def minimal_radius(u, region, C_lip, grad_sq=None):
    """Smallest ladder radius r with avg_{B_rho}|grad u|^2 <= C_lip M^2 for
    every larger ladder rho up to half the region radius.

    M here is the gradient-average drive (avg_{B_R}|grad u|^2)^(1/2); the
    R^-1 oscillation variant is computed and reported alongside but drives
    nothing.
    """
    if C_lip <= 0:
        raise CalibrationError("C_lip must be > 0")
    grid = u.grid
    R = region.radius
    phi = grad_sq if grad_sq is not None else _grad_sq_nodal(u)
    M2 = disc_average(phi, region.center, R)
    M = math.sqrt(M2)

    mask = grid.ball_mask(region)
    vals = u.values[mask]
    area = np.count_nonzero(mask)
    osc = float(np.mean((vals - np.mean(vals)) ** 2))  # inf over constants a
    osc_M = math.sqrt(osc) / R

    radii = ladder_radii(grid, 0.0, max_radius=R / 2.0)
    radii = radii[radii <= R / 2.0 + 1e-12]
    if len(radii) == 0:
        raise CalibrationError("no ladder radius below half the region radius")
    avgs = np.array([disc_average(phi, region.center, float(r)) for r in radii])
    bound = C_lip * M2
    ok = avgs <= bound * (1.0 + 1e-12)
    # qualifying r: all ladder radii >= r satisfy the bound
    good_suffix = np.flip(np.cumprod(np.flip(ok))).astype(bool)
    if not good_suffix.any():
        worst = float(np.max(avgs / max(bound, 1e-300)))
        raise CalibrationError(
            "no minimal radius: worst ratio avg/(C_lip M^2) = %g" % worst
        )
    idx = int(np.argmax(good_suffix))
    r_star = float(radii[idx])
    worst = float(np.max(avgs[good_suffix] / max(M2, 1e-300)))
    return LipschitzReport(
        minimal_radius=r_star,
        M_drive=M,
        X_estimate=r_star / math.log(2.0 + M),
        C_lip=C_lip,
        oscillation_M=osc_M,
        worst_ratio=worst,
    )


@dataclass(frozen=True)
class ProbeConfig:
    r_probe: float = 8.0
    stride: int = 4
    slopes: tuple = ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
    C_lip: float = 8.0
    tolerance: float = 1e-8
    max_iterations: int = 10000


def build_K_field(environment, probe_config=ProbeConfig(), grid_spacing=0.25):
    """Per-cell X and K estimates from local affine-data probes.

    For each cell center z on the stride sublattice with B_{r_probe}(z)
    inside the box, solve the f=0 problem with affine boundary data for
    each probe slope and take the worst-case X (clamped to >= 1, per the
    theorem's normalization).  Failed probes are censored and, like
    unprobed cells, filled from the nearest successful probe.
    """
    from czlab.lattice import Grid

    R = environment.macro_radius
    nc = environment.n_cells
    grid = Grid(R, grid_spacing)
    X, Y = grid.node_coords()
    n = grid.node_count

    cfg = probe_config
    cell_X = np.full((nc, nc), np.nan)
    censored = np.zeros((nc, nc), dtype=bool)
    probed = np.zeros((nc, nc), dtype=bool)

    centers = []
    for i in range(0, nc, cfg.stride):
        for j in range(0, nc, cfg.stride):
            z = (-R + i + 0.5, -R + j + 0.5)
            if max(abs(z[0]), abs(z[1])) + cfg.r_probe <= R + 1e-12:
                centers.append((i, j, z))
    if not centers:
        raise ValidationError("r_probe %g leaves no probeable cell" % cfg.r_probe)

    # mask off the outermost node ring: outside the discrete Dirichlet
    # domain the solution array holds zeros, and the fake gradient jump at
    # the rim would otherwise dominate every disc average
    inner_shrink = 2.0 * grid.spacing

    for i, j, z in centers:
        ball = Ball(z, cfg.r_probe)
        interior = grid.ball_mask(Ball(z, cfg.r_probe - inner_shrink))
        worst_X = 1.0
        try:
            for g in cfg.slopes:
                bdata = ScalarField(grid, g[0] * X + g[1] * Y)
                prob = DirichletProblem(
                    environment, ball, bdata,
                    tolerance=cfg.tolerance, max_iterations=cfg.max_iterations,
                )
                rep = solve(prob)
                phi = _grad_sq_nodal(rep.solution)
                phi = ScalarField(grid, phi.values, mask=interior)
                lrep = minimal_radius(rep.solution, ball, cfg.C_lip, grad_sq=phi)
                worst_X = max(worst_X, lrep.X_estimate)
            cell_X[i, j] = worst_X
            probed[i, j] = True
        except (NonConvergenceError, CalibrationError):
            censored[i, j] = True

    done = np.argwhere(probed)
    if len(done) == 0:
        raise CalibrationError("all probes censored; cannot build K field")
    # nearest-fill everything not successfully probed
    from scipy.spatial import cKDTree

    tree = cKDTree(done)
    todo = np.argwhere(~probed)
    if len(todo):
        _, nearest = tree.query(todo)
        cell_X[todo[:, 0], todo[:, 1]] = cell_X[done[nearest][:, 0], done[nearest][:, 1]]
    cell_K = cell_X ** grid.dimension * np.log(2.0 + cell_X) ** grid.dimension
    return KField(
        grid=grid, cell_K=cell_K, cell_X=cell_X,
        probed=probed, censored=censored, C_lip=cfg.C_lip,
    )


def k_field_nodal(kfield):
    """K as a node ScalarField (piecewise constant per cell)."""
    grid = kfield.grid
    X, Y = grid.node_coords()
    nc = kfield.cell_K.shape[0]
    R = grid.macro_radius
    ii = np.clip(np.floor(X + R).astype(int), 0, nc - 1)
    jj = np.clip(np.floor(Y + R).astype(int), 0, nc - 1)
    return ScalarField(grid, kfield.cell_K[ii, jj])


def membership_A(v, ball, K):
    """Check avg_{B_1(x)}|grad v|^2 <= K(x) avg_{B_2r}|grad v|^2 on the inner ball.

    Returns (passed, worst_ratio); a zero global average passes vacuously
    with ratio 0.
    """
    grid = v.grid
    phi = _grad_sq_nodal(v)
    global_avg = disc_average(phi, ball.center, 2.0 * ball.radius)
    knod = k_field_nodal(K) if isinstance(K, KField) else K
    if global_avg == 0.0:
        return True, 0.0
    local = disc_average_map(phi, 1.0)
    inner = grid.ball_mask(ball)
    denom = knod.values * global_avg
    ratios = local[inner] / denom[inner]
    worst = float(np.max(ratios))
    return worst <= 1.0 + 1e-12, worst


def compute_Y_R(K, p, q, C_Y, s=0.5, n=None):
    """Z_R = avg of K^(q/2) over cells in B_R; Y_R = C_Y Z_R^((p+2)/(2(q-p)))."""
    if q <= p:
        raise ValidationError("need q > p")
    grid = K.grid
    R = grid.macro_radius
    nc = K.cell_K.shape[0]
    cx = -R + np.arange(nc) + 0.5
    in_ball = cx[:, None] ** 2 + cx[None, :] ** 2 <= R ** 2 + 1e-12
    Z = float(np.mean(K.cell_K[in_ball] ** (q / 2.0)))
    Y = C_Y * Z ** ((p + 2.0) / (2.0 * (q - p)))
    if n is None:
        n = max(0.5, s * (p + 2.0) * q / (4.0 * (q - p)))
    # exponent identity (Y/C_Y)^{4n(q-p)/((p+2)q)} = Z^{2n/q}
    lhs = (Y / C_Y) ** (4.0 * n * (q - p) / ((p + 2.0) * q))
    rhs = Z ** (2.0 * n / q)
    if abs(lhs - rhs) > 1e-12 * max(1.0, abs(rhs)):
        raise ValidationError("Y/Z exponent identity broken: %g vs %g" % (lhs, rhs))
    return MomentReport(
        Y_R=Y, Z_R=Z, p=float(p), q=float(q), s=float(s), n=float(n), C_Y=C_Y,
        censored_fraction=K.censored_fraction,
    )


def jensen_gap(k_values, threshold, n, q):
    """(mean exp(t^{2n/q}), exp((mean t)^{2n/q})) with t = max(threshold, K^{q/2}).

    The first dominates the second whenever t -> exp(t^{2n/q}) is convex on
    [threshold, inf), which is what the threshold buys.
    """
    t = np.maximum(threshold, np.asarray(k_values, dtype=float) ** (q / 2.0))
    a = 2.0 * n / q
    return float(np.mean(np.exp(t ** a))), float(math.exp(np.mean(t) ** a))


@dataclass
class ConcavityReport:
    levels: np.ndarray        # level grid in x = K^n
    log_survival: np.ndarray  # log P[K^n > level], zero-survival levels dropped
    worst_bulge: float        # largest positive second difference
    tolerance: float
    passed: bool


def k_tail_concavity(k_values, n, n_levels=6, tolerance=0.5):
    """Is log P[K^n > x] concave-or-linear in x, within sampling noise?

    An exponential moment bound on K^n forces the survival function of
    x = K^n to decay at least linearly on log axes, and empirically the
    pooled histograms look concave.  The check puts an equally spaced
    level grid between the 5th and 95th percentile of x, drops levels the
    sample never exceeds, and compares the discrete second differences of
    log-survival against a noise tolerance.
    """
    k = np.asarray(k_values, dtype=float)
    if k.size < 50:
        raise ValidationError("need at least 50 K samples, got %d" % k.size)
    x = k ** float(n)
    lo, hi = np.quantile(x, [0.05, 0.95])
    if hi <= lo:
        raise ValidationError("degenerate K sample (no spread)")
    levels = np.linspace(lo, hi, n_levels)
    surv = np.array([np.count_nonzero(x > lev) for lev in levels], dtype=float)
    keep = surv > 0          # always a prefix: survival is non-increasing
    levels, surv = levels[keep], surv[keep]
    logs = np.log(surv / x.size)
    bulges = np.diff(logs, 2)
    worst = float(bulges.max()) if bulges.size else 0.0
    return ConcavityReport(
        levels=levels, log_survival=logs, worst_bulge=worst,
        tolerance=float(tolerance), passed=worst <= tolerance,
    )


@dataclass
class W1PReport:
    lhs: float
    rhs: float
    ratio: float
    lhs_maximal: float
    M: float
    log_exponent_k: float
    Y_R: float


def verify_w1p(u, f2, Y_R, exps, coarsening_h=1.0):
    """Measure both sides of the gradient integrability estimate.

    M^2 = (unnormalized) L^1 mass of |grad u|^2 on B_R plus the coarsened
    L^{p/2} norm of |f|^2; LHS is the coarsened L^{m/2} norm of |grad u|^2
    on the half ball, and lhs_maximal the same norm of its maximal
    function (the stronger form, always >= LHS).
    """
    grid = u.grid
    R = grid.macro_radius
    BR = Ball((0.0, 0.0), R)
    BH = Ball((0.0, 0.0), R / 2.0)
    p = float(exps.p)
    m = float(exps.m_norm)
    k = float(exps.log_exponent_k)
    phi = _grad_sq_nodal(u)
    mass = coarsened_norm(phi, NormSpec(1.0, 0.0, BR, normalized=False))
    f_norm = coarsened_norm(f2, NormSpec(p / 2.0, coarsening_h, BR))
    M = math.sqrt(mass + f_norm)
    lhs = coarsened_norm(phi, NormSpec(m / 2.0, coarsening_h, BH))
    mx = maximal_fn(phi, coarsening_h)
    lhs_max = coarsened_norm(mx, NormSpec(m / 2.0, 0.0, BH))
    rhs = Y_R ** 2 * M ** 2 * math.log(2.0 + M) ** k
    return W1PReport(
        lhs=lhs, rhs=rhs, ratio=lhs / rhs if rhs > 0 else math.inf,
        lhs_maximal=lhs_max, M=M, log_exponent_k=k, Y_R=Y_R,
    )
