"""Executable covering / good-lambda machinery.

Exponent bookkeeping is exact rational arithmetic; the geometric pieces
(Vitali selection, exit balls, the three-alternative classification)
operate on lattice level sets and verify their own postconditions, since
the whole point of the lab is to measure how the covering argument
behaves with real constants.
"""

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
import math

import numpy as np
from scipy.spatial import cKDTree

from czlab.errors import (
    ContractError,
    DomainError,
    GeometryExhaustedError,
    ScheduleError,
    ValidationError,
)
from czlab.lattice import Ball, ScalarField, disc_average, sublevel_set

GOOD_DECAY = "GoodDecay"
BAD_F = "BadF"
BAD_K = "BadK"


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(*float(x).as_integer_ratio())


@dataclass(frozen=True)
class ExponentSet:
    """All derived exponents of the tail argument, kept as exact rationals."""

    p: Fraction
    q: Fraction
    m_norm: Fraction
    s_integrability: Fraction
    theta: Fraction
    nu: Fraction
    m_schedule: Fraction
    n_moment: Fraction
    log_exponent_k: Fraction
    dimension: int = 2
    m_compatible: bool = True  # m_norm <= p(1-theta) - margin; False flags q too small

    def tail_slope(self):
        """Predicted log-log tail slope -(p/2)(1 - theta)."""
        return -self.p / 2 * (1 - self.theta)


def derive_exponents(p, q, m_norm, s_integrability, dimension=2, c_margin=0):
    """Populate the ExponentSet; all identities hold exactly by construction."""
    p = _as_fraction(p)
    q = _as_fraction(q)
    m_norm = _as_fraction(m_norm)
    s = _as_fraction(s_integrability)
    if not (2 < m_norm):
        raise ValidationError("need m_norm > 2")
    if not (m_norm < p):
        raise ValidationError("need m_norm < p")
    if not (p < q):
        raise ValidationError("need p < q")
    if not (0 < s < Fraction(4, 1) / (m_norm + 2)):
        raise ValidationError("need 0 < s < 4/(m_norm + 2)")
    theta = (p * p + 2 * p) / (p * p + 2 * q)
    nu = (p * p) / (p * p + 2 * q)
    m_schedule = p / 2 + (p + q) / (p - 2)
    n_moment = max(Fraction(1, 2), s * (p + 2) * q / (4 * (q - p)))
    log_k = Fraction(dimension) * q * (p + 2) / (q - p)
    m_compatible = m_norm <= p * (1 - theta) - _as_fraction(c_margin)
    return ExponentSet(
        p=p,
        q=q,
        m_norm=m_norm,
        s_integrability=s,
        theta=theta,
        nu=nu,
        m_schedule=m_schedule,
        n_moment=n_moment,
        log_exponent_k=log_k,
        dimension=dimension,
        m_compatible=m_compatible,
    )


@dataclass
class GoodLambdaParams:
    sigma: float
    omega: float
    t: float
    ball_center: tuple
    ball_radius: float
    q: float
    gate_constant: float = 8.0

    def __post_init__(self):
        if not (0 < self.sigma <= 1):
            raise ValidationError("sigma must lie in (0, 1]")
        if self.omega <= 0 or self.t <= 0:
            raise ValidationError("omega and t must be > 0")
        if self.beta < self.gate_constant * (1 - 1e-12):
            raise ValidationError(
                "gate violated: omega^(q/(q-2)) sigma^(-2/(q-2)) = %g < %g"
                % (self.beta, self.gate_constant)
            )

    @property
    def beta(self):
        q = self.q
        return self.omega ** (q / (q - 2.0)) * self.sigma ** (-2.0 / (q - 2.0))


@dataclass
class IterationSchedule:
    T: float
    t_star: float
    t_0: float
    C_0: float
    c_0: float
    sigma: float
    beta: float
    omega: float
    iteration_count_k: int


@dataclass
class BallRecord:
    center: tuple
    radius: float
    alternative: str
    diagnostics: dict
    decay_violation: bool = False


# ---------------------------------------------------------------------------
# covering

def vitali_select(balls):
    """Greedy disjoint subfamily, decreasing radius (ties by index).

    Every input ball is contained in the 5x dilate of some selected ball.
    """
    if len(balls) == 0:
        raise ValidationError("vitali_select needs a nonempty ball list")
    centers = np.array([b[0] for b in balls], dtype=float)
    radii = np.array([b[1] for b in balls], dtype=float)
    if np.any(radii <= 0):
        raise ValidationError("ball radii must be > 0")
    order = np.lexsort((np.arange(len(balls)), -radii))
    kept = []
    kept_centers = np.empty((0, centers.shape[1]))
    kept_radii = np.empty((0,))
    for idx in order:
        if len(kept) == 0:
            overlap = False
        else:
            d = np.sqrt(np.sum((kept_centers - centers[idx]) ** 2, axis=1))
            overlap = bool(np.any(d < kept_radii + radii[idx]))
        if not overlap:
            kept.append(int(idx))
            kept_centers = np.vstack([kept_centers, centers[idx]])
            kept_radii = np.append(kept_radii, radii[idx])
    return kept


def exit_ball(x, level_set, R, eps_exit=1.0 / 16.0, _tree=None):
    """Smallest touching ball on the ray toward the origin from x.

    Returns (center, radius) with x on the boundary, the half ball clear
    of A(t), and the full ball touching A(t).  Radius search runs over
    multiples of the grid spacing in [1, R/40], bisection-refined; the
    family of candidate balls is nested in r, which is what makes the
    bisection valid.
    """
    grid = level_set.grid
    delta = grid.spacing
    pts = np.argwhere(level_set.indicator)
    if len(pts) == 0:
        raise GeometryExhaustedError("sublevel set A(t) is empty")
    tree = _tree if _tree is not None else cKDTree(pts * delta - grid.macro_radius)
    x = np.asarray(x, dtype=float)
    dist_x, _ = tree.query(x)
    if dist_x <= 2.0:
        raise ContractError("exit_ball requires dist(x, A(t)) > 2 (got %g)" % dist_x)
    norm = float(np.hypot(*x))
    direction = x / norm if norm > 0 else np.array([1.0, 0.0])

    r_cap = R / 40.0 / (1.0 + eps_exit)
    k_lo = int(math.ceil(1.0 / delta - 1e-9))           # r >= 1
    k_hi = int(math.floor(r_cap / delta + 1e-9))

    def touches(k):
        r = k * delta
        y = x - r * direction
        d, _ = tree.query(y)
        return d <= r + 1e-9

    if k_hi < k_lo or not touches(k_hi):
        raise GeometryExhaustedError("no touching radius below R/40 from %s" % (x,))
    if touches(k_lo):
        k0 = k_lo
    else:
        lo, hi = k_lo, k_hi  # lo fails, hi touches
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if touches(mid):
                hi = mid
            else:
                lo = mid
        k0 = hi
    r0 = k0 * delta
    r = (1.0 + eps_exit) * r0
    center = x - r * direction
    d_center, _ = tree.query(center)
    if r > R / 40.0 + 1e-9:
        raise GeometryExhaustedError("exit radius %g exceeds R/40" % r)
    if d_center > r + 1e-9:
        raise ContractError("exit ball lost contact with A(t)")
    if d_center <= r / 2.0:
        raise ContractError("half ball of exit ball meets A(t)")
    return (float(center[0]), float(center[1])), float(r)


# ---------------------------------------------------------------------------
# classification

def classify_ball(ball, u_maximal, f2_field, kq2_field, params, exps, c_climb=16.0):
    """Assign one of the three alternatives to a selected covering ball.

    Checked in order: large K average on the 5r dilate, large f average on
    the 20r dilate, else good decay, whose measured sublevel bound is
    verified against c_climb * sigma / beta and flagged if it fails.
    """
    center, r = ball
    grid = u_maximal.grid
    R = grid.macro_radius
    if not (1.0 - 1e-9 <= r <= R / 8.0 + 1e-9):
        raise ValidationError("classify_ball radius %g outside [1, R/8]" % r)
    # the 20r dilate must stay inside the box or the f average would see
    # the zero extension
    if max(abs(center[0]), abs(center[1])) + 20.0 * r > R + 1e-6:
        raise DomainError("20r dilate of %r not covered by the box" % (ball,))
    q = float(exps.q)
    sigma, omega, t = params.sigma, params.omega, params.t
    beta = params.beta

    k_avg = disc_average(kq2_field, center, 5.0 * r)
    if k_avg > omega ** (q / 2.0):
        return BallRecord(center, r, BAD_K, {"k_avg": k_avg, "threshold": omega ** (q / 2.0)})
    f_avg = disc_average(f2_field, center, 20.0 * r)
    if f_avg > sigma * t:
        return BallRecord(center, r, BAD_F, {"f_avg": f_avg, "threshold": sigma * t, "k_avg": k_avg})

    ball5 = Ball(center, 5.0 * r)
    in5 = grid.ball_mask(ball5)
    bad = in5 & (u_maximal.values > beta * t)
    frac = np.count_nonzero(bad) / max(1, np.count_nonzero(in5))
    bound = c_climb * sigma / beta
    return BallRecord(
        center,
        r,
        GOOD_DECAY,
        {"k_avg": k_avg, "f_avg": f_avg, "decay_fraction": frac, "decay_bound": bound},
        decay_violation=bool(frac > bound),
    )


@dataclass
class GoodLambdaFields:
    """Precomputed node fields shared by every good-lambda evaluation of a trial."""

    mu2_max: ScalarField   # coarsened maximal function of |grad u|^2
    f2: ScalarField        # |f|^2 at nodes
    kq2: ScalarField       # K^(q/2) at nodes
    f2_max: ScalarField    # coarsened maximal function of |f|^2
    kq2_max: ScalarField   # coarsened maximal function of K^(q/2)


@dataclass
class GoodLambdaReport:
    t: float
    sigma: float
    omega: float
    beta: float
    lhs: float
    rhs_decay: float
    rhs_f: float
    rhs_k: float
    c_meas: float
    n_balls: int
    n_good: int
    n_bad_f: int
    n_bad_k: int
    n_decay_violations: int
    records: list = dc_field(default_factory=list)

    @property
    def rhs_total(self):
        return self.rhs_decay + self.rhs_f + self.rhs_k


def good_lambda_report(
    fields,
    t,
    sigma,
    omega,
    exps,
    R,
    gate_constant=8.0,
    c_climb=16.0,
    c_level=0.25,
    eps_exit=1.0 / 16.0,
    subsample=2,
    keep_records=False,
):
    """Run the covering pipeline at level t and measure both sides of the
    good-lambda inequality.

    Returns a GoodLambdaReport whose c_meas is the implied constant
    LHS / (RHS_decay + RHS_f + RHS_K); the level sets on the right use the
    overlap constant c_level in place of the non-explicit constant c.
    """
    grid = fields.mu2_max.grid
    delta = grid.spacing
    q = float(exps.q)
    params = GoodLambdaParams(
        sigma=sigma, omega=omega, t=t, ball_center=(0.0, 0.0), ball_radius=1.0,
        q=q, gate_constant=gate_constant,
    )
    beta = params.beta
    region = Ball((0.0, 0.0), R)
    level = sublevel_set(fields.mu2_max, t, region)
    pts = np.argwhere(level.indicator)
    if len(pts) == 0:
        raise GeometryExhaustedError("A(t) empty at t=%g" % t)
    tree = cKDTree(pts * delta - grid.macro_radius)

    # candidate points: stride-subsampled nodes of B_{R/2}
    half_mask = grid.ball_mask(Ball((0.0, 0.0), R / 2.0))
    sub = np.zeros_like(half_mask)
    sub[::subsample, ::subsample] = True
    cand = np.argwhere(half_mask & sub) * delta - grid.macro_radius
    dists, _ = tree.query(cand)
    uncovered = cand[dists > 2.0]

    balls = []
    seen = set()
    for x in uncovered:
        center, r = exit_ball(x, level, R, eps_exit=eps_exit, _tree=tree)
        key = (round(center[0], 9), round(center[1], 9), round(r, 9))
        if key not in seen:
            seen.add(key)
            balls.append((center, r))

    records = []
    n_good = n_f = n_k = n_viol = 0
    if balls:
        kept = vitali_select(balls)
        for idx in kept:
            rec = classify_ball(
                balls[idx], fields.mu2_max, fields.f2, fields.kq2, params, exps, c_climb=c_climb
            )
            if rec.alternative == GOOD_DECAY:
                n_good += 1
                n_viol += int(rec.decay_violation)
            elif rec.alternative == BAD_F:
                n_f += 1
            else:
                n_k += 1
            records.append(rec)
        n_balls = len(kept)
    else:
        n_balls = 0

    meas = delta ** grid.dimension
    lhs = float(np.count_nonzero(half_mask & (fields.mu2_max.values > beta * t))) * meas
    above_t = float(np.count_nonzero(half_mask & (fields.mu2_max.values > t))) * meas
    rhs_decay = omega ** (-q / (q - 2.0)) * sigma ** (q / (q - 2.0)) * above_t
    full_mask = grid.ball_mask(region)
    rhs_f = float(np.count_nonzero(full_mask & (fields.f2_max.values > c_level * sigma * t))) * meas
    rhs_k = float(np.count_nonzero(full_mask & (fields.kq2_max.values > c_level * omega ** (q / 2.0)))) * meas
    rhs_total = rhs_decay + rhs_f + rhs_k
    if lhs == 0.0:
        c_meas = 0.0
    elif rhs_total == 0.0:
        c_meas = math.inf
    else:
        c_meas = lhs / rhs_total
    return GoodLambdaReport(
        t=t, sigma=sigma, omega=omega, beta=beta,
        lhs=lhs, rhs_decay=rhs_decay, rhs_f=rhs_f, rhs_k=rhs_k, c_meas=c_meas,
        n_balls=n_balls, n_good=n_good, n_bad_f=n_f, n_bad_k=n_k,
        n_decay_violations=n_viol,
        records=records if keep_records else [],
    )


# ---------------------------------------------------------------------------
# the iteration schedule

def schedule_parameters(T, t_star, K_moment, exps, c_0):
    """(sigma, beta, omega) of the final iteration step at top level T."""
    p = float(exps.p)
    q = float(exps.q)
    m = float(exps.m_schedule)
    sigma = (T / t_star) ** (-p / (2.0 * m)) * K_moment ** (-1.0 / m)
    beta = c_0 ** (2.0 / (p - 2.0)) * sigma ** (-2.0 / (p - 2.0))
    omega = beta ** ((q - 2.0) / q) * sigma ** (2.0 / q)
    return sigma, beta, omega


def run_schedule(T, t_star, K_moment, exps, c_0, C_0, gate_constant=8.0, tail_constant=1.0):
    """Step-3 parameter schedule plus the predicted tail bound at level T.

    The gate c_0^(2/(p-2)) C_0^(2 nu / p) >= gate_constant guarantees
    beta >= gate_constant whenever T >= t_0 and K >= 1; violating it is a
    ScheduleError telling the caller to raise C_0.
    """
    if not (0 < c_0 <= 0.5):
        raise ValidationError("c_0 must lie in (0, 1/2]")
    if C_0 <= 0 or t_star <= 0 or K_moment < 1.0 - 1e-12:
        raise ValidationError("need C_0 > 0, t_star > 0 and K_moment >= 1")
    p = float(exps.p)
    nu = float(exps.nu)
    theta = float(exps.theta)
    gate = c_0 ** (2.0 / (p - 2.0)) * C_0 ** (2.0 * nu / p)
    if gate < gate_constant * (1 - 1e-12):
        raise ScheduleError(
            "schedule gate %g < %g: raise C_0 (or c_0)" % (gate, gate_constant)
        )
    t_0 = C_0 * t_star
    if T < t_0 * (1 - 1e-12):
        raise ValidationError("need T >= t_0 = C_0 * t_star")
    sigma, beta, omega = schedule_parameters(T, t_star, K_moment, exps, c_0)

    # strict inequality beta^k t_0 < T, float-safe; at equality k decrements
    k = int(math.floor(math.log(T / t_0) / math.log(beta))) if T > t_0 else 0
    while beta ** (k + 1) * t_0 < T * (1 + 1e-12) and beta ** (k + 1) * t_0 <= T:
        k += 1
    while k > 0 and not (T / (beta ** k * t_0) > 1.0 + 1e-12):
        k -= 1
    schedule = IterationSchedule(
        T=T, t_star=t_star, t_0=t_0, C_0=C_0, c_0=c_0,
        sigma=sigma, beta=beta, omega=omega, iteration_count_k=k,
    )
    bound = tail_constant * (T / t_star) ** (-(p / 2.0) * (1.0 - theta)) * K_moment ** theta
    return schedule, bound
