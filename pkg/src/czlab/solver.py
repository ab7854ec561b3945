"""P1 finite elements for -div a(grad u, x) = div f on the box or on balls.

Each grid square is split into a lower and an upper right triangle; the
flux is evaluated at element barycenters, gradients are constant per
element.  Because a acts element by element, the discrete operator
inherits the monotonicity and Lipschitz constants of the flux exactly,
which is what makes the damped Riesz iteration a guaranteed contraction
for the nonlinear family.

Triangulation of square (ix, iy):
  lower L: nodes (ix,iy), (ix+1,iy), (ix,iy+1)
  upper U: nodes (ix+1,iy), (ix,iy+1), (ix+1,iy+1)
"""

from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from czlab.errors import (
    ContractError,
    DomainError,
    NonConvergenceError,
    ResolutionError,
    ValidationError,
)
from czlab.flux import LINEAR, evaluate_flux_map
from czlab.lattice import Ball, Grid, ScalarField, VectorField

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass
class DomainSpec:
    """Resolved solve domain: solved nodes, fixed boundary layer, elements."""

    grid: Grid
    inside: np.ndarray       # (n, n) bool, unknowns
    boundary: np.ndarray     # (n, n) bool, Dirichlet layer
    elem_mask: np.ndarray    # (2, ne, ne) bool, assembled triangles

    @property
    def covered(self):
        return self.inside | self.boundary


def box_domain(grid):
    n = grid.node_count
    covered = np.ones((n, n), dtype=bool)
    inside = ndimage.binary_erosion(covered, structure=_EIGHT, border_value=0)
    boundary = covered & ~inside
    ne = n - 1
    return DomainSpec(grid, inside, boundary, np.ones((2, ne, ne), dtype=bool))


def ball_domain(grid, ball):
    """Discrete ball: boundary = ball nodes with an 8-neighbor outside."""
    if 2.0 * ball.radius < 4.0 * grid.spacing:
        raise ResolutionError("ball of radius %g spans fewer than 4 grid cells" % ball.radius)
    cx, cy = ball.center
    R = grid.macro_radius
    if abs(cx) + ball.radius > R + 1e-9 or abs(cy) + ball.radius > R + 1e-9:
        raise DomainError("ball sticks out of the box")
    covered = grid.ball_mask(ball)
    inside = ndimage.binary_erosion(covered, structure=_EIGHT, border_value=0)
    boundary = covered & ~inside
    if not boundary.any() or not inside.any():
        raise ResolutionError("degenerate discrete ball")
    ne = grid.node_count - 1
    elem = np.zeros((2, ne, ne), dtype=bool)
    c = covered
    elem[0] = c[:-1, :-1] & c[1:, :-1] & c[:-1, 1:]
    elem[1] = c[1:, :-1] & c[:-1, 1:] & c[1:, 1:]
    return DomainSpec(grid, inside, boundary, elem)


def resolve_domain(grid, domain):
    if isinstance(domain, DomainSpec):
        return domain
    if domain == "box":
        return box_domain(grid)
    if isinstance(domain, Ball):
        return ball_domain(grid, domain)
    raise ValidationError("domain must be 'box', a Ball, or a DomainSpec")


# ---------------------------------------------------------------------------
# element geometry

def element_gradients(grid, values):
    """Per-triangle constant gradients, shape (2, ne, ne, 2)."""
    d = grid.spacing
    g = np.empty((2, values.shape[0] - 1, values.shape[1] - 1, 2))
    g[0, ..., 0] = (values[1:, :-1] - values[:-1, :-1]) / d
    g[0, ..., 1] = (values[:-1, 1:] - values[:-1, :-1]) / d
    g[1, ..., 0] = (values[1:, 1:] - values[:-1, 1:]) / d
    g[1, ..., 1] = (values[1:, 1:] - values[1:, :-1]) / d
    return g


def element_barycenters(grid):
    d = grid.spacing
    ne = grid.node_count - 1
    base = -grid.macro_radius + d * np.arange(ne)
    bx = np.empty((2, ne, ne))
    by = np.empty((2, ne, ne))
    bx[0] = (base + d / 3.0)[:, None]
    by[0] = (base + d / 3.0)[None, :]
    bx[1] = (base + 2.0 * d / 3.0)[:, None]
    by[1] = (base + 2.0 * d / 3.0)[None, :]
    return bx, by


def element_coefficients(field, grid):
    """(lam, mu) arrays of shape (2, ne, ne) evaluated at barycenters."""
    bx, by = element_barycenters(grid)
    ii, jj = field.cell_index_map(bx, by)
    lam = field.lambda_at_cells()[ii, jj]
    mu = field.mu_at_cells()[ii, jj]
    return lam, mu


def gradient_field(grid, u):
    """VectorField of grad u (element located) from a ScalarField."""
    return VectorField(grid, element_gradients(grid, u.values), location="element")


def nodal_from_element(grid, elem_scalar):
    """Average a per-triangle scalar onto nodes (mean over incident triangles)."""
    n = grid.node_count
    acc = np.zeros((n, n))
    cnt = np.zeros((n, n))
    lo, up = elem_scalar[0], elem_scalar[1]
    for sl in ((np.s_[:-1, :-1]), (np.s_[1:, :-1]), (np.s_[:-1, 1:])):
        acc[sl] += lo
        cnt[sl] += 1.0
    for sl in ((np.s_[1:, :-1]), (np.s_[:-1, 1:]), (np.s_[1:, 1:])):
        acc[sl] += up
        cnt[sl] += 1.0
    return acc / cnt


def ball_element_mean(grid, elem_scalar, ball):
    """Mean over triangles with barycenter inside the ball (equal areas)."""
    bx, by = element_barycenters(grid)
    cx, cy = ball.center
    sel = (bx - cx) ** 2 + (by - cy) ** 2 <= ball.radius ** 2
    if not sel.any():
        raise DomainError("no elements inside ball %r" % (ball,))
    return float(np.mean(elem_scalar[sel]))


# ---------------------------------------------------------------------------
# weak-form assembly

def _scatter(grid, flux, elem_mask):
    """Sum_T |T| flux_T . grad(phi_i)|_T for every node i."""
    d = grid.spacing
    w = 0.5 * d  # |T| / delta
    fl = np.where(elem_mask[0, ..., None], flux[0], 0.0)
    fu = np.where(elem_mask[1, ..., None], flux[1], 0.0)
    n = grid.node_count
    res = np.zeros((n, n))
    res[:-1, :-1] -= w * (fl[..., 0] + fl[..., 1])
    res[1:, :-1] += w * fl[..., 0]
    res[:-1, 1:] += w * fl[..., 1]
    res[1:, 1:] += w * (fu[..., 0] + fu[..., 1])
    res[:-1, 1:] -= w * fu[..., 0]
    res[1:, :-1] -= w * fu[..., 1]
    return res


def apply_operator(field, u, domain, f=None):
    """Discrete weak residual <A(u) + F_f, phi_i> as an (n, n) array.

    Entries are meaningful at nodes whose hat function is supported on
    assembled elements; the Dirichlet solve only reads the `inside` ones.
    """
    spec = resolve_domain(u.grid, domain)
    if not spec.elem_mask.any():
        raise DomainError("domain has no assembled elements")
    grid = u.grid
    grads = element_gradients(grid, u.values)
    bx, by = element_barycenters(grid)
    flux = evaluate_flux_map(field, grads, bx, by)
    res = _scatter(grid, flux, spec.elem_mask)
    if f is not None:
        res += _scatter(grid, f.values, spec.elem_mask)
    return res


def stiffness_matrix(grid, lam_elem, elem_mask):
    """Sparse SPD matrix sum_T lam_T |T| grad(phi_i).grad(phi_j)."""
    n = grid.node_count
    ne = n - 1
    idx = np.arange(n * n).reshape(n, n)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[:-1, 1:].ravel()
    dd = idx[1:, 1:].ravel()
    lo = np.where(elem_mask[0], lam_elem[0], 0.0).ravel()
    up = np.where(elem_mask[1], lam_elem[1], 0.0).ravel()
    rows, cols, vals = [], [], []

    def add(r, co, v):
        rows.append(r)
        cols.append(co)
        vals.append(v)

    # lower triangle: vertices a, b, c with gradients (-1,-1)/d, (1,0)/d, (0,1)/d
    add(a, a, lo)
    add(b, b, 0.5 * lo)
    add(c, c, 0.5 * lo)
    add(a, b, -0.5 * lo)
    add(b, a, -0.5 * lo)
    add(a, c, -0.5 * lo)
    add(c, a, -0.5 * lo)
    # upper triangle: vertices b, c, d with gradients (0,-1)/d, (-1,0)/d, (1,1)/d
    add(dd, dd, up)
    add(b, b, 0.5 * up)
    add(c, c, 0.5 * up)
    add(dd, b, -0.5 * up)
    add(b, dd, -0.5 * up)
    add(dd, c, -0.5 * up)
    add(c, dd, -0.5 * up)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n * n, n * n),
    )
    return mat.tocsr()


# ---------------------------------------------------------------------------
# problems and solves

@dataclass
class DirichletProblem:
    field: object                 # CoefficientField
    domain_mask: object           # "box", Ball, or DomainSpec
    boundary_values: ScalarField
    rhs_vector_field: VectorField | None = None
    tolerance: float = 1e-9
    max_iterations: int = 10000
    relaxation: float | None = None   # nonlinear damping; default 1/Lambda

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValidationError("tolerance must be > 0")
        spec = resolve_domain(self.boundary_values.grid, self.domain_mask)
        if not spec.boundary.any():
            raise ValidationError("empty boundary node set")


@dataclass
class SolveReport:
    """Solve diagnostics.

    final_residual is the dual (inverse-Laplacian) norm of the weak
    residual of the returned solution.  The iteration retains the best
    iterate seen so far, so energy_trace is non-increasing after the
    first entry by construction and the reported solution matches
    final_residual.
    """

    solution: ScalarField
    iterations: int
    final_residual: float
    energy_trace: np.ndarray
    method: str
    converged: bool


class _RieszMap:
    """Factorized discrete Laplacian on the interior dofs (the dual norm)."""

    def __init__(self, grid, spec, ii):
        ones = np.ones((2, grid.node_count - 1, grid.node_count - 1))
        G = stiffness_matrix(grid, ones, spec.elem_mask)
        self.solve = spla.factorized(G[ii][:, ii].tocsc())

    def dual_norm(self, r):
        return math.sqrt(max(float(r @ self.solve(r)), 0.0))


def _interior_index(spec):
    n = spec.grid.node_count
    flat_inside = spec.inside.ravel()
    return np.flatnonzero(flat_inside)


def _initial_vector(spec, boundary_values, initial_guess):
    u = np.where(spec.boundary, boundary_values.values, 0.0)
    if initial_guess is not None:
        u = np.where(spec.inside, initial_guess.values, u)
    return u


def solve(problem, initial_guess=None):
    """Solve the Dirichlet problem; PCG (linear) or damped Riesz iteration."""
    grid = problem.boundary_values.grid
    spec = resolve_domain(grid, problem.domain_mask)
    field = problem.field
    if field.params.family == LINEAR:
        return _solve_linear(problem, spec, initial_guess)
    return _solve_monotone(problem, spec, initial_guess)


def _f_load(grid, f, spec):
    if f is None:
        return np.zeros((grid.node_count,) * 2)
    return _scatter(grid, f.values, spec.elem_mask)


def _solve_linear(problem, spec, initial_guess):
    grid = problem.boundary_values.grid
    lam, mu = element_coefficients(problem.field, grid)
    A = stiffness_matrix(grid, lam, spec.elem_mask)
    ii = _interior_index(spec)
    Aii = A[ii][:, ii]
    asym = abs(Aii - Aii.T)
    if asym.nnz and asym.max() > 1e-10:
        raise ValidationError("assembled linear system is not symmetric")
    if np.any(Aii.diagonal() <= 0):
        raise ValidationError("assembled linear system has non-positive diagonal")
    riesz = _RieszMap(grid, spec, ii)

    u = _initial_vector(spec, problem.boundary_values, initial_guess)
    load = _f_load(grid, problem.rhs_vector_field, spec)
    # residual of full vector: A u + F_f restricted to interior
    rhs = -(load.ravel()[ii] + (A @ u.ravel())[ii])

    # any initial guess is already folded into u, so the correction starts at 0
    x = np.zeros(len(ii))
    r = rhs - Aii @ x
    z = riesz.solve(r)
    rho = float(r @ z)
    trace = [math.sqrt(max(rho, 0.0))]
    best_x = x.copy()
    best_res = trace[0]
    p = z.copy()
    k = 0
    while trace[-1] > problem.tolerance:
        if k >= problem.max_iterations:
            sol = _scatter_solution(spec, u, best_x, ii)
            report = SolveReport(sol, k, best_res, np.array(trace), "pcg", False)
            raise NonConvergenceError("PCG exceeded max_iterations", report)
        Ap = Aii @ p
        alpha = rho / float(p @ Ap)
        x = x + alpha * p
        r = r - alpha * Ap
        z = riesz.solve(r)
        rho_new = float(r @ z)
        res = math.sqrt(max(rho_new, 0.0))
        if res < best_res:
            best_res = res
            best_x = x.copy()
        trace.append(best_res)
        p = z + (rho_new / rho) * p
        rho = rho_new
        k += 1
    sol = _scatter_solution(spec, u, best_x, ii)
    return SolveReport(sol, k, best_res, np.array(trace), "pcg", True)


def _scatter_solution(spec, u_full, x_interior, ii):
    vals = u_full.copy()
    flat = vals.ravel()
    flat[ii] += x_interior
    return ScalarField(spec.grid, flat.reshape(vals.shape))


def _solve_monotone(problem, spec, initial_guess):
    grid = problem.boundary_values.grid
    lam_ell = problem.field.params.lambda_ellipticity
    relax = problem.relaxation if problem.relaxation is not None else 1.0 / lam_ell
    tau = relax / lam_ell ** 2
    ii = _interior_index(spec)
    riesz = _RieszMap(grid, spec, ii)
    load = _f_load(grid, problem.rhs_vector_field, spec)

    u = _initial_vector(spec, problem.boundary_values, initial_guess)
    shape = u.shape

    def residual(uv):
        res = apply_operator(problem.field, ScalarField(grid, uv), spec) + load
        return res.ravel()[ii]

    best_u = u.copy()
    r = residual(u)
    z = riesz.solve(r)
    best_res = math.sqrt(max(float(r @ z), 0.0))
    trace = [best_res]
    k = 0
    while trace[-1] > problem.tolerance:
        if k >= problem.max_iterations:
            report = SolveReport(
                ScalarField(grid, best_u), k, best_res, np.array(trace), "riesz-fixed-point", False
            )
            raise NonConvergenceError("fixed-point iteration exceeded max_iterations", report)
        flat = u.ravel().copy()
        flat[ii] -= tau * z
        u = flat.reshape(shape)
        r = residual(u)
        z = riesz.solve(r)
        res = math.sqrt(max(float(r @ z), 0.0))
        if res < best_res:
            best_res = res
            best_u = u.copy()
        trace.append(best_res)
        k += 1
    return SolveReport(ScalarField(grid, best_u), k, best_res, np.array(trace), "riesz-fixed-point", True)


def harmonic_replacement(u, field, ball, tolerance=1e-9, max_iterations=10000):
    """Solve the f = 0 Dirichlet problem on the ball with data u; v = u outside."""
    spec = ball_domain(u.grid, ball)
    problem = DirichletProblem(
        field=field,
        domain_mask=spec,
        boundary_values=u,
        rhs_vector_field=None,
        tolerance=tolerance,
        max_iterations=max_iterations,
    )
    report = solve(problem, initial_guess=u)
    vals = np.where(spec.inside, report.solution.values, u.values)
    return ScalarField(u.grid, vals)


def caccioppoli_gap(u, v, ball, f=None, boundary_tol=1e-7):
    """(mean |grad u - grad v|^2 over the half ball, mean |f|^2 over the ball)."""
    grid = u.grid
    spec = ball_domain(grid, ball)
    mismatch = np.max(np.abs(u.values - v.values)[spec.boundary]) if spec.boundary.any() else 0.0
    scale = max(1.0, float(np.max(np.abs(u.values[spec.covered]))))
    if mismatch > boundary_tol * scale:
        raise ContractError("u and v disagree on the ball boundary (max gap %g)" % mismatch)
    dg = element_gradients(grid, u.values) - element_gradients(grid, v.values)
    lhs = ball_element_mean(grid, np.sum(dg ** 2, axis=-1), ball.dilate(0.5))
    if f is None:
        rhs = 0.0
    else:
        rhs = ball_element_mean(grid, f.squared_magnitude(), ball)
    return lhs, rhs


def dual_residual_norm(field, u, domain, f=None):
    """Dual norm of the weak residual; the solver's convergence measure."""
    spec = resolve_domain(u.grid, domain)
    ii = _interior_index(spec)
    riesz = _RieszMap(u.grid, spec, ii)
    res = apply_operator(field, u, spec, f=f).ravel()[ii]
    return riesz.dual_norm(res)
