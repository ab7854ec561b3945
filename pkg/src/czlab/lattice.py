"""Uniform lattice on the box [-R, R]^2 with Euclidean ball machinery.

Fields live on grid nodes (or on triangles, see czlab.solver).  Everything
ball-shaped uses node-center inclusion tests; functions are extended by
zero outside their mask and disc averages always divide by the full disc
node count, so values near the box edge are deliberately damped rather
than renormalized.
"""

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
import math

import numpy as np

from czlab.errors import DomainError, ResolutionError, ValidationError
from czlab.kernels import disc_sum_map

ALLOWED_SPACINGS = (1.0, 0.5, 0.25, 0.125)
DEFAULT_LADDER_RATIO = 2.0 ** 0.25


@dataclass(frozen=True)
class Ball:
    """Euclidean ball descriptor (center point, radius)."""

    center: tuple
    radius: float

    def dilate(self, factor):
        return Ball(self.center, self.radius * factor)


@dataclass(frozen=True)
class Grid:
    """Uniform node lattice over [-R, R]^2 with spacing delta.

    delta must divide 1 exactly so unit coefficient cells align with grid
    cells.  Node (i, j) sits at (-R + i*delta, -R + j*delta).
    """

    macro_radius: float
    spacing: float = 0.25
    dimension: int = 2

    def __post_init__(self):
        if self.dimension != 2:
            raise ValidationError("grids are 2-D; dimension must be 2")
        if self.spacing not in ALLOWED_SPACINGS:
            raise ValidationError(
                "spacing must be one of %s (got %r)" % (list(ALLOWED_SPACINGS), self.spacing)
            )
        n_cells = 2.0 * self.macro_radius / self.spacing
        if abs(n_cells - round(n_cells)) > 1e-12 or self.macro_radius <= 0:
            raise ValidationError("2R/delta must be a positive integer")

    @property
    def node_count(self):
        """Nodes per axis."""
        return int(round(2.0 * self.macro_radius / self.spacing)) + 1

    @property
    def diameter(self):
        """Euclidean diameter of the box."""
        return 2.0 * self.macro_radius * math.sqrt(2.0)

    def axis(self):
        return -self.macro_radius + self.spacing * np.arange(self.node_count)

    def node_coords(self):
        """(n, n) arrays X, Y of node coordinates."""
        ax = self.axis()
        return np.meshgrid(ax, ax, indexing="ij")

    def ball_mask(self, ball):
        """Boolean node array: |x - center| <= radius."""
        x, y = self.node_coords()
        cx, cy = ball.center
        return (x - cx) ** 2 + (y - cy) ** 2 <= ball.radius ** 2 + 1e-12

    def nearest_node(self, point):
        i = int(round((point[0] + self.macro_radius) / self.spacing))
        j = int(round((point[1] + self.macro_radius) / self.spacing))
        n = self.node_count
        return min(max(i, 0), n - 1), min(max(j, 0), n - 1)


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.grid.node_count
        if self.values.shape != (n, n):
            raise ValidationError("values shape %s does not match grid (%d, %d)" % (self.values.shape, n, n))
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != (n, n):
                raise ValidationError("mask shape mismatch")
        if not np.all(np.isfinite(self.masked_values())):
            raise ValidationError("field has non-finite values on its mask")

    def masked_values(self):
        """Values with the zero extension outside the mask applied."""
        if self.mask is None:
            return self.values
        return np.where(self.mask, self.values, 0.0)


@dataclass
class VectorField:
    """d-vector field, either one vector per node or one per triangle.

    Node location: values of shape (n, n, 2).  Element location: values of
    shape (2, ne, ne, 2) where index 0 picks the lower/upper triangle of a
    grid square (ne = n - 1), matching czlab.solver's triangulation.
    """

    grid: Grid
    values: np.ndarray
    location: str = "element"
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.grid.node_count
        ne = n - 1
        if self.location == "node":
            want = (n, n, 2)
        elif self.location == "element":
            want = (2, ne, ne, 2)
        else:
            raise ValidationError("location must be 'node' or 'element'")
        if self.values.shape != want:
            raise ValidationError("values shape %s, expected %s" % (self.values.shape, want))
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("vector field has non-finite values")

    def squared_magnitude(self):
        return np.sum(self.values ** 2, axis=-1)


@dataclass(frozen=True)
class NormSpec:
    exponent_s: float
    coarsening_h: float
    region: Ball
    normalized: bool = True

    def __post_init__(self):
        if self.exponent_s < 1.0:
            raise ValidationError("norm exponent s must be >= 1")
        if self.coarsening_h < 0.0:
            raise ValidationError("coarsening h must be >= 0")


@dataclass
class LevelSet:
    """Sublevel set {phi <= t} of a node field within a ball region."""

    threshold: float
    indicator: np.ndarray
    region: Ball
    grid: Grid

    @property
    def measure(self):
        return float(np.count_nonzero(self.indicator)) * self.grid.spacing ** self.grid.dimension


# ---------------------------------------------------------------------------
# disc geometry


@lru_cache(maxsize=32)
def cumulative_disc_counts(max_s):
    """counts[s] = #{(i,j) in Z^2 : i^2 + j^2 <= s} for s = 0..max_s."""
    k = math.isqrt(max_s)
    ax = np.arange(-k, k + 1)
    ss = (ax[:, None] ** 2 + ax[None, :] ** 2).ravel()
    ss = ss[ss <= max_s]
    hist = np.bincount(ss, minlength=max_s + 1)
    return np.cumsum(hist)


def disc_halfwidths(s):
    """Row half-widths of the lattice disc {i^2 + j^2 <= s}."""
    k = math.isqrt(s)
    dy = np.arange(k + 1)
    return np.floor(np.sqrt(s - dy ** 2) + 1e-12).astype(np.int64)


def disc_node_count(s):
    hw = disc_halfwidths(s)
    return int(2 * np.sum(2 * hw + 1) - (2 * hw[0] + 1))


@lru_cache(maxsize=64)
def radius_ladder(max_s, base_s, ratio_d):
    """Count-controlled ladder of squared node radii in [base_s, max_s].

    Returns an int array of s values (r = delta * sqrt(s)).  Consecutive
    ladder discs have node-count ratio <= ratio_d except across forced
    jumps where no intermediate lattice radius exists.  This makes the
    sandwich contract exact on the lattice: for ANY radius r in range, the
    disc average at r is bounded by ratio_d times the ladder maximum,
    because the disc at r equals the disc at the largest lattice radius
    <= r and its count is within ratio_d of a ladder neighbor.
    """
    counts = cumulative_disc_counts(max_s)
    distinct = np.flatnonzero(np.diff(np.concatenate([[0], counts])))  # s where count increases
    distinct = distinct[distinct >= base_s]
    if len(distinct) == 0:
        raise ResolutionError("no lattice radius in [%d, %d]" % (base_s, max_s))
    ladder = [int(distinct[0])]
    pos = 0
    while True:
        c = counts[ladder[-1]]
        # furthest distinct radius whose count stays within ratio_d
        nxt = pos
        for q in range(pos + 1, len(distinct)):
            if counts[distinct[q]] <= ratio_d * c:
                nxt = q
            else:
                break
        if nxt == pos:
            if pos + 1 >= len(distinct):
                break
            nxt = pos + 1  # forced jump: adjacent lattice radii
        ladder.append(int(distinct[nxt]))
        pos = nxt
    return np.array(ladder, dtype=np.int64)


def _node_radius_sq(grid, radius):
    rho = radius / grid.spacing
    return int(math.floor(rho * rho + 1e-9))


# ---------------------------------------------------------------------------
# operations


def disc_average(phi, center, radius):
    """Mean of |phi| over lattice nodes within `radius` of `center`.

    phi is extended by zero outside its mask and outside the box; the
    denominator is the count of all lattice points of the (virtual,
    unbounded) lattice inside the disc, not the in-box intersection.
    """
    grid = phi.grid
    if radius < grid.spacing:
        raise ResolutionError("disc radius %g below grid spacing %g" % (radius, grid.spacing))
    delta = grid.spacing
    cx, cy = center
    n = grid.node_count
    # lattice index of center (real-valued)
    fi = (cx + grid.macro_radius) / delta
    fj = (cy + grid.macro_radius) / delta
    rho = radius / delta
    i_lo = math.floor(fi - rho)
    i_hi = math.ceil(fi + rho)
    j_lo = math.floor(fj - rho)
    j_hi = math.ceil(fj + rho)
    ii = np.arange(i_lo, i_hi + 1)
    jj = np.arange(j_lo, j_hi + 1)
    d2 = (ii[:, None] - fi) ** 2 + (jj[None, :] - fj) ** 2
    inside = d2 <= rho * rho + 1e-12
    count = int(np.count_nonzero(inside))
    vals = np.abs(phi.masked_values())
    i_ok = (ii >= 0) & (ii < n)
    j_ok = (jj >= 0) & (jj < n)
    sub = np.zeros(inside.shape)
    sub[np.ix_(i_ok, j_ok)] = vals[np.ix_(ii[i_ok], jj[j_ok])]
    total = float(np.sum(sub[inside]))
    return total / count


def disc_average_map(phi, radius):
    """disc_average at every node at once (nodes as centers)."""
    grid = phi.grid
    if radius < grid.spacing:
        raise ResolutionError("disc radius below grid spacing")
    s = _node_radius_sq(grid, radius)
    hw = disc_halfwidths(s)
    sums = disc_sum_map(np.abs(phi.masked_values()), hw)
    return sums / cumulative_disc_counts(s)[s]


def maximal_fn(phi, coarsening_h, ladder_ratio=DEFAULT_LADDER_RATIO):
    """Coarsened maximal function: nodewise max of disc averages over radii > h.

    Radii run over the count-controlled ladder from max(h, delta) up to the
    box diameter.  The returned field is a lower bound for the lattice
    supremum over all radii, and ladder_ratio**d times it is an upper
    bound (see radius_ladder).
    """
    if ladder_ratio <= 1.0:
        raise ValidationError("ladder_ratio must be > 1")
    if coarsening_h < 0.0:
        raise ValidationError("coarsening_h must be >= 0")
    grid = phi.grid
    base = max(coarsening_h, grid.spacing)
    base_s = _node_radius_sq(grid, base)
    if coarsening_h > 0 and base_s * grid.spacing ** 2 < coarsening_h ** 2 - 1e-12:
        base_s += 1  # radii must exceed h; bump to the next squared radius
    max_s = _node_radius_sq(grid, grid.diameter)
    ladder = radius_ladder(max_s, max(base_s, 1), ladder_ratio ** grid.dimension)
    counts = cumulative_disc_counts(max_s)
    vals = np.abs(phi.masked_values())
    out = np.zeros_like(vals)
    for s in ladder:
        sums = disc_sum_map(vals, disc_halfwidths(int(s)))
        np.maximum(out, sums / counts[s], out=out)
    return ScalarField(grid, out)


def ladder_radii(grid, coarsening_h, ladder_ratio=DEFAULT_LADDER_RATIO, max_radius=None):
    """The radii (in length units) maximal_fn would scan; for oracles/probing."""
    base = max(coarsening_h, grid.spacing)
    base_s = _node_radius_sq(grid, base)
    if coarsening_h > 0 and base_s * grid.spacing ** 2 < coarsening_h ** 2 - 1e-12:
        base_s += 1
    cap = grid.diameter if max_radius is None else max_radius
    max_s = _node_radius_sq(grid, cap)
    ladder = radius_ladder(max_s, max(base_s, 1), ladder_ratio ** grid.dimension)
    return grid.spacing * np.sqrt(ladder.astype(float))


def coarsened_norm(phi, spec):
    """Composite norm ||phi||_{L^s_h(U)} / normalized variant on a ball U."""
    grid = phi.grid
    region_mask = grid.ball_mask(spec.region)
    n_region = int(np.count_nonzero(region_mask))
    if n_region == 0:
        raise DomainError("empty norm region")
    if spec.coarsening_h >= grid.spacing:
        inner = disc_average_map(phi, spec.coarsening_h)
    else:
        inner = np.abs(phi.masked_values())
    powered = inner[region_mask] ** spec.exponent_s
    if spec.normalized:
        return float(np.mean(powered)) ** (1.0 / spec.exponent_s)
    return float(np.sum(powered) * grid.spacing ** grid.dimension) ** (1.0 / spec.exponent_s)


def sublevel_set(phi, t, region):
    """LevelSet of {x in region : phi(x) <= t} for a node field phi."""
    grid = phi.grid
    region_mask = grid.ball_mask(region)
    indicator = region_mask & (phi.values <= t)
    return LevelSet(threshold=t, indicator=indicator, region=region, grid=grid)


# ---------------------------------------------------------------------------
# text grid format

FIELD_FORMAT_VERSION = 1


def save_scalar_field(path, phi, extra_header=()):
    """Write a ScalarField as '# key value' headers plus row-major values."""
    grid = phi.grid
    lines = [
        "# czlab-scalar-field %d" % FIELD_FORMAT_VERSION,
        "# d %d" % grid.dimension,
        "# R %.17g" % grid.macro_radius,
        "# delta %.17g" % grid.spacing,
        "# n %d" % grid.node_count,
    ]
    for key, val in extra_header:
        lines.append("# %s %s" % (key, val))
    for row in phi.values:
        lines.append(" ".join("%.17g" % v for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scalar_field(path):
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split(None, 1)
                if len(parts) == 2:
                    header[parts[0]] = parts[1]
                continue
            rows.append([float(tok) for tok in line.split()])
    if header.get("czlab-scalar-field") != str(FIELD_FORMAT_VERSION):
        raise ValidationError("not a czlab scalar field file: %s" % path)
    grid = Grid(macro_radius=float(header["R"]), spacing=float(header["delta"]))
    return ScalarField(grid, np.array(rows))
