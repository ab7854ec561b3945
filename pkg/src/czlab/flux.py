"""Random monotone coefficient fields on the unit-cell checkerboard.

A realization assigns an iid scalar tuple to every unit cell of
[-R, R]^2, giving exact Z^2-stationarity and unit range of dependence by
construction.  Two families:

  Linear:                      a(xi, x) = lam(x) * xi
  BoundedMonotonePerturbation: a(xi, x) = lam(x) * xi + mu(x) * xi / sqrt(1 + |xi|^2)

The perturbation is the gradient of the convex map xi -> mu*sqrt(1+|xi|^2),
so it is monotone and 1-Lipschitz; hence the whole flux is Lipschitz with
constant lam + mu and monotone with constant lam, and the FluxParams
invariants pin those inside [1/Lambda, Lambda].
"""

from dataclasses import dataclass, replace
import numpy as np

from czlab.errors import DomainError, ValidationError

LINEAR = "Linear"
NONLINEAR = "BoundedMonotonePerturbation"
MIN_MACRO_RADIUS = 10.0


@dataclass(frozen=True)
class UniformLaw:
    """Uniform distribution on [low, high] for per-cell scalars."""

    low: float
    high: float

    def __post_init__(self):
        if not (0 < self.low <= self.high):
            raise ValidationError("uniform law needs 0 < low <= high")

    def sample(self, rng, shape):
        if self.low == self.high:
            return np.full(shape, self.low)
        return rng.uniform(self.low, self.high, size=shape)


@dataclass(frozen=True)
class FluxParams:
    lambda_ellipticity: float
    family: str = LINEAR
    contrast_law: UniformLaw | None = None
    perturbation_weight: float = 0.0

    def __post_init__(self):
        if self.lambda_ellipticity < 1.0:
            raise ValidationError("lambda_ellipticity must be >= 1")
        if self.family not in (LINEAR, NONLINEAR):
            raise ValidationError("unknown flux family %r" % (self.family,))
        if self.perturbation_weight < 0.0:
            raise ValidationError("perturbation_weight must be >= 0")
        law = self.law
        lam = self.lambda_ellipticity
        if law.low < 1.0 / lam - 1e-12:
            raise ValidationError("contrast law low end below 1/Lambda")
        top = law.high + (self.perturbation_weight if self.family == NONLINEAR else 0.0)
        if top > lam + 1e-12:
            raise ValidationError("cell scalar range (plus perturbation) exceeds Lambda")

    @property
    def law(self):
        if self.contrast_law is not None:
            return self.contrast_law
        lam = self.lambda_ellipticity
        high = lam - (self.perturbation_weight if self.family == NONLINEAR else 0.0)
        return UniformLaw(1.0 / lam, high)


@dataclass(frozen=True)
class CoefficientField:
    """One realization: per-unit-cell scalars covering [-R, R]^2.

    cell_values has shape (2R, 2R) for the linear family and (2R, 2R, 2)
    (lambda, mu) for the nonlinear one.  Cells are half-open squares
    [z_i, z_i + 1); points with a coordinate exactly +R are clamped into
    the last cell.
    """

    params: FluxParams
    macro_radius: float
    cell_values: np.ndarray
    seed: int
    dimension: int = 2

    @property
    def n_cells(self):
        return int(round(2 * self.macro_radius))

    def lambda_at_cells(self):
        """(2R, 2R) array of monotonicity scalars lam."""
        if self.params.family == LINEAR:
            return self.cell_values
        return self.cell_values[..., 0]

    def mu_at_cells(self):
        if self.params.family == LINEAR:
            return np.zeros_like(self.cell_values)
        return self.cell_values[..., 1]

    def cell_index(self, x):
        """Cell containing point x; half-open cells, +R clamped inward."""
        nc = self.n_cells
        out = []
        for c in x:
            if c < -self.macro_radius - 1e-9 or c > self.macro_radius + 1e-9:
                raise DomainError("point %r outside [-R, R]^2" % (x,))
            out.append(min(int(np.floor(c + self.macro_radius)), nc - 1))
        return tuple(out)

    def cell_index_map(self, xs, ys):
        """Vectorized cell lookup for coordinate arrays (no domain check)."""
        nc = self.n_cells
        ii = np.clip(np.floor(xs + self.macro_radius).astype(int), 0, nc - 1)
        jj = np.clip(np.floor(ys + self.macro_radius).astype(int), 0, nc - 1)
        return ii, jj


@dataclass
class AxiomReport:
    worst_lipschitz_ratio: float
    worst_monotonicity_ratio: float
    lambda_ellipticity: float
    n_samples: int

    @property
    def passed(self):
        lam = self.lambda_ellipticity
        return (
            self.worst_lipschitz_ratio <= lam * (1.0 + 1e-12)
            and self.worst_monotonicity_ratio >= (1.0 / lam) * (1.0 - 1e-12)
        )


def sample_environment(seed, macro_radius, params):
    """Draw a CoefficientField; pure function of (seed, macro_radius, params)."""
    if macro_radius < MIN_MACRO_RADIUS:
        raise DomainError("macro_radius must be >= %g (got %g)" % (MIN_MACRO_RADIUS, macro_radius))
    if abs(2 * macro_radius - round(2 * macro_radius)) > 1e-12:
        raise ValidationError("2R must be an integer so unit cells tile the box")
    nc = int(round(2 * macro_radius))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), nc]))
    lam = params.law.sample(rng, (nc, nc))
    if params.family == LINEAR:
        cells = lam
    else:
        mu = rng.uniform(0.0, params.perturbation_weight, size=(nc, nc)) if params.perturbation_weight > 0 else np.zeros((nc, nc))
        cells = np.stack([lam, mu], axis=-1)
    cells.setflags(write=False)
    return CoefficientField(params=params, macro_radius=float(macro_radius), cell_values=cells, seed=int(seed))


def evaluate_flux(field, xi, x):
    """a(xi, x) for one gradient vector xi at one point x."""
    i, j = field.cell_index(x)
    xi = np.asarray(xi, dtype=float)
    lam = field.lambda_at_cells()[i, j]
    if field.params.family == LINEAR:
        return lam * xi
    mu = field.mu_at_cells()[i, j]
    return lam * xi + mu * xi / np.sqrt(1.0 + np.dot(xi, xi))


def evaluate_flux_map(field, xi, xs, ys):
    """Vectorized flux: xi of shape (..., 2), xs/ys coordinate arrays."""
    ii, jj = field.cell_index_map(xs, ys)
    lam = field.lambda_at_cells()[ii, jj]
    out = lam[..., None] * xi
    if field.params.family == NONLINEAR:
        mu = field.mu_at_cells()[ii, jj]
        norm2 = np.sum(xi ** 2, axis=-1)
        out = out + (mu / np.sqrt(1.0 + norm2))[..., None] * xi
    return out


def check_flux_axioms(field, n_samples, rng_seed):
    """Sample (xi, eta, x) triples and report worst Lipschitz/monotonicity ratios.

    Magnitudes are heavy-tailed (lognormal) so both small and large
    gradients are stressed.  The x sample cycles through every cell first,
    which guarantees an adversarial cell is visited when
    n_samples >= n_cells^2.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    nc = field.n_cells
    R = field.macro_radius

    # cell-center sweep first, then uniform points
    n_cells_total = nc * nc
    centers_i = np.arange(n_samples) % n_cells_total
    xs = -R + (centers_i // nc) + 0.5
    ys = -R + (centers_i % nc) + 0.5
    n_random = max(0, n_samples - n_cells_total)
    if n_random:
        xs[n_cells_total:] = rng.uniform(-R, R, n_random)
        ys[n_cells_total:] = rng.uniform(-R, R, n_random)

    def draw_vectors():
        angles = rng.uniform(0.0, 2 * np.pi, n_samples)
        mags = rng.lognormal(mean=0.0, sigma=2.0, size=n_samples)
        return np.stack([mags * np.cos(angles), mags * np.sin(angles)], axis=-1)

    xi = draw_vectors()
    eta = draw_vectors()
    a_xi = evaluate_flux_map(field, xi, xs, ys)
    a_eta = evaluate_flux_map(field, eta, xs, ys)
    diff = xi - eta
    d2 = np.sum(diff ** 2, axis=-1)
    ok = d2 > 0
    adiff = a_xi - a_eta
    lip = np.sqrt(np.sum(adiff ** 2, axis=-1)[ok] / d2[ok])
    mono = np.sum(diff * adiff, axis=-1)[ok] / d2[ok]
    return AxiomReport(
        worst_lipschitz_ratio=float(np.max(lip)),
        worst_monotonicity_ratio=float(np.min(mono)),
        lambda_ellipticity=field.params.lambda_ellipticity,
        n_samples=int(n_samples),
    )


# ---------------------------------------------------------------------------
# serialization: header + one line per cell row

FIELD_FORMAT_VERSION = 1


def save_environment(path, field):
    p = field.params
    lines = [
        "# czlab-environment %d" % FIELD_FORMAT_VERSION,
        "# d %d" % field.dimension,
        "# R %.17g" % field.macro_radius,
        "# Lambda %.17g" % p.lambda_ellipticity,
        "# family %s" % p.family,
        "# seed %d" % field.seed,
        "# law_low %.17g" % p.law.low,
        "# law_high %.17g" % p.law.high,
        "# perturbation_weight %.17g" % p.perturbation_weight,
    ]
    flat = field.cell_values.reshape(field.n_cells, -1)
    for row in flat:
        lines.append(" ".join("%.17g" % v for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_environment(path):
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
    if header.get("czlab-environment") != str(FIELD_FORMAT_VERSION):
        raise ValidationError("not a czlab environment file: %s" % path)
    family = header["family"]
    params = FluxParams(
        lambda_ellipticity=float(header["Lambda"]),
        family=family,
        contrast_law=UniformLaw(float(header["law_low"]), float(header["law_high"])),
        perturbation_weight=float(header["perturbation_weight"]),
    )
    arr = np.array(rows)
    nc = arr.shape[0]
    if family == NONLINEAR:
        arr = arr.reshape(nc, nc, 2)
    arr.setflags(write=False)
    return CoefficientField(
        params=params,
        macro_radius=float(header["R"]),
        cell_values=arr,
        seed=int(header["seed"]),
    )
