"""Periodic uniform lattices, discrete differential operators, and quadrature.

Conventions used throughout the package:

* The discrete Laplacian ``laplacian0`` is the *negative* Laplacian
  (nonpositive spectrum): on ``cos(x)`` it returns ``-cos(x)`` up to O(h^2).
  Per active axis it is the standard second-order three-point stencil.
* ``grad_inner(a, b)`` approximates the flat inner product of the gradients.
  Per axis it averages the forward and backward difference products,

      0.5 * (D+a D+b + D-a D-b),

  which is second-order accurate, symmetric in (a, b), and makes the
  summation-by-parts identity

      integrate0(a * laplacian0(b)) + integrate0(grad_inner(a, b)) == 0

  hold exactly (to rounding) on a periodic grid.  The three-point Laplacian
  also satisfies the discrete maximum principle exactly: at a node where a
  field attains its grid maximum, ``laplacian0`` is <= 0.
* Quadrature weights are normalized so that ``integrate0(1) == 1``: the
  background volume is pinned to one and suppressed ambient axes contribute
  a factor one each.  Evolving-metric integrals are weighted by
  ``u ** (2n/(n-2))``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridSpec",
    "ScalarField",
    "GridMismatchError",
    "PositivityError",
    "laplacian0",
    "grad_inner",
    "integrate0",
    "integrate_g",
    "lp_norm_g",
    "field_min",
    "field_max",
    "volume_weight",
    "field_from_spec",
    "write_field",
    "read_field",
]


class GridMismatchError(ValueError):
    """Binary operation on fields living on different grids."""


class PositivityError(ValueError):
    """A conformal factor left the positive cone."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice.

    ``ambient_n`` is the ambient dimension and only enters through the
    conformal exponents; fields vary along the ``active_dims`` leading axes
    and are constant along the suppressed ones, for which the quadrature is
    exact.
    """

    ambient_n: int
    active_dims: int
    points: tuple[int, ...]
    periods: tuple[float, ...]

    def __post_init__(self):
        if self.ambient_n < 3:
            raise ValueError(f"ambient dimension must be >= 3, got {self.ambient_n}")
        if self.active_dims not in (1, 2, 3):
            raise ValueError(f"active_dims must be 1, 2 or 3, got {self.active_dims}")
        if self.active_dims > self.ambient_n:
            raise ValueError("active_dims cannot exceed ambient_n")
        object.__setattr__(self, "points", tuple(int(p) for p in self.points))
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))
        if len(self.points) != self.active_dims or len(self.periods) != self.active_dims:
            raise ValueError("points and periods must have one entry per active axis")
        if any(p < 8 for p in self.points):
            raise ValueError("need at least 8 points per active axis")
        if any(L <= 0 for L in self.periods):
            raise ValueError("periods must be positive")

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.periods, self.points))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def node_count(self) -> int:
        return int(np.prod(self.points))

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        """Node coordinates along one active axis, starting at 0."""
        N = self.points[axis]
        return np.arange(N) * (self.periods[axis] / N)

    def coordinate_mesh(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays (one per active axis)."""
        axes = [self.axis_coordinates(k) for k in range(self.active_dims)]
        return list(np.meshgrid(*axes, indexing="ij", sparse=True))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real nodal values on a grid.  Immutable; all values finite."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


def _check_same_grid(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


def laplacian0_values(grid: GridSpec, v: np.ndarray) -> np.ndarray:
    """Three-point periodic Laplacian on raw values (negative spectrum)."""
    out = np.zeros_like(v)
    for ax, h in enumerate(grid.spacing):
        out += (np.roll(v, -1, axis=ax) - 2.0 * v + np.roll(v, 1, axis=ax)) / (h * h)
    return out


def laplacian0(field: ScalarField) -> ScalarField:
    return ScalarField(field.grid, laplacian0_values(field.grid, field.values))


def grad_inner_values(grid: GridSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Symmetrized forward/backward gradient product on raw values."""
    out = np.zeros_like(a)
    for ax, h in enumerate(grid.spacing):
        dpa = (np.roll(a, -1, axis=ax) - a) / h
        dpb = (np.roll(b, -1, axis=ax) - b) / h
        out += 0.5 * (dpa * dpb + np.roll(dpa, 1, axis=ax) * np.roll(dpb, 1, axis=ax))
    return out


def grad_inner(a: ScalarField, b: ScalarField) -> ScalarField:
    """Pointwise <grad a, grad b> with the flat background metric.

    Symmetric in (a, b) and compatible with ``laplacian0`` in the sense that
    discrete integration by parts holds exactly.
    """
    _check_same_grid(a, b)
    return ScalarField(a.grid, grad_inner_values(a.grid, a.values, b.values))


def integrate0(field: ScalarField) -> float:
    """Background integral with weights normalized so integrate0(1) == 1."""
    return float(field.values.mean())


def power(v: np.ndarray, exponent: float) -> np.ndarray:
    """v ** exponent with a fast path for small integer exponents."""
    k = round(exponent)
    if abs(exponent - k) < 1e-13 and abs(k) <= 8:
        if k == 0:
            return np.ones_like(v)
        out = v
        for _ in range(abs(k) - 1):
            out = out * v
        return out if k > 0 else 1.0 / out
    return np.power(v, exponent)


def volume_weight(u: ScalarField, n: int) -> np.ndarray:
    """Evolving volume density u ** (2n/(n-2)) against the background weights."""
    if u.min() <= 0.0:
        raise PositivityError("state outside positive cone")
    return power(u.values, 2.0 * n / (n - 2.0))


def integrate_g(field: ScalarField, u: ScalarField, n: int | None = None) -> float:
    """Integral against the evolving volume measure defined by u."""
    _check_same_grid(field, u)
    m = n if n is not None else u.grid.ambient_n
    return float((field.values * volume_weight(u, m)).mean())


def lp_norm_g(field: ScalarField, p: float, u: ScalarField, n: int | None = None) -> float:
    """L^p norm with respect to the evolving volume measure."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    _check_same_grid(field, u)
    m = n if n is not None else u.grid.ambient_n
    w = volume_weight(u, m)
    return float((np.abs(field.values) ** p * w).mean() ** (1.0 / p))


def field_min(field: ScalarField) -> float:
    return field.min()


def field_max(field: ScalarField) -> float:
    return field.max()


# ---------------------------------------------------------------------------
# Construction from config strings and snapshot files
# ---------------------------------------------------------------------------

def field_from_spec(grid: GridSpec, spec: str) -> ScalarField:
    """Build a field from ``constant:<v>``, ``sinusoidal:<mean>,<amp>,<axis>[,<phase>]``
    or ``file:<path>``.  The sinusoid is mean + amp * sin(2 pi x/L + phase)."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if kind == "constant":
        return ScalarField.constant(grid, float(rest))
    if kind == "sinusoidal":
        parts = [p.strip() for p in rest.split(",")]
        if len(parts) not in (3, 4):
            raise ValueError(f"sinusoidal spec needs mean,amplitude,axis[,phase]: {spec!r}")
        mean, amp = float(parts[0]), float(parts[1])
        axis = int(parts[2])
        phase = float(parts[3]) if len(parts) == 4 else 0.0
        if not 0 <= axis < grid.active_dims:
            raise ValueError(f"sinusoidal axis {axis} out of range")
        x = grid.coordinate_mesh()[axis]
        vals = mean + amp * np.sin(2.0 * math.pi * x / grid.periods[axis] + phase)
        return ScalarField(grid, np.broadcast_to(vals, grid.shape).copy())
    if kind == "file":
        return read_field(rest.strip(), grid)
    raise ValueError(f"unknown field spec kind {kind!r}")


_FIELD_MAGIC = "conflow-field v1"


def write_field(path, field: ScalarField):
    """Snapshot format: one ASCII header line, then little-endian float64
    in row-major order."""
    g = field.grid
    header = (
        f"{_FIELD_MAGIC} n={g.ambient_n} dims={g.active_dims}"
        f" shape={','.join(str(p) for p in g.points)}"
        f" period={','.join(f'{L:.17g}' for L in g.periods)}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path, grid: GridSpec | None = None) -> ScalarField:
    """Read a snapshot file.  If ``grid`` is given, the header must match it."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        payload = fh.read()
    if not header.startswith(_FIELD_MAGIC):
        raise ValueError(f"{path}: not a field snapshot (bad magic)")
    meta = dict(tok.split("=", 1) for tok in header[len(_FIELD_MAGIC):].split())
    file_grid = GridSpec(
        ambient_n=int(meta["n"]),
        active_dims=int(meta["dims"]),
        points=tuple(int(s) for s in meta["shape"].split(",")),
        periods=tuple(float(s) for s in meta["period"].split(",")),
    )
    if grid is not None and file_grid != grid:
        raise GridMismatchError(f"{path}: snapshot grid {file_grid} does not match {grid}")
    values = np.frombuffer(payload, dtype="<f8")
    if values.size != file_grid.node_count:
        raise ValueError(f"{path}: payload has {values.size} values, expected {file_grid.node_count}")
    return ScalarField(file_grid, values.reshape(file_grid.shape))
