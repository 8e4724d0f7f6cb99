"""Uniform one-dimensional meshes for slab and ball domains.

A slab is an interval (x_left, x_right) with Dirichlet nodes at both ends.
A ball of dimension N is reduced to the radial coordinate r in [0, R]; the
only Dirichlet node is r = R, while r = 0 is an ordinary unknown governed
by the symmetry limit of the Laplacian,

    lap(u)(0) = N * u''(0)  ~  2 N (u_1 - u_0) / h^2.

Interior rows of the discrete Laplacian are second-order centered
differences; on a ball the operator acting on radial profiles is
u_rr + (N - 1)/r * u_r.  Quadrature is the composite trapezoid rule, with
radial integrands carrying the volume weight omega_{N-1} r^{N-1} where
omega_{N-1} = 2 pi^{N/2} / Gamma(N/2) is the area of the unit sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Slab",
    "RadialBall",
    "Geometry",
    "Mesh",
    "Field",
    "build_mesh",
    "integrate",
    "apply_laplacian",
    "sphere_area",
]


@dataclass(frozen=True)
class Slab:
    """Interval domain (x_left, x_right)."""

    x_left: float
    x_right: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.x_left) or not np.isfinite(self.x_right):
            raise ValueError("slab endpoints must be finite")
        if not self.x_right > self.x_left:
            raise ValueError("slab requires x_right > x_left")


@dataclass(frozen=True)
class RadialBall:
    """Ball of given dimension and radius, reduced to r in [0, radius]."""

    dimension: int
    radius: float

    def __post_init__(self) -> None:
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError("ball dimension must be a positive integer")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError("ball radius must be positive and finite")


Geometry = Slab | RadialBall


def sphere_area(dimension: int) -> float:
    """Area of the unit (N-1)-sphere: 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.pi ** (dimension / 2.0) / math.gamma(dimension / 2.0)


@dataclass(frozen=True)
class Mesh:
    """Uniform node set over a geometry, with cached quadrature weights."""

    geometry: Geometry
    nodes: np.ndarray
    h: float
    weights: np.ndarray = field(repr=False, default=None)

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("mesh needs at least 3 nodes")
        spacings = np.diff(nodes)
        if spacings.min() <= 0:
            raise ValueError("mesh nodes must be strictly increasing")
        scale = abs(nodes[-1] - nodes[0])
        if np.max(np.abs(spacings - self.h)) > 1e-12 * scale:
            raise ValueError("mesh nodes must be uniform")
        object.__setattr__(self, "nodes", nodes)
        if self.weights is None:
            object.__setattr__(self, "weights", _trapezoid_weights(self.geometry, nodes, self.h))

    @property
    def node_count(self) -> int:
        return self.nodes.size

    @property
    def is_radial(self) -> bool:
        return isinstance(self.geometry, RadialBall)

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=bool)
        mask[-1] = True
        if not self.is_radial:
            mask[0] = True
        return mask

    @property
    def unknown_slice(self) -> slice:
        """Index range of the Dirichlet-eliminated unknowns."""
        return slice(0 if self.is_radial else 1, self.node_count - 1)


def _trapezoid_weights(geometry: Geometry, nodes: np.ndarray, h: float) -> np.ndarray:
    w = np.full(nodes.size, h)
    w[0] = w[-1] = 0.5 * h
    if isinstance(geometry, RadialBall):
        n = geometry.dimension
        w = w * sphere_area(n) * nodes ** (n - 1)
    w.setflags(write=False)
    return w


def build_mesh(geometry: Geometry, node_count: int) -> Mesh:
    """Uniform mesh on the geometry with node_count >= 3 nodes.

    Slab nodes run from x_left to x_right; ball nodes from r = 0 to r = R.
    """
    if int(node_count) != node_count or node_count < 3:
        raise ValueError("node_count must be an integer >= 3")
    if isinstance(geometry, Slab):
        lo, hi = geometry.x_left, geometry.x_right
    else:
        lo, hi = 0.0, geometry.radius
    nodes = np.linspace(lo, hi, int(node_count))
    h = (hi - lo) / (node_count - 1)
    return Mesh(geometry=geometry, nodes=nodes, h=h)


@dataclass(frozen=True)
class Field:
    """Nodal values attached to a mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.node_count,):
            raise ValueError("field length must match the mesh node count")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, mesh: Mesh, fn) -> "Field":
        return cls(mesh, np.asarray([fn(x) for x in mesh.nodes], dtype=float))


def integrate(f: Field) -> float:
    """Trapezoid quadrature of the field over its domain.

    On a ball the integrand is weighted by omega_{N-1} r^{N-1}, so the
    result is the full N-dimensional integral of the radial profile.
    Exact for affine integrands on slabs.
    """
    return float(np.dot(f.mesh.weights, f.values))


def laplacian_bands(mesh: Mesh) -> np.ndarray:
    """Banded form (scipy solve_banded layout) of the Dirichlet Laplacian.

    Rows cover the unknowns of ``mesh.unknown_slice``; the zero boundary
    values are eliminated.
    """
    h2 = mesh.h * mesh.h
    if not mesh.is_radial:
        n = mesh.node_count - 2
        ab = np.zeros((3, n))
        ab[0, 1:] = 1.0 / h2
        ab[1, :] = -2.0 / h2
        ab[2, :-1] = 1.0 / h2
        return ab
    dim = mesh.geometry.dimension
    n = mesh.node_count - 1
    ab = np.zeros((3, n))
    r = mesh.nodes[1:n]
    # interior rows i = 1 .. n-1 at radius r_i; solve_banded layout puts
    # row i's coupling to r_{i+1} at ab[0, i+1] and to r_{i-1} at ab[2, i-1],
    # so both stripes carry the row radius r_i, shifted oppositely
    ab[1, 1:] = -2.0 / h2
    ab[0, 2:] = 1.0 / h2 + (dim - 1) / (2.0 * mesh.h * r[:-1])
    ab[2, 0:n - 1] = 1.0 / h2 - (dim - 1) / (2.0 * mesh.h * r)
    # origin row: lap(u)(0) = 2 N (u_1 - u_0) / h^2
    ab[1, 0] = -2.0 * dim / h2
    ab[0, 1] = 2.0 * dim / h2
    return ab


def bands_matvec(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Multiply a tridiagonal matrix in solve_banded layout by a vector."""
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def apply_laplacian(f: Field, boundary: str = "dirichlet_zero") -> Field:
    """Discrete Laplacian of a field; boundary rows are returned as 0.

    Interior rows use the stored neighbor values, so the stencil is exact
    for quadratics regardless of the boundary data.
    """
    if boundary != "dirichlet_zero":
        raise ValueError("unsupported boundary handling: %r" % (boundary,))
    mesh, u = f.mesh, f.values
    h2 = mesh.h * mesh.h
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h2
    if mesh.is_radial:
        dim = mesh.geometry.dimension
        r = mesh.nodes[1:-1]
        out[1:-1] += (dim - 1) * (u[2:] - u[:-2]) / (2.0 * mesh.h * r)
        out[0] = 2.0 * dim * (u[1] - u[0]) / h2
    return Field(mesh, out)


def field_to_csv(f: Field, path) -> None:
    """Write (node_index, x_or_r, value) rows with a header line."""
    with open(path, "w", newline="\n") as fh:
        fh.write("node_index,x_or_r,value\n")
        for i, (x, v) in enumerate(zip(f.mesh.nodes, f.values)):
            fh.write("%d,%.17g,%.17g\n" % (i, x, v))
