"""Permittivity profiles f(x) and their admissibility checks.

Admissible profiles take values in [0,1], are positive on a set of
positive measure, and are Hoelder continuous with some exponent
alpha in (0,1].  A second, optional condition asks f to be nonincreasing
toward the boundary (outward normal derivative <= 0) inside a collar;
quench-location results assume it.

The built-in kinds:

  Constant(c)          f = c, c in (0,1]
  Power(beta)          f = |x|^beta
  SlabSinPiecewise     the piecewise profile used by the simulation
                       sections: 1-16(x+1/4)^2 left of -1/4, |sin(2 pi x)|
                       on [-1/4, 1/4], 1-16(x-1/4)^2 right of 1/4,
                       on the slab (-1/2, 1/2)
  Tabulated(xs, fs)    piecewise-linear data, loaded from CSV if desired
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .mesh import Mesh, RadialBall, Slab

__all__ = [
    "Constant",
    "Power",
    "SlabSinPiecewise",
    "Tabulated",
    "Profile",
    "ProfileReport",
    "IncompatibleGeometry",
    "evaluate",
    "validate",
    "holder_constant",
    "tabulated_from_csv",
]


class IncompatibleGeometry(ValueError):
    """Profile cannot be evaluated on the given geometry."""


@dataclass(frozen=True)
class Constant:
    c: float
    holder_exponent: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.c <= 1.0):
            raise ValueError("constant profile requires c in (0,1]")
        _check_alpha(self.holder_exponent)

    def domain(self) -> Tuple[float, float]:
        return (-np.inf, np.inf)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, self.c) if x.ndim else float(self.c)


@dataclass(frozen=True)
class Power:
    """f(x) = |x|^beta; stays in [0,1] on domains with |x| <= 1."""

    exponent: float
    holder_exponent: float = None

    def __post_init__(self) -> None:
        if self.exponent < 0:
            raise ValueError("power profile requires exponent >= 0")
        if self.holder_exponent is None:
            alpha = min(self.exponent, 1.0) if self.exponent > 0 else 1.0
            object.__setattr__(self, "holder_exponent", alpha)
        _check_alpha(self.holder_exponent)

    def domain(self) -> Tuple[float, float]:
        return (-1.0, 1.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.abs(x) ** self.exponent
        return out if x.ndim else float(out)


@dataclass(frozen=True)
class SlabSinPiecewise:
    """Two-bump profile on the slab (-1/2, 1/2) with maxima at x = -1/4, 1/4.

    Even, continuous, Lipschitz (alpha = 1), vanishing at x = 0 and at both
    endpoints.
    """

    holder_exponent: float = 1.0

    def __post_init__(self) -> None:
        _check_alpha(self.holder_exponent)

    def domain(self) -> Tuple[float, float]:
        return (-0.5, 0.5)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < -0.5) or np.any(x > 0.5):
            raise ValueError("profile evaluated outside [-1/2, 1/2]")
        mid = np.abs(np.sin(2.0 * np.pi * x))
        left = 1.0 - 16.0 * (x + 0.25) ** 2
        right = 1.0 - 16.0 * (x - 0.25) ** 2
        out = np.where(x < -0.25, left, np.where(x > 0.25, right, mid))
        return out if x.ndim else float(out)


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear profile through (xs, fs) samples."""

    xs: np.ndarray
    fs: np.ndarray
    holder_exponent: float = 1.0

    def __post_init__(self) -> None:
        xs = np.asarray(self.xs, dtype=float)
        fs = np.asarray(self.fs, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or xs.shape != fs.shape:
            raise ValueError("tabulated profile needs matching 1-D xs, fs with >= 2 samples")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("tabulated xs must be strictly increasing")
        if fs.min() < 0.0 or fs.max() > 1.0:
            raise ValueError("tabulated values must lie in [0,1]")
        _check_alpha(self.holder_exponent)
        xs.setflags(write=False)
        fs.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "fs", fs)

    def domain(self) -> Tuple[float, float]:
        return (float(self.xs[0]), float(self.xs[-1]))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain()
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise ValueError("profile evaluated outside tabulated span")
        out = np.interp(x, self.xs, self.fs)
        return out if x.ndim else float(out)


Profile = Constant | Power | SlabSinPiecewise | Tabulated


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 1.0):
        raise ValueError("Hoelder exponent must lie in (0,1]")


def evaluate(profile: Profile, x):
    """Profile value(s) at x; raises outside the profile's domain or [0,1]."""
    out = profile(x)
    arr = np.asarray(out)
    if arr.min() < -1e-12 or arr.max() > 1.0 + 1e-9:
        raise ValueError("profile value escapes [0,1]; rejected, not clamped")
    return out


def tabulated_from_csv(path, holder_exponent: float = 1.0) -> Tabulated:
    """Load a two-column (coordinate, value) CSV, header row optional."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                continue  # header line
    if len(rows) < 2:
        raise ValueError("tabulated CSV needs at least 2 numeric rows")
    data = np.asarray(rows)
    return Tabulated(data[:, 0], data[:, 1], holder_exponent=holder_exponent)


@dataclass(frozen=True)
class ProfileReport:
    sup_f: float
    argmax: Tuple[float, ...]
    inf_f: float
    holder_constant: float
    satisfies_1_1: bool       # range, regularity, and positivity condition
    satisfies_1_9: bool       # nonincreasing toward the boundary in the collar
    holder_is_lower_bound: bool = True


def _check_geometry(profile: Profile, mesh: Mesh) -> None:
    if isinstance(profile, SlabSinPiecewise):
        g = mesh.geometry
        ok = isinstance(g, Slab) and abs(g.x_left + 0.5) < 1e-12 and abs(g.x_right - 0.5) < 1e-12
        if not ok:
            raise IncompatibleGeometry("SlabSinPiecewise is defined on the slab (-1/2, 1/2) only")
    lo, hi = profile.domain()
    if mesh.nodes[0] < lo - 1e-12 or mesh.nodes[-1] > hi + 1e-12:
        raise IncompatibleGeometry("mesh extends beyond the profile's domain")


def validate(profile: Profile, mesh: Mesh, collar: float) -> ProfileReport:
    """Evaluate admissibility on the mesh nodes.

    The boundary condition check walks one-sided differences inside a
    collar of the given width: moving outward, f must not increase
    (tolerance 1e-12).  sup/inf/argmax are node extrema, so they carry
    an O(h^alpha) approximation error.
    """
    if collar <= 0:
        raise ValueError("collar width must be positive")
    _check_geometry(profile, mesh)
    vals = np.asarray(evaluate(profile, mesh.nodes), dtype=float)
    sup_f = float(vals.max())
    inf_f = float(vals.min())
    argmax = tuple(float(x) for x in mesh.nodes[vals >= sup_f - 1e-12])
    in_range = inf_f >= -1e-12 and sup_f <= 1.0 + 1e-12
    positive_somewhere = bool(np.any(vals > 1e-12))
    K = holder_constant(profile, profile.holder_exponent, max(mesh.node_count, 1001))
    satisfies_1_1 = in_range and positive_somewhere and np.isfinite(K)

    x = mesh.nodes
    ok_19 = True
    # outward means +x (or +r) at the right end, -x at a slab's left end
    right = x >= x[-1] - collar
    idx = np.nonzero(right)[0]
    if idx.size >= 2:
        ok_19 &= bool(np.all(np.diff(vals[idx]) <= 1e-12))
    if not mesh.is_radial:
        left = x <= x[0] + collar
        idx = np.nonzero(left)[0]
        if idx.size >= 2:
            ok_19 &= bool(np.all(np.diff(vals[idx]) >= -1e-12))
    return ProfileReport(
        sup_f=sup_f,
        argmax=argmax,
        inf_f=inf_f,
        holder_constant=K,
        satisfies_1_1=bool(satisfies_1_1),
        satisfies_1_9=bool(ok_19),
    )


def holder_constant(profile: Profile, alpha: float, sample_count: int) -> float:
    """Sampled lower bound on the Hoelder constant.

    K = max |f(x)-f(y)| / |x-y|^alpha over pairs at dyadic strides of a
    uniform sample grid, from adjacent samples up to the domain diameter.
    Nested grids (sample_count -> 2*sample_count - 1) never decrease K.
    """
    _check_alpha(alpha)
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    if isinstance(profile, Constant):
        return 0.0
    lo, hi = profile.domain()
    if not np.isfinite(lo) or not np.isfinite(hi):
        return 0.0
    xs = np.linspace(lo, hi, int(sample_count))
    vals = np.asarray(evaluate(profile, xs), dtype=float)
    best = 0.0
    stride = 1
    while stride < sample_count:
        dx = (xs[stride:] - xs[:-stride]) ** alpha
        ratio = np.abs(vals[stride:] - vals[:-stride]) / dx
        best = max(best, float(ratio.max()))
        stride *= 2
    return best
