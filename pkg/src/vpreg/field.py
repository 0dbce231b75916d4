"""Lattice domain and the scalar/vector/transform/label containers.

Arrays are float64, indexed [x, y] or [x, y, z] with unit voxel spacing.
All containers are immutable after construction (backing arrays are marked
read-only), so instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ._kernels import kernels
from .errors import DegenerateDomain, DomainMismatch, NonFiniteData

MIN_EXTENT = 8


@dataclass(frozen=True)
class Domain:
    """Rectangular voxel lattice with d in {2, 3} and per-axis extents."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) not in (2, 3):
            raise DegenerateDomain(f"dimensionality must be 2 or 3, got {len(dims)}")
        if any(n < MIN_EXTENT for n in dims):
            raise DegenerateDomain(
                f"every axis extent must be >= {MIN_EXTENT}, got {dims}"
            )

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _as_values(domain: Domain, values: np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != domain.dims:
        raise DomainMismatch(
            f"{name} shape {values.shape} does not match domain dims {domain.dims}"
        )
    if not np.all(np.isfinite(values)):
        raise NonFiniteData(f"{name} contains non-finite values")
    return _freeze(values)


@dataclass(frozen=True)
class ScalarField:
    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_values(self.domain, self.values, "values"))


@dataclass(frozen=True)
class VectorField:
    """d scalar components stacked component-major: shape (d, *dims)."""

    domain: Domain
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=np.float64)
        expect = (self.domain.d,) + self.domain.dims
        if comps.shape != expect:
            raise DomainMismatch(
                f"components shape {comps.shape} does not match {expect}"
            )
        if not np.all(np.isfinite(comps)):
            raise NonFiniteData("components contain non-finite values")
        object.__setattr__(self, "components", _freeze(comps))

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.domain, self.components[i])


def identity_coords(domain: Domain) -> np.ndarray:
    axes = [np.arange(n, dtype=np.float64) for n in domain.dims]
    return np.stack(np.meshgrid(*axes, indexing="ij"))


def boundary_mask(domain: Domain) -> np.ndarray:
    mask = np.zeros(domain.dims, dtype=bool)
    for ax in range(domain.d):
        sl = [slice(None)] * domain.d
        sl[ax] = 0
        mask[tuple(sl)] = True
        sl[ax] = -1
        mask[tuple(sl)] = True
    return mask


def interior_slices(domain: Domain) -> tuple[slice, ...]:
    return tuple(slice(1, -1) for _ in range(domain.d))


@dataclass(frozen=True)
class Transform:
    """Map phi: Omega -> Omega stored as absolute voxel coordinates.

    Boundary voxels must equal the identity exactly; construct interior
    updates through pin_boundary/from_displacement to keep that invariant.
    """

    domain: Domain
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        expect = (self.domain.d,) + self.domain.dims
        if coords.shape != expect:
            raise DomainMismatch(f"coords shape {coords.shape} does not match {expect}")
        if not np.all(np.isfinite(coords)):
            raise NonFiniteData("coords contain non-finite values")
        mask = boundary_mask(self.domain)
        ident = identity_coords(self.domain)
        if not all(np.array_equal(coords[c][mask], ident[c][mask]) for c in range(self.domain.d)):
            raise DomainMismatch("transform must equal the identity on the boundary")
        object.__setattr__(self, "coords", _freeze(coords))

    def jacobian_determinant_values(self) -> np.ndarray:
        if self.domain.d == 2:
            return kernels.jac_det_2d(self.coords[0], self.coords[1])
        return kernels.jac_det_3d(self.coords[0], self.coords[1], self.coords[2])

    def is_diffeomorphic(self) -> bool:
        det = self.jacobian_determinant_values()
        return bool(det[interior_slices(self.domain)].min() > 0.0)


@dataclass(frozen=True)
class LabelVolume:
    """Integer segmentation labels; label 0 is reserved for background."""

    domain: Domain
    labels: np.ndarray
    label_set: frozenset[int] = dc_field(init=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape != self.domain.dims:
            raise DomainMismatch(
                f"labels shape {labels.shape} does not match domain dims {self.domain.dims}"
            )
        if not np.issubdtype(labels.dtype, np.integer):
            raise NonFiniteData("labels must be integers")
        if labels.min() < 0:
            raise NonFiniteData("labels must be non-negative")
        labels = labels.astype(np.int32, copy=True)
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "label_set", frozenset(int(v) for v in np.unique(labels)))


def make_identity(domain: Domain) -> Transform:
    return Transform(domain, identity_coords(domain))


def pin_boundary(domain: Domain, coords: np.ndarray) -> np.ndarray:
    """Copy of coords with boundary voxels reset to the identity exactly."""
    out = np.array(coords, dtype=np.float64, copy=True)
    mask = boundary_mask(domain)
    ident = identity_coords(domain)
    for c in range(domain.d):
        out[c][mask] = ident[c][mask]
    return out


def transform_from_coords(domain: Domain, coords: np.ndarray) -> Transform:
    return Transform(domain, pin_boundary(domain, coords))


def from_displacement(domain: Domain, u: np.ndarray) -> Transform:
    """Transform id + u; u is zeroed on the boundary."""
    coords = identity_coords(domain) + np.asarray(u, dtype=np.float64)
    return transform_from_coords(domain, coords)


def displacement(phi: Transform) -> VectorField:
    u = phi.coords - identity_coords(phi.domain)
    return VectorField(phi.domain, u)


def field_stats(s: ScalarField, std_mode: str = "sample") -> dict[str, float]:
    """Mean / standard deviation / min / max of a scalar field.

    std_mode="sample" uses sqrt(sum((x - mu)^2) / (N - 1)); "sum-root" is the
    variant with the root applied to the sum only, sqrt(sum) / (N - 1).
    """
    n = s.domain.size
    if n < 2:
        raise DegenerateDomain("field_stats requires at least 2 voxels")
    v = s.values
    mu = float(v.mean())
    ss = float(((v - mu) ** 2).sum())
    if std_mode == "sample":
        std = (ss / (n - 1)) ** 0.5
    elif std_mode == "sum-root":
        std = ss**0.5 / (n - 1)
    else:
        raise ValueError(f"unknown std_mode {std_mode!r}")
    return {"mean": mu, "std": std, "min": float(v.min()), "max": float(v.max())}
