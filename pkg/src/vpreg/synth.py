"""Seeded synthetic phantoms, grid-generation target presets, and demo
grids. Everything here is deterministic given (seed, size)."""

from __future__ import annotations

import numpy as np
import scipy.ndimage

from .field import (
    Domain,
    LabelVolume,
    ScalarField,
    Transform,
    VectorField,
    from_displacement,
)
from .vpgrid import GridTargets


def _axes(dom: Domain) -> list[np.ndarray]:
    return [np.arange(n, dtype=np.float64) for n in dom.dims]


def _mesh(dom: Domain) -> list[np.ndarray]:
    return list(np.meshgrid(*_axes(dom), indexing="ij"))


def smooth_mask_image(mask: np.ndarray, sigma: float = 1.5) -> np.ndarray:
    return scipy.ndimage.gaussian_filter(mask.astype(np.float64), sigma)


def gaussian_blob_pair(n: int = 64, shift: float = 6.0) -> tuple[ScalarField, ScalarField]:
    """2-D pair: the moving blob sits `shift` voxels off the fixed blob."""
    dom = Domain((n, n))
    xx, yy = _mesh(dom)
    c = (n - 1) / 2.0
    sig2 = 2.0 * (n / 8.0) ** 2
    f = np.exp(-(((xx - c) ** 2 + (yy - c) ** 2) / sig2))
    m = np.exp(-(((xx - c - shift) ** 2 + (yy - c) ** 2) / sig2))
    return ScalarField(dom, m), ScalarField(dom, f)


def sphere_ellipsoid_pair(
    n: int = 64, sigma: float = 2.0
) -> tuple[ScalarField, ScalarField, LabelVolume, LabelVolume]:
    """3-D phantom: moving sphere, fixed ellipsoid of equal volume,
    both as smoothed binaries, with foreground label volumes."""
    dom = Domain((n, n, n))
    xx, yy, zz = _mesh(dom)
    c = (n - 1) / 2.0
    r = n * 0.22
    sphere = ((xx - c) ** 2 + (yy - c) ** 2 + (zz - c) ** 2) <= r**2
    ax = (r * 1.35, r * 0.90, r * 0.86)
    ellipsoid = (
        ((xx - c) / ax[0]) ** 2 + ((yy - c) / ax[1]) ** 2 + ((zz - c) / ax[2]) ** 2
    ) <= 1.0
    m = ScalarField(dom, smooth_mask_image(sphere, sigma))
    f = ScalarField(dom, smooth_mask_image(ellipsoid, sigma))
    return m, f, LabelVolume(dom, sphere.astype(np.int32)), LabelVolume(dom, ellipsoid.astype(np.int32))


def disk_cshape_pair(
    n: int = 64, sigma: float = 1.5
) -> tuple[ScalarField, ScalarField, LabelVolume, LabelVolume]:
    """2-D phantom: moving disk, fixed C shape (disk with a wedge opening).

    The C keeps the disk's topology so the matching deformation, while
    strong around the mouth, stays comfortably invertible at this grid
    resolution.
    """
    dom = Domain((n, n))
    xx, yy = _mesh(dom)
    c = (n - 1) / 2.0
    rr = np.sqrt((xx - c) ** 2 + (yy - c) ** 2)
    theta = np.arctan2(yy - c, xx - c)
    r_out = n * 0.26
    opening = np.deg2rad(45.0)
    cshape = (rr <= r_out) & (np.abs(theta) >= opening)
    area = cshape.sum()
    disk = rr <= np.sqrt(area / np.pi)
    m = ScalarField(dom, smooth_mask_image(disk, sigma))
    f = ScalarField(dom, smooth_mask_image(cshape, sigma))
    return m, f, LabelVolume(dom, disk.astype(np.int32)), LabelVolume(dom, cshape.astype(np.int32))


def radial_bump_targets(n: int = 64, amplitude: float = 0.6, d: int = 2) -> GridTargets:
    """Mass-preserving radial target determinant (mean exactly 1, curl 0)."""
    dom = Domain((n,) * d)
    mesh = _mesh(dom)
    c = (n - 1) / 2.0
    r2 = sum((ax - c) ** 2 for ax in mesh)
    g = np.exp(-r2 / (2.0 * (n / 6.0) ** 2))
    f = 1.0 + amplitude * (g - g.mean())
    f = f / f.mean()
    f_t = ScalarField(dom, f)
    if d == 2:
        g_t: ScalarField | VectorField = ScalarField(dom, np.zeros(dom.dims))
    else:
        g_t = VectorField(dom, np.zeros((3,) + dom.dims))
    return GridTargets(f_t, g_t)


def uniform_targets(n: int = 64, d: int = 2) -> GridTargets:
    dom = Domain((n,) * d)
    f_t = ScalarField(dom, np.ones(dom.dims))
    if d == 2:
        g_t: ScalarField | VectorField = ScalarField(dom, np.zeros(dom.dims))
    else:
        g_t = VectorField(dom, np.zeros((3,) + dom.dims))
    return GridTargets(f_t, g_t)


TARGET_PRESETS = {
    "uniform": uniform_targets,
    "radial-bump": radial_bump_targets,
}


def smooth_random_transform(
    dom: Domain, seed: int, amplitude: float = 2.5, modes: int = 3
) -> Transform:
    """Random low-frequency diffeomorphism: boundary-vanishing sine modes
    scaled so the map stays folding-free."""
    rng = np.random.default_rng(seed)
    mesh = _mesh(dom)
    u = np.zeros((dom.d,) + dom.dims)
    for c in range(dom.d):
        acc = np.zeros(dom.dims)
        for _ in range(modes):
            term = np.ones(dom.dims)
            for ax in range(dom.d):
                p = rng.integers(1, 4)
                term = term * np.sin(np.pi * p * mesh[ax] / (dom.dims[ax] - 1))
            acc += rng.uniform(-1.0, 1.0) * term
        u[c] = acc
    peak = np.abs(u).max()
    if peak > 0:
        u *= amplitude / peak
    phi = from_displacement(dom, u)
    while not phi.is_diffeomorphic():
        u *= 0.7
        phi = from_displacement(dom, u)
    return phi


def sin_bump_transform(dom: Domain, amplitude: float = 3.0) -> Transform:
    """Deterministic interior-supported bump used by inversion tests."""
    mesh = _mesh(dom)
    shape = np.ones(dom.dims)
    for ax in range(dom.d):
        shape = shape * np.sin(np.pi * mesh[ax] / (dom.dims[ax] - 1)) ** 2
    u = np.zeros((dom.d,) + dom.dims)
    u[0] = amplitude * shape
    u[1] = -0.6 * amplitude * shape
    return from_displacement(dom, u)


def demo_grids(seed: int, n: int = 64) -> tuple[Transform, Transform, Transform]:
    """Three synthetic 2-D grids standing in for hand-drawn demo meshes."""
    dom = Domain((n, n))
    a = smooth_random_transform(dom, seed, amplitude=0.035 * n)
    b = smooth_random_transform(dom, seed + 1, amplitude=0.045 * n)
    c = smooth_random_transform(dom, seed + 2, amplitude=0.040 * n)
    return a, b, c
