"""Pure-numpy implementations of the hot sampling/stencil kernels.

These are the fallback path for environments without numba (or with
VPREG_BACKEND=numpy). Expression order mirrors the numba kernels so both
backends produce bit-identical results.
"""

from __future__ import annotations

import numpy as np


def deriv_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Second-order derivative along one axis, unit spacing.

    Central differences at interior points, one-sided three-point stencils
    at the two boundary slices.
    """
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) * 0.5
    out[0] = -1.5 * a[0] + 2.0 * a[1] - 0.5 * a[2]
    out[-1] = 1.5 * a[-1] - 2.0 * a[-2] + 0.5 * a[-3]
    return np.moveaxis(out, 0, axis)


def _cell_index(pos: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    p = np.clip(pos, 0.0, n - 1.0)
    i0 = np.floor(p).astype(np.int64)
    np.minimum(i0, n - 2, out=i0)
    return i0, p - i0


def interp_scalar_2d(values: np.ndarray, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    nx, ny = values.shape
    i0, tx = _cell_index(cx, nx)
    j0, ty = _cell_index(cy, ny)
    flat = values.ravel()
    base = i0 * ny + j0
    v00 = flat[base]
    v01 = flat[base + 1]
    v10 = flat[base + ny]
    v11 = flat[base + ny + 1]
    c0 = v00 * (1.0 - tx) + v10 * tx
    c1 = v01 * (1.0 - tx) + v11 * tx
    return c0 * (1.0 - ty) + c1 * ty


def interp_scalar_3d(
    values: np.ndarray, cx: np.ndarray, cy: np.ndarray, cz: np.ndarray
) -> np.ndarray:
    nx, ny, nz = values.shape
    i0, tx = _cell_index(cx, nx)
    j0, ty = _cell_index(cy, ny)
    k0, tz = _cell_index(cz, nz)
    flat = values.ravel()
    base = (i0 * ny + j0) * nz + k0
    sy = nz
    sx = ny * nz
    v000 = flat[base]
    v001 = flat[base + 1]
    v010 = flat[base + sy]
    v011 = flat[base + sy + 1]
    v100 = flat[base + sx]
    v101 = flat[base + sx + 1]
    v110 = flat[base + sx + sy]
    v111 = flat[base + sx + sy + 1]
    c00 = v000 * (1.0 - tx) + v100 * tx
    c10 = v010 * (1.0 - tx) + v110 * tx
    c01 = v001 * (1.0 - tx) + v101 * tx
    c11 = v011 * (1.0 - tx) + v111 * tx
    c0 = c00 * (1.0 - ty) + c10 * ty
    c1 = c01 * (1.0 - ty) + c11 * ty
    return c0 * (1.0 - tz) + c1 * tz


def interp_vector_2d(comps: np.ndarray, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    out = np.empty_like(comps)
    for c in range(comps.shape[0]):
        out[c] = interp_scalar_2d(comps[c], cx, cy)
    return out


def interp_vector_3d(
    comps: np.ndarray, cx: np.ndarray, cy: np.ndarray, cz: np.ndarray
) -> np.ndarray:
    out = np.empty_like(comps)
    for c in range(comps.shape[0]):
        out[c] = interp_scalar_3d(comps[c], cx, cy, cz)
    return out


def interp_nearest_2d(labels: np.ndarray, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    nx, ny = labels.shape
    i = np.clip(np.floor(cx + 0.5), 0, nx - 1).astype(np.int64)
    j = np.clip(np.floor(cy + 0.5), 0, ny - 1).astype(np.int64)
    return labels.ravel()[i * ny + j]


def interp_nearest_3d(
    labels: np.ndarray, cx: np.ndarray, cy: np.ndarray, cz: np.ndarray
) -> np.ndarray:
    nx, ny, nz = labels.shape
    i = np.clip(np.floor(cx + 0.5), 0, nx - 1).astype(np.int64)
    j = np.clip(np.floor(cy + 0.5), 0, ny - 1).astype(np.int64)
    k = np.clip(np.floor(cz + 0.5), 0, nz - 1).astype(np.int64)
    return labels.ravel()[(i * ny + j) * nz + k]


def scatter_vector_2d(values: np.ndarray, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    """Adjoint of bilinear sampling: spread values(omega) to the corners of
    the cell containing (cx, cy)(omega)."""
    d, nx, ny = values.shape
    i0, tx = _cell_index(cx, nx)
    j0, ty = _cell_index(cy, ny)
    base = (i0 * ny + j0).ravel()
    w00 = ((1.0 - tx) * (1.0 - ty)).ravel()
    w01 = ((1.0 - tx) * ty).ravel()
    w10 = (tx * (1.0 - ty)).ravel()
    w11 = (tx * ty).ravel()
    out = np.zeros_like(values)
    for c in range(d):
        flat = np.zeros(nx * ny)
        v = values[c].ravel()
        np.add.at(flat, base, v * w00)
        np.add.at(flat, base + 1, v * w01)
        np.add.at(flat, base + ny, v * w10)
        np.add.at(flat, base + ny + 1, v * w11)
        out[c] = flat.reshape(nx, ny)
    return out


def scatter_vector_3d(
    values: np.ndarray, cx: np.ndarray, cy: np.ndarray, cz: np.ndarray
) -> np.ndarray:
    """Adjoint of trilinear sampling (3-D scatter)."""
    d, nx, ny, nz = values.shape
    i0, tx = _cell_index(cx, nx)
    j0, ty = _cell_index(cy, ny)
    k0, tz = _cell_index(cz, nz)
    sy = nz
    sx = ny * nz
    base = ((i0 * ny + j0) * nz + k0).ravel()
    tx = tx.ravel()
    ty = ty.ravel()
    tz = tz.ravel()
    offsets_weights = [
        (0, (1 - tx) * (1 - ty) * (1 - tz)),
        (1, (1 - tx) * (1 - ty) * tz),
        (sy, (1 - tx) * ty * (1 - tz)),
        (sy + 1, (1 - tx) * ty * tz),
        (sx, tx * (1 - ty) * (1 - tz)),
        (sx + 1, tx * (1 - ty) * tz),
        (sx + sy, tx * ty * (1 - tz)),
        (sx + sy + 1, tx * ty * tz),
    ]
    out = np.zeros_like(values)
    for c in range(d):
        flat = np.zeros(nx * ny * nz)
        v = values[c].ravel()
        for off, w in offsets_weights:
            np.add.at(flat, base + off, v * w)
        out[c] = flat.reshape(nx, ny, nz)
    return out


def jac_det_2d(c0: np.ndarray, c1: np.ndarray) -> np.ndarray:
    a11 = deriv_axis(c0, 0)
    a12 = deriv_axis(c0, 1)
    a21 = deriv_axis(c1, 0)
    a22 = deriv_axis(c1, 1)
    return a11 * a22 - a12 * a21


def jac_det_3d(c0: np.ndarray, c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    a11 = deriv_axis(c0, 0)
    a12 = deriv_axis(c0, 1)
    a13 = deriv_axis(c0, 2)
    a21 = deriv_axis(c1, 0)
    a22 = deriv_axis(c1, 1)
    a23 = deriv_axis(c1, 2)
    a31 = deriv_axis(c2, 0)
    a32 = deriv_axis(c2, 1)
    a33 = deriv_axis(c2, 2)
    return (
        a11 * (a22 * a33 - a23 * a32)
        - a12 * (a21 * a33 - a23 * a31)
        + a13 * (a21 * a32 - a22 * a31)
    )
