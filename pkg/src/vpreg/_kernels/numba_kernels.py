"""Numba-jitted hot kernels: multilinear/nearest sampling and Jacobian stencils.

Arithmetic mirrors numpy_kernels expression-for-expression; fastmath stays
off so both backends agree bitwise.
"""

import numpy as np
from numba import njit, prange

from .numpy_kernels import deriv_axis  # noqa: F401  (shared stencil helper)

_JIT = dict(parallel=True, fastmath=False, cache=True)


@njit(**_JIT)
def interp_scalar_2d(values, cx, cy):
    nx, ny = values.shape
    out = np.empty_like(cx)
    fx = nx - 1.0
    fy = ny - 1.0
    for i in prange(nx):
        for j in range(ny):
            x = cx[i, j]
            if x < 0.0:
                x = 0.0
            elif x > fx:
                x = fx
            y = cy[i, j]
            if y < 0.0:
                y = 0.0
            elif y > fy:
                y = fy
            i0 = int(x)
            if i0 > nx - 2:
                i0 = nx - 2
            j0 = int(y)
            if j0 > ny - 2:
                j0 = ny - 2
            tx = x - i0
            ty = y - j0
            c0 = values[i0, j0] * (1.0 - tx) + values[i0 + 1, j0] * tx
            c1 = values[i0, j0 + 1] * (1.0 - tx) + values[i0 + 1, j0 + 1] * tx
            out[i, j] = c0 * (1.0 - ty) + c1 * ty
    return out


@njit(**_JIT)
def interp_scalar_3d(values, cx, cy, cz):
    nx, ny, nz = values.shape
    out = np.empty_like(cx)
    fx = nx - 1.0
    fy = ny - 1.0
    fz = nz - 1.0
    for i in prange(nx):
        for j in range(ny):
            for k in range(nz):
                x = cx[i, j, k]
                if x < 0.0:
                    x = 0.0
                elif x > fx:
                    x = fx
                y = cy[i, j, k]
                if y < 0.0:
                    y = 0.0
                elif y > fy:
                    y = fy
                z = cz[i, j, k]
                if z < 0.0:
                    z = 0.0
                elif z > fz:
                    z = fz
                i0 = int(x)
                if i0 > nx - 2:
                    i0 = nx - 2
                j0 = int(y)
                if j0 > ny - 2:
                    j0 = ny - 2
                k0 = int(z)
                if k0 > nz - 2:
                    k0 = nz - 2
                tx = x - i0
                ty = y - j0
                tz = z - k0
                c00 = values[i0, j0, k0] * (1.0 - tx) + values[i0 + 1, j0, k0] * tx
                c10 = values[i0, j0 + 1, k0] * (1.0 - tx) + values[i0 + 1, j0 + 1, k0] * tx
                c01 = values[i0, j0, k0 + 1] * (1.0 - tx) + values[i0 + 1, j0, k0 + 1] * tx
                c11 = (
                    values[i0, j0 + 1, k0 + 1] * (1.0 - tx)
                    + values[i0 + 1, j0 + 1, k0 + 1] * tx
                )
                c0 = c00 * (1.0 - ty) + c10 * ty
                c1 = c01 * (1.0 - ty) + c11 * ty
                out[i, j, k] = c0 * (1.0 - tz) + c1 * tz
    return out


@njit(cache=True)
def interp_vector_2d(comps, cx, cy):
    out = np.empty_like(comps)
    for c in range(comps.shape[0]):
        out[c] = interp_scalar_2d(comps[c], cx, cy)
    return out


@njit(cache=True)
def interp_vector_3d(comps, cx, cy, cz):
    out = np.empty_like(comps)
    for c in range(comps.shape[0]):
        out[c] = interp_scalar_3d(comps[c], cx, cy, cz)
    return out


@njit(**_JIT)
def interp_nearest_2d(labels, cx, cy):
    nx, ny = labels.shape
    out = np.empty(labels.shape, dtype=labels.dtype)
    for i in prange(nx):
        for j in range(ny):
            ii = int(np.floor(cx[i, j] + 0.5))
            jj = int(np.floor(cy[i, j] + 0.5))
            if ii < 0:
                ii = 0
            elif ii > nx - 1:
                ii = nx - 1
            if jj < 0:
                jj = 0
            elif jj > ny - 1:
                jj = ny - 1
            out[i, j] = labels[ii, jj]
    return out


@njit(**_JIT)
def interp_nearest_3d(labels, cx, cy, cz):
    nx, ny, nz = labels.shape
    out = np.empty(labels.shape, dtype=labels.dtype)
    for i in prange(nx):
        for j in range(ny):
            for k in range(nz):
                ii = int(np.floor(cx[i, j, k] + 0.5))
                jj = int(np.floor(cy[i, j, k] + 0.5))
                kk = int(np.floor(cz[i, j, k] + 0.5))
                if ii < 0:
                    ii = 0
                elif ii > nx - 1:
                    ii = nx - 1
                if jj < 0:
                    jj = 0
                elif jj > ny - 1:
                    jj = ny - 1
                if kk < 0:
                    kk = 0
                elif kk > nz - 1:
                    kk = nz - 1
                out[i, j, k] = labels[ii, jj, kk]
    return out


@njit(cache=True)
def scatter_vector_2d(values, cx, cy):
    # serial loop: scatter adds collide across voxels
    d, nx, ny = values.shape
    out = np.zeros_like(values)
    fx = nx - 1.0
    fy = ny - 1.0
    for i in range(nx):
        for j in range(ny):
            x = cx[i, j]
            if x < 0.0:
                x = 0.0
            elif x > fx:
                x = fx
            y = cy[i, j]
            if y < 0.0:
                y = 0.0
            elif y > fy:
                y = fy
            i0 = int(x)
            if i0 > nx - 2:
                i0 = nx - 2
            j0 = int(y)
            if j0 > ny - 2:
                j0 = ny - 2
            tx = x - i0
            ty = y - j0
            w00 = (1.0 - tx) * (1.0 - ty)
            w01 = (1.0 - tx) * ty
            w10 = tx * (1.0 - ty)
            w11 = tx * ty
            for c in range(d):
                v = values[c, i, j]
                out[c, i0, j0] += v * w00
                out[c, i0, j0 + 1] += v * w01
                out[c, i0 + 1, j0] += v * w10
                out[c, i0 + 1, j0 + 1] += v * w11
    return out


@njit(cache=True)
def scatter_vector_3d(values, cx, cy, cz):
    d, nx, ny, nz = values.shape
    out = np.zeros_like(values)
    fx = nx - 1.0
    fy = ny - 1.0
    fz = nz - 1.0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                x = cx[i, j, k]
                if x < 0.0:
                    x = 0.0
                elif x > fx:
                    x = fx
                y = cy[i, j, k]
                if y < 0.0:
                    y = 0.0
                elif y > fy:
                    y = fy
                z = cz[i, j, k]
                if z < 0.0:
                    z = 0.0
                elif z > fz:
                    z = fz
                i0 = int(x)
                if i0 > nx - 2:
                    i0 = nx - 2
                j0 = int(y)
                if j0 > ny - 2:
                    j0 = ny - 2
                k0 = int(z)
                if k0 > nz - 2:
                    k0 = nz - 2
                tx = x - i0
                ty = y - j0
                tz = z - k0
                for c in range(d):
                    v = values[c, i, j, k]
                    out[c, i0, j0, k0] += v * (1 - tx) * (1 - ty) * (1 - tz)
                    out[c, i0, j0, k0 + 1] += v * (1 - tx) * (1 - ty) * tz
                    out[c, i0, j0 + 1, k0] += v * (1 - tx) * ty * (1 - tz)
                    out[c, i0, j0 + 1, k0 + 1] += v * (1 - tx) * ty * tz
                    out[c, i0 + 1, j0, k0] += v * tx * (1 - ty) * (1 - tz)
                    out[c, i0 + 1, j0, k0 + 1] += v * tx * (1 - ty) * tz
                    out[c, i0 + 1, j0 + 1, k0] += v * tx * ty * (1 - tz)
                    out[c, i0 + 1, j0 + 1, k0 + 1] += v * tx * ty * tz
    return out


@njit(**_JIT)
def jac_det_2d(c0, c1):
    nx, ny = c0.shape
    out = np.empty_like(c0)
    for i in prange(nx):
        for j in range(ny):
            if i == 0:
                a11 = -1.5 * c0[0, j] + 2.0 * c0[1, j] - 0.5 * c0[2, j]
                a21 = -1.5 * c1[0, j] + 2.0 * c1[1, j] - 0.5 * c1[2, j]
            elif i == nx - 1:
                a11 = 1.5 * c0[i, j] - 2.0 * c0[i - 1, j] + 0.5 * c0[i - 2, j]
                a21 = 1.5 * c1[i, j] - 2.0 * c1[i - 1, j] + 0.5 * c1[i - 2, j]
            else:
                a11 = (c0[i + 1, j] - c0[i - 1, j]) * 0.5
                a21 = (c1[i + 1, j] - c1[i - 1, j]) * 0.5
            if j == 0:
                a12 = -1.5 * c0[i, 0] + 2.0 * c0[i, 1] - 0.5 * c0[i, 2]
                a22 = -1.5 * c1[i, 0] + 2.0 * c1[i, 1] - 0.5 * c1[i, 2]
            elif j == ny - 1:
                a12 = 1.5 * c0[i, j] - 2.0 * c0[i, j - 1] + 0.5 * c0[i, j - 2]
                a22 = 1.5 * c1[i, j] - 2.0 * c1[i, j - 1] + 0.5 * c1[i, j - 2]
            else:
                a12 = (c0[i, j + 1] - c0[i, j - 1]) * 0.5
                a22 = (c1[i, j + 1] - c1[i, j - 1]) * 0.5
            out[i, j] = a11 * a22 - a12 * a21
    return out


@njit(**_JIT)
def jac_det_3d(c0, c1, c2):
    nx, ny, nz = c0.shape
    out = np.empty_like(c0)
    for i in prange(nx):
        for j in range(ny):
            for k in range(nz):
                if i == 0:
                    a11 = -1.5 * c0[0, j, k] + 2.0 * c0[1, j, k] - 0.5 * c0[2, j, k]
                    a21 = -1.5 * c1[0, j, k] + 2.0 * c1[1, j, k] - 0.5 * c1[2, j, k]
                    a31 = -1.5 * c2[0, j, k] + 2.0 * c2[1, j, k] - 0.5 * c2[2, j, k]
                elif i == nx - 1:
                    a11 = 1.5 * c0[i, j, k] - 2.0 * c0[i - 1, j, k] + 0.5 * c0[i - 2, j, k]
                    a21 = 1.5 * c1[i, j, k] - 2.0 * c1[i - 1, j, k] + 0.5 * c1[i - 2, j, k]
                    a31 = 1.5 * c2[i, j, k] - 2.0 * c2[i - 1, j, k] + 0.5 * c2[i - 2, j, k]
                else:
                    a11 = (c0[i + 1, j, k] - c0[i - 1, j, k]) * 0.5
                    a21 = (c1[i + 1, j, k] - c1[i - 1, j, k]) * 0.5
                    a31 = (c2[i + 1, j, k] - c2[i - 1, j, k]) * 0.5
                if j == 0:
                    a12 = -1.5 * c0[i, 0, k] + 2.0 * c0[i, 1, k] - 0.5 * c0[i, 2, k]
                    a22 = -1.5 * c1[i, 0, k] + 2.0 * c1[i, 1, k] - 0.5 * c1[i, 2, k]
                    a32 = -1.5 * c2[i, 0, k] + 2.0 * c2[i, 1, k] - 0.5 * c2[i, 2, k]
                elif j == ny - 1:
                    a12 = 1.5 * c0[i, j, k] - 2.0 * c0[i, j - 1, k] + 0.5 * c0[i, j - 2, k]
                    a22 = 1.5 * c1[i, j, k] - 2.0 * c1[i, j - 1, k] + 0.5 * c1[i, j - 2, k]
                    a32 = 1.5 * c2[i, j, k] - 2.0 * c2[i, j - 1, k] + 0.5 * c2[i, j - 2, k]
                else:
                    a12 = (c0[i, j + 1, k] - c0[i, j - 1, k]) * 0.5
                    a22 = (c1[i, j + 1, k] - c1[i, j - 1, k]) * 0.5
                    a32 = (c2[i, j + 1, k] - c2[i, j - 1, k]) * 0.5
                if k == 0:
                    a13 = -1.5 * c0[i, j, 0] + 2.0 * c0[i, j, 1] - 0.5 * c0[i, j, 2]
                    a23 = -1.5 * c1[i, j, 0] + 2.0 * c1[i, j, 1] - 0.5 * c1[i, j, 2]
                    a33 = -1.5 * c2[i, j, 0] + 2.0 * c2[i, j, 1] - 0.5 * c2[i, j, 2]
                elif k == nz - 1:
                    a13 = 1.5 * c0[i, j, k] - 2.0 * c0[i, j, k - 1] + 0.5 * c0[i, j, k - 2]
                    a23 = 1.5 * c1[i, j, k] - 2.0 * c1[i, j, k - 1] + 0.5 * c1[i, j, k - 2]
                    a33 = 1.5 * c2[i, j, k] - 2.0 * c2[i, j, k - 1] + 0.5 * c2[i, j, k - 2]
                else:
                    a13 = (c0[i, j, k + 1] - c0[i, j, k - 1]) * 0.5
                    a23 = (c1[i, j, k + 1] - c1[i, j, k - 1]) * 0.5
                    a33 = (c2[i, j, k + 1] - c2[i, j, k - 1]) * 0.5
                out[i, j, k] = (
                    a11 * (a22 * a33 - a23 * a32)
                    - a12 * (a21 * a33 - a23 * a31)
                    + a13 * (a21 * a32 - a22 * a31)
                )
    return out
