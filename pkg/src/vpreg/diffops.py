"""Discrete differential operators, the pseudo-spectral Poisson solver, and
map composition/interpolation.

Stencil derivatives are second-order central with one-sided boundaries and
are what the optimization loops use; spectral derivatives (periodic) exist
for verification. The Poisson solver diagonalizes the Laplacian in a sine
basis (DirichletZero) or complex-exponential basis (Periodic).
"""

from __future__ import annotations

from enum import Enum

import numpy as np
import scipy.fft

from ._kernels import deriv_axis, kernels
from .errors import DomainMismatch, NonFiniteData
from .field import (
    Domain,
    ScalarField,
    Transform,
    VectorField,
    identity_coords,
    interior_slices,
    transform_from_coords,
)


class BcMode(Enum):
    PERIODIC = "periodic"
    DIRICHLET_ZERO = "dirichlet-zero"


def _spectral_deriv(a: np.ndarray, axis: int) -> np.ndarray:
    n = a.shape[axis]
    k = 2.0 * np.pi * scipy.fft.fftfreq(n)
    shape = [1] * a.ndim
    shape[axis] = n
    coef = scipy.fft.fft(a, axis=axis)
    coef *= (1j * k).reshape(shape)
    return scipy.fft.ifft(coef, axis=axis).real


def _deriv(a: np.ndarray, axis: int, method: str) -> np.ndarray:
    if method == "stencil":
        return deriv_axis(a, axis)
    if method == "spectral":
        return _spectral_deriv(a, axis)
    raise ValueError(f"unknown method {method!r}")


def gradient(s: ScalarField, method: str = "stencil") -> VectorField:
    g = np.stack([_deriv(s.values, ax, method) for ax in range(s.domain.d)])
    return VectorField(s.domain, g)


def divergence(v: VectorField, method: str = "stencil") -> ScalarField:
    total = _deriv(v.components[0], 0, method)
    for ax in range(1, v.domain.d):
        total = total + _deriv(v.components[ax], ax, method)
    return ScalarField(v.domain, total)


def curl(v: VectorField | ScalarField, method: str = "stencil"):
    """Rotational part.

    3-D vector -> vector curl; 2-D vector -> scalar curl dv2/dx - dv1/dy;
    2-D scalar g -> the perpendicular gradient (dg/dy, -dg/dx), i.e. the
    operator paired with the scalar curl in the 2-D div-curl system.
    """
    dom = v.domain
    if isinstance(v, ScalarField):
        if dom.d != 2:
            raise DomainMismatch("scalar curl input requires a 2-D domain")
        g = v.values
        return VectorField(dom, np.stack([_deriv(g, 1, method), -_deriv(g, 0, method)]))
    c = v.components
    if dom.d == 2:
        return ScalarField(dom, _deriv(c[1], 0, method) - _deriv(c[0], 1, method))
    out = np.stack(
        [
            _deriv(c[2], 1, method) - _deriv(c[1], 2, method),
            _deriv(c[0], 2, method) - _deriv(c[2], 0, method),
            _deriv(c[1], 0, method) - _deriv(c[0], 1, method),
        ]
    )
    return VectorField(dom, out)


def curl_values(domain: Domain, comps: np.ndarray, method: str = "stencil") -> np.ndarray:
    """curl on raw component arrays; returns (dims) for d=2, (3, dims) for d=3."""
    if domain.d == 2:
        return _deriv(comps[1], 0, method) - _deriv(comps[0], 1, method)
    return np.stack(
        [
            _deriv(comps[2], 1, method) - _deriv(comps[1], 2, method),
            _deriv(comps[0], 2, method) - _deriv(comps[2], 0, method),
            _deriv(comps[1], 0, method) - _deriv(comps[0], 1, method),
        ]
    )


def curl_force_values(domain: Domain, g: np.ndarray, method: str = "stencil") -> np.ndarray:
    """The "curl of the control" operand of the div-curl right-hand side."""
    if domain.d == 2:
        return np.stack([_deriv(g, 1, method), -_deriv(g, 0, method)])
    return curl_values(domain, g, method)


def jacobian_determinant(phi: Transform) -> ScalarField:
    return ScalarField(phi.domain, phi.jacobian_determinant_values())


def _stencil_second(a: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = a[2:] - 2.0 * a[1:-1] + a[:-2]
    if periodic:
        out[0] = a[1] - 2.0 * a[0] + a[-1]
        out[-1] = a[0] - 2.0 * a[-1] + a[-2]
    else:
        out[0] = 2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]
        out[-1] = 2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]
    return np.moveaxis(out, 0, axis)


def laplacian(v: VectorField, bc: BcMode = BcMode.DIRICHLET_ZERO, method: str = "stencil") -> VectorField:
    """2d+1-point stencil Laplacian per component (verification operator).

    method="spectral" applies the diagonal symbol of the matching solver
    basis instead (exact inverse pairing with poisson_solve).
    """
    if method == "spectral":
        solver = PoissonSolver(v.domain, bc)
        return VectorField(v.domain, solver.apply_forward(v.components))
    periodic = bc == BcMode.PERIODIC
    out = np.empty_like(v.components)
    for c in range(v.domain.d):
        acc = _stencil_second(v.components[c], 0, periodic)
        for ax in range(1, v.domain.d):
            acc = acc + _stencil_second(v.components[c], ax, periodic)
        out[c] = acc
    return VectorField(v.domain, out)


class PoissonSolver:
    """Inverts the Laplacian in a trigonometric basis, one division per mode.

    DirichletZero uses the type-I sine basis on interior voxels (solution is
    exactly zero on the boundary); Periodic uses complex exponentials with
    the zero mode projected out. The inverse-symbol table is cached at
    construction; a constructed solver is immutable and thread-safe.
    """

    def __init__(self, domain: Domain, bc: BcMode = BcMode.DIRICHLET_ZERO):
        self.domain = domain
        self.bc = bc
        if bc == BcMode.DIRICHLET_ZERO:
            sym = np.zeros(tuple(n - 2 for n in domain.dims))
            for ax, n in enumerate(domain.dims):
                m = n - 2
                k = np.arange(1, m + 1)
                lam = 2.0 * np.cos(np.pi * k / (m + 1)) - 2.0
                shape = [1] * domain.d
                shape[ax] = m
                sym = sym + lam.reshape(shape)
            self._symbol = sym
            self._inv_symbol = 1.0 / sym
        elif bc == BcMode.PERIODIC:
            dims = domain.dims
            sym = np.zeros(dims[:-1] + (dims[-1] // 2 + 1,))
            for ax, n in enumerate(dims):
                if ax == domain.d - 1:
                    k = 2.0 * np.pi * scipy.fft.rfftfreq(n)
                else:
                    k = 2.0 * np.pi * scipy.fft.fftfreq(n)
                shape = [1] * domain.d
                shape[ax] = k.size
                sym = sym + (-(k**2)).reshape(shape)
            self._symbol = sym
            inv = np.zeros_like(sym)
            nz = sym != 0.0
            inv[nz] = 1.0 / sym[nz]
            self._inv_symbol = inv
        else:
            raise ValueError(f"unknown bc {bc!r}")

    def _component(self, rhs: np.ndarray, table: np.ndarray) -> np.ndarray:
        if self.bc == BcMode.DIRICHLET_ZERO:
            inner = tuple(slice(1, -1) for _ in range(self.domain.d))
            coef = scipy.fft.dstn(rhs[inner], type=1)
            coef *= table
            out = np.zeros(self.domain.dims)
            out[inner] = scipy.fft.idstn(coef, type=1)
            return out
        coef = scipy.fft.rfftn(rhs)
        coef *= table
        return scipy.fft.irfftn(coef, s=self.domain.dims)

    def solve_component(self, rhs: np.ndarray) -> np.ndarray:
        return self._component(rhs, self._inv_symbol)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve per component of an array shaped (d, *dims) or (*dims)."""
        if rhs.shape == self.domain.dims:
            return self.solve_component(rhs)
        return np.stack([self.solve_component(rhs[c]) for c in range(rhs.shape[0])])

    def apply_forward(self, arr: np.ndarray) -> np.ndarray:
        """Multiply by the basis symbol: the Laplacian this solver inverts."""
        if arr.shape != self.domain.dims:
            return np.stack([self.apply_forward(arr[c]) for c in range(arr.shape[0])])
        return self._component(arr, self._symbol)


def poisson_solve(rhs: VectorField, bc: BcMode = BcMode.DIRICHLET_ZERO) -> VectorField:
    if not np.all(np.isfinite(rhs.components)):
        raise NonFiniteData("poisson_solve received non-finite right-hand side")
    solver = PoissonSolver(rhs.domain, bc)
    return VectorField(rhs.domain, solver.solve(rhs.components))


def warp_values(values: np.ndarray, coords: np.ndarray) -> np.ndarray:
    if values.ndim == 2:
        return kernels.interp_scalar_2d(values, coords[0], coords[1])
    return kernels.interp_scalar_3d(values, coords[0], coords[1], coords[2])


def warp(img: ScalarField, phi: Transform, oob: str = "clamp") -> ScalarField:
    """Multilinear resampling of img at phi; out-of-bounds samples clamp."""
    if oob != "clamp":
        raise ValueError("only clamped sampling is supported")
    if img.domain != phi.domain:
        raise DomainMismatch("image and transform domains differ")
    return ScalarField(img.domain, warp_values(img.values, phi.coords))


def compose_coords(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    if outer.shape[0] == 2:
        return kernels.interp_vector_2d(outer, inner[0], inner[1])
    return kernels.interp_vector_3d(outer, inner[0], inner[1], inner[2])


def compose(outer: Transform, inner: Transform) -> Transform:
    """outer o inner: sample outer's coordinates at inner's positions."""
    if outer.domain != inner.domain:
        raise DomainMismatch("cannot compose transforms on different domains")
    return transform_from_coords(outer.domain, compose_coords(outer.coords, inner.coords))


def small_displacement_residual(phi: Transform) -> ScalarField:
    """Diagnostic: div(phi) - det J(phi) - 2 plus the quadratic and cubic
    parts of det(I + grad u); algebraically zero, so it reports only
    floating-point noise of the shared stencils.
    """
    if phi.domain.d != 3:
        raise DomainMismatch("small_displacement_residual requires d=3")
    u = phi.coords - identity_coords(phi.domain)
    du = np.empty((3, 3) + phi.domain.dims)
    for i in range(3):
        for j in range(3):
            du[i, j] = deriv_axis(u[i], j)
    trace = du[0, 0] + du[1, 1] + du[2, 2]
    quad = (
        (du[0, 0] * du[1, 1] - du[0, 1] * du[1, 0])
        + (du[0, 0] * du[2, 2] - du[0, 2] * du[2, 0])
        + (du[1, 1] * du[2, 2] - du[1, 2] * du[2, 1])
    )
    cubic = (
        du[0, 0] * (du[1, 1] * du[2, 2] - du[1, 2] * du[2, 1])
        - du[0, 1] * (du[1, 0] * du[2, 2] - du[1, 2] * du[2, 0])
        + du[0, 2] * (du[1, 0] * du[2, 1] - du[1, 1] * du[2, 0])
    )
    div_phi = 3.0 + trace
    det = phi.jacobian_determinant_values()
    return ScalarField(phi.domain, div_phi - det - 2.0 + quad + cubic)


def interior_values(s: ScalarField) -> np.ndarray:
    return s.values[interior_slices(s.domain)]
