"""Variational grid generation with prescribed Jacobian determinant and
curl, the Lagrangian target-grid method, and inverse-map construction.

The target-grid solver descends on the intermediate map directly using the
explicit first-variation (residual minus the divergence of the
cofactor/curl coefficient vectors); the prescribed-JD solver descends on
the controls (f, g) of the div-curl system, solving one Poisson equation
per trial. Both accept a trial only when their objective decreases, so
objective traces are monotone by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import deriv_axis, kernels
from .diffops import (
    BcMode,
    PoissonSolver,
    compose,
    compose_coords,
    curl_force_values,
    curl_values,
)
from .errors import (
    DomainMismatch,
    FoldingDetected,
    MassMismatch,
    NonPositiveJD,
    NonSolenoidalCurl,
    Stalled,
)
from .field import (
    Domain,
    ScalarField,
    Transform,
    VectorField,
    identity_coords,
    interior_slices,
    pin_boundary,
    transform_from_coords,
)


@dataclass(frozen=True)
class GridTargets:
    """Prescribed Jacobian determinant f_t (> 0, mean 1) and curl g_t
    (divergence-free vector for d=3, scalar for d=2)."""

    f_t: ScalarField
    g_t: VectorField | ScalarField

    def __post_init__(self):
        if self.f_t.domain != self.g_t.domain:
            raise DomainMismatch("f_t and g_t live on different domains")
        want_scalar = self.f_t.domain.d == 2
        if want_scalar != isinstance(self.g_t, ScalarField):
            raise DomainMismatch(
                "g_t must be a scalar field for d=2 and a vector field for d=3"
            )


@dataclass(frozen=True)
class GridGenOptions:
    max_iters: int = 500
    step0: float = 1.0
    growth: float = 1.2
    shrink: float = 0.5
    min_step: float = 1e-8
    rel_tol: float = 1e-6
    rel_window: int = 10
    target: float | None = None
    reg_weight: float = 1.0

    def __post_init__(self):
        if not (self.growth > 1.0 > self.shrink > 0.0):
            raise ValueError("need growth > 1 > shrink > 0")


def validate_targets(
    t: GridTargets, renormalize: bool = False, div_tol: float = 1e-2, mass_tol: float = 1e-8
) -> GridTargets:
    """Check the admissibility conditions on (f_t, g_t).

    Returns the (possibly renormalized) targets. f_t must be strictly
    positive with discrete mean 1; a 3-D g_t must be divergence-free to
    within div_tol.
    """
    f_t = t.f_t
    if f_t.values.min() <= 0.0:
        raise NonPositiveJD("target Jacobian determinant must be strictly positive")
    mean = float(f_t.values.mean())
    if abs(mean - 1.0) > mass_tol:
        if not renormalize:
            raise MassMismatch(
                f"f_t integrates to {mean:.6g}*|Omega|; expected |Omega| "
                "(pass renormalize=True to rescale)"
            )
        f_t = ScalarField(f_t.domain, f_t.values / mean)
    if t.g_t.domain.d == 3:
        g = t.g_t
        div = deriv_axis(g.components[0], 0)
        for ax in range(1, 3):
            div = div + deriv_axis(g.components[ax], ax)
        worst = float(np.abs(div).max())
        if worst > div_tol:
            raise NonSolenoidalCurl(f"max |div g_t| = {worst:.3g} exceeds {div_tol:.3g}")
    return GridTargets(f_t, t.g_t)


def _jac_det_coords(coords: np.ndarray) -> np.ndarray:
    if coords.shape[0] == 2:
        return kernels.jac_det_2d(coords[0], coords[1])
    return kernels.jac_det_3d(coords[0], coords[1], coords[2])


def _partials(comps: np.ndarray) -> np.ndarray:
    d = comps.shape[0]
    out = np.empty((d, d) + comps.shape[1:])
    for i in range(d):
        for j in range(d):
            out[i, j] = deriv_axis(comps[i], j)
    return out


def _divergence(vecs: np.ndarray) -> np.ndarray:
    d = vecs.shape[0]
    acc = deriv_axis(vecs[0], 0)
    for ax in range(1, d):
        acc = acc + deriv_axis(vecs[ax], ax)
    return acc


def lm_gradient(
    domain: Domain,
    phi_m: np.ndarray,
    phi_o: np.ndarray,
    phi_t: np.ndarray,
    reg_weight: float = 1.0,
    lam_f: np.ndarray | None = None,
    lam_g: np.ndarray | None = None,
) -> np.ndarray:
    """First variation of the target-grid functional w.r.t. the
    intermediate map: residual minus div of the cofactor (v) and curl
    coefficient (w) vectors. The multipliers default to the state
    substitution (lambda_f = det J, lambda_g = curl of the composed map)
    but can be frozen explicitly, e.g. for derivative verification.

    The distance term's variation is realized as the density-normalized
    adjoint of the sampling operator: the residual is scattered along
    phi_o and divided by the scattered unit weights. This relocates each
    correction to the voxels of the intermediate map that actually produced
    it (without which descent stalls for large deformations) while reducing
    exactly to the plain residual when phi_o is the identity."""
    d = domain.d
    comp = compose_coords(phi_m, phi_o)
    raw = comp - phi_t
    ones = np.ones((1,) + domain.dims)
    if d == 2:
        residual = kernels.scatter_vector_2d(raw, phi_o[0], phi_o[1])
        density = kernels.scatter_vector_2d(ones, phi_o[0], phi_o[1])[0]
    else:
        residual = kernels.scatter_vector_3d(raw, phi_o[0], phi_o[1], phi_o[2])
        density = kernels.scatter_vector_3d(ones, phi_o[0], phi_o[1], phi_o[2])[0]
    sampled = density > 1e-12
    residual = np.where(sampled, residual / np.where(sampled, density, 1.0), 0.0)
    if lam_f is None:
        lam_f = _jac_det_coords(comp)
    if lam_g is None:
        lam_g = curl_values(domain, comp)
    det_o = _jac_det_coords(phi_o)
    pm = _partials(phi_m)
    po = _partials(phi_o)
    scale = lam_f * det_o
    grad = residual.copy()
    if d == 2:
        v1 = np.stack([scale * pm[1, 1], -scale * pm[1, 0]])
        v2 = np.stack([-scale * pm[0, 1], scale * pm[0, 0]])
        w1 = np.stack([-lam_g * po[0, 1], -lam_g * po[1, 1]])
        w2 = np.stack([lam_g * po[0, 0], lam_g * po[1, 0]])
        grad[0] -= reg_weight * _divergence(v1 + w1)
        grad[1] -= reg_weight * _divergence(v2 + w2)
        return grad
    a = pm
    cof = np.empty((3, 3) + domain.dims)
    cof[0, 0] = a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    cof[0, 1] = a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]
    cof[0, 2] = a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]
    cof[1, 0] = a[2, 1] * a[0, 2] - a[0, 1] * a[2, 2]
    cof[1, 1] = a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
    cof[1, 2] = a[2, 0] * a[0, 1] - a[0, 0] * a[2, 1]
    cof[2, 0] = a[0, 1] * a[1, 2] - a[1, 1] * a[0, 2]
    cof[2, 1] = a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]
    cof[2, 2] = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    # columns of phi_o partials: (phi_o)_x = po[:, 0] etc.
    for i in range(3):
        v_i = scale * cof[i]
        if i == 0:
            w_i = lam_g[1] * po[:, 2] - lam_g[2] * po[:, 1]
        elif i == 1:
            w_i = -lam_g[0] * po[:, 2] + lam_g[2] * po[:, 0]
        else:
            w_i = lam_g[0] * po[:, 1] - lam_g[1] * po[:, 0]
        grad[i] -= reg_weight * _divergence(v_i + w_i)
    return grad


class _Monitor:
    """Relative-decrease convergence window over accepted objective values."""

    def __init__(self, rel_tol: float, window: int):
        self.rel_tol = rel_tol
        self.window = window
        self._accepted: list[float] = []

    def push(self, value: float) -> None:
        self._accepted.append(value)

    def converged(self) -> bool:
        if len(self._accepted) < self.window + 1:
            return False
        old = self._accepted[-self.window - 1]
        new = self._accepted[-1]
        if old == 0.0:
            return True
        return (old - new) / abs(old) < self.rel_tol


def lm_target_grid(
    phi_o: Transform,
    phi_t: Transform,
    opts: GridGenOptions | None = None,
    guard: np.ndarray | None = None,
    jd_floor: float = 0.0,
    trace_sink: list | None = None,
) -> tuple[Transform, Transform]:
    """Descend on the intermediate map so that phi_m o phi_o approaches
    phi_t; returns (phi_m, phi_m o phi_o). The accepted-iterate objective
    0.5 * sum ||phi_m o phi_o - phi_t||^2 is strictly decreasing.

    `guard`, when given, is a coordinate array composed on the right of
    every trial before the folding check, so chained corrections keep the
    full accumulated map diffeomorphic. `jd_floor` raises the folding
    threshold above zero, keeping accepted iterates away from the boundary
    of the admissible set (the inverse construction uses a floor scaled by
    the forward map's stiffness)."""
    if phi_o.domain != phi_t.domain:
        raise DomainMismatch("phi_o and phi_t live on different domains")
    opts = opts or GridGenOptions()
    dom = phi_o.domain
    ident = identity_coords(dom)
    po = phi_o.coords
    pt = phi_t.coords
    phi_m = ident.copy()
    comp = compose_coords(phi_m, po)
    obj = 0.5 * float(((comp - pt) ** 2).sum())
    better = True
    grad = None
    monitor = _Monitor(opts.rel_tol, opts.rel_window)
    monitor.push(obj)
    accepted_any = False
    inner = interior_slices(dom)
    gscale = max(1.0, float(np.abs(pt).max()))
    t = opts.step0
    first = True
    # roundoff floor: per-voxel RMS distance below 1e-9 voxels is converged
    obj_floor = 0.5e-18 * dom.size
    for _ in range(opts.max_iters):
        if obj <= obj_floor:
            break
        if better:
            grad = lm_gradient(dom, phi_m, po, pt, opts.reg_weight)
            gmax = float(np.abs(grad).max())
            if gmax < 1e-14 * gscale:
                break
            if first:
                # normalize so the first trial moves on the residual scale
                rmax = float(np.abs(comp - pt).max())
                if rmax > 0.0 and gmax > 0.0:
                    t = opts.step0 * rmax / gmax
                first = False
        trial_m = pin_boundary(dom, phi_m - t * grad)
        trial_comp = compose_coords(trial_m, po)
        trial_obj = 0.5 * float(((trial_comp - pt) ** 2).sum())
        # folded trials are rejected like non-decreasing ones so every
        # accepted iterate stays inside the diffeomorphism pool
        ok = trial_obj < obj and float(_jac_det_coords(trial_m)[inner].min()) > jd_floor
        if ok and guard is not None:
            chained = pin_boundary(dom, compose_coords(trial_m, guard))
            ok = float(_jac_det_coords(chained)[inner].min()) > jd_floor
        if ok:
            phi_m = trial_m
            comp = trial_comp
            obj = trial_obj
            t *= opts.growth
            better = True
            accepted_any = True
            monitor.push(obj)
            if trace_sink is not None:
                trace_sink.append(obj)
            if monitor.converged():
                break
        else:
            t *= opts.shrink
            better = False
            if t < opts.min_step:
                # an exhausted step means no further decrease exists; that is
                # only an error when the run never progressed at all
                if accepted_any or monitor.converged():
                    break
                raise Stalled(f"step fell below {opts.min_step:g} at objective {obj:.6g}")
    phi_m_t = transform_from_coords(dom, phi_m)
    phi_full = transform_from_coords(dom, comp)
    return phi_m_t, phi_full


def invert(
    phi: Transform, opts: GridGenOptions | None = None, max_rounds: int = 12
) -> Transform:
    """Inverse map via the target-grid method with the identity as target.

    Runs continuation rounds: each round left-composes a correction that
    drives the remaining map toward the identity, with the accumulated
    inverse guarded against folding. Guarantees mean ||phi_m o phi - id||
    below the target tolerance (default 1e-2 voxels) and a diffeomorphic
    result, else raises Stalled.
    """
    det_min = float(phi.jacobian_determinant_values()[interior_slices(phi.domain)].min())
    if det_min <= 0.0:
        raise NonPositiveJD(f"input map is not diffeomorphic (min JD = {det_min:.6g})")
    opts = opts or GridGenOptions()
    target = opts.target if opts.target is not None else 1e-2
    dom = phi.domain
    ident = identity_coords(dom)
    ident_t = transform_from_coords(dom, ident)
    det_max = float(phi.jacobian_determinant_values()[interior_slices(dom)].max())
    # the exact inverse has det >= 1/max(det); keep a conditioning margin
    floor = min(0.2, 0.2 / det_max)

    def _mean_resid(remainder: Transform) -> float:
        diff = remainder.coords - ident
        return float(np.sqrt((diff**2).sum(axis=0)).mean())

    acc: Transform | None = None
    remainder = phi
    resid = _mean_resid(remainder)
    for _ in range(max_rounds):
        if resid <= target:
            break
        try:
            correction, _ = lm_target_grid(
                remainder,
                ident_t,
                opts,
                guard=None if acc is None else acc.coords,
                jd_floor=floor,
            )
        except Stalled:
            break
        candidate = correction if acc is None else compose(correction, acc)
        new_remainder = compose(candidate, phi)
        new_resid = _mean_resid(new_remainder)
        if new_resid >= resid:
            break
        acc = candidate
        remainder = new_remainder
        resid = new_resid
    if acc is None:
        acc = ident_t
    if resid > target:
        raise Stalled(
            f"inverse residual {resid:.4g} voxels did not reach target {target:g}"
        )
    if not acc.is_diffeomorphic():
        raise FoldingDetected("computed inverse is not diffeomorphic")
    return acc


def vp_generate(
    phi_o: Transform,
    targets: GridTargets,
    opts: GridGenOptions | None = None,
    trace_sink: list | None = None,
) -> Transform:
    """Grid with prescribed Jacobian determinant and curl.

    Gradient descent on the controls (f, g); every trial solves the
    div-curl system Delta phi_m = grad f - curl g for the displacement of
    the intermediate map and evaluates the squared distance of
    (det J, curl) from the targets on phi_m o phi_o.
    """
    opts = opts or GridGenOptions()
    det_min = float(phi_o.jacobian_determinant_values()[interior_slices(phi_o.domain)].min())
    if det_min <= 0.0:
        raise NonPositiveJD(f"initial map is not diffeomorphic (min JD = {det_min:.6g})")
    targets = validate_targets(targets)
    dom = phi_o.domain
    d = dom.d
    ident = identity_coords(dom)
    po = phi_o.coords
    ft = targets.f_t.values
    gt = targets.g_t.values if isinstance(targets.g_t, ScalarField) else targets.g_t.components
    solver = PoissonSolver(dom, BcMode.DIRICHLET_ZERO)

    def evaluate(f: np.ndarray, g: np.ndarray):
        rhs = np.stack([deriv_axis(f, ax) for ax in range(d)]) - curl_force_values(dom, g)
        u = solver.solve(rhs)
        comp = compose_coords(pin_boundary(dom, ident + u), po)
        det = _jac_det_coords(comp)
        cur = curl_values(dom, comp)
        obj = 0.5 * float(((det - ft) ** 2).sum()) + 0.5 * float(((cur - gt) ** 2).sum())
        return obj, det, cur, comp

    f = np.ones(dom.dims)
    g = np.zeros(dom.dims) if d == 2 else np.zeros((3,) + dom.dims)
    obj, det, cur, comp = evaluate(f, g)
    t = opts.step0
    monitor = _Monitor(opts.rel_tol, opts.rel_window)
    monitor.push(obj)
    accepted_any = False
    inner = interior_slices(dom)
    for _ in range(opts.max_iters):
        if obj == 0.0:
            break
        trial_f = f + t * (ft - det)
        trial_g = g + t * (gt - cur)
        trial_obj, trial_det, trial_cur, trial_comp = evaluate(trial_f, trial_g)
        if trial_obj < obj:
            if float(trial_det[inner].min()) <= 0.0:
                raise FoldingDetected("accepted iterate folded (min JD <= 0)")
            f, g = trial_f, trial_g
            obj, det, cur, comp = trial_obj, trial_det, trial_cur, trial_comp
            t *= opts.growth
            accepted_any = True
            monitor.push(obj)
            if trace_sink is not None:
                trace_sink.append(obj)
            if monitor.converged():
                break
        else:
            t *= opts.shrink
            if t < opts.min_step:
                if accepted_any or monitor.converged():
                    break
                raise Stalled(f"step fell below {opts.min_step:g} at objective {obj:.6g}")
    phi = transform_from_coords(dom, comp)
    if not phi.is_diffeomorphic():
        raise FoldingDetected("generated grid is not diffeomorphic")
    return phi


def consistency_report(
    phi_ab: Transform, phi_ba: Transform, phi_ac: Transform, phi_cb: Transform
) -> dict[str, float]:
    """Inverse-consistency and transitivity deviations, in voxels.

    phi_xy maps grid x to grid y (phi_xy o phi_x ~ phi_y); the chained map
    phi_cb o phi_ac should match phi_ab.
    """
    for other in (phi_ba, phi_ac, phi_cb):
        if other.domain != phi_ab.domain:
            raise DomainMismatch("all transforms must share one domain")
    dom = phi_ab.domain
    ident = identity_coords(dom)

    def _norm(coords: np.ndarray, ref: np.ndarray) -> np.ndarray:
        return np.sqrt(((coords - ref) ** 2).sum(axis=0))

    ba_ab = _norm(compose_coords(phi_ba.coords, phi_ab.coords), ident)
    ab_ba = _norm(compose_coords(phi_ab.coords, phi_ba.coords), ident)
    trans = _norm(compose_coords(phi_cb.coords, phi_ac.coords), phi_ab.coords)
    return {
        "inv_ba_ab_mean": float(ba_ab.mean()),
        "inv_ba_ab_max": float(ba_ab.max()),
        "inv_ab_ba_mean": float(ab_ba.mean()),
        "inv_ab_ba_max": float(ab_ba.max()),
        "transitivity_mean": float(trans.mean()),
        "transitivity_max": float(trans.max()),
    }


def write_grid_svg(
    path,
    phi: Transform,
    reference: Transform | None = None,
    stride: int = 2,
    scale: float = 8.0,
) -> None:
    """2-D grid-line SVG: phi in red over the reference grid (default the
    identity) in black."""
    if phi.domain.d != 2:
        raise DomainMismatch("grid SVG export is 2-D only")
    nx, ny = phi.domain.dims
    if reference is None:
        reference = transform_from_coords(phi.domain, identity_coords(phi.domain))

    def _polylines(coords: np.ndarray, color: str, width: float) -> list[str]:
        lines = []
        for i in list(range(0, nx, stride)) + [nx - 1]:
            pts = " ".join(
                f"{coords[0][i, j] * scale:.2f},{coords[1][i, j] * scale:.2f}"
                for j in range(ny)
            )
            lines.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'
            )
        for j in list(range(0, ny, stride)) + [ny - 1]:
            pts = " ".join(
                f"{coords[0][i, j] * scale:.2f},{coords[1][i, j] * scale:.2f}"
                for i in range(nx)
            )
            lines.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'
            )
        return lines

    w = (nx - 1) * scale
    h = (ny - 1) * scale
    body = _polylines(reference.coords, "black", 1.0) + _polylines(phi.coords, "red", 0.8)
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.2f} {h:.2f}">\n' + "\n".join(body) + "\n</svg>\n"
    )
    with open(path, "w") as fh:
        fh.write(svg)
