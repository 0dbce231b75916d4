"""Acceptance gate: every release-blocking criterion at its stated scale
and tolerance, one printed PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to stream the lines. The
heavy phantom registrations are module-scoped so each runs once.
"""

import json
import math
import sys
import time

import numpy as np
import pytest
import scipy.ndimage

from tests.conftest import band_limited_scalar, band_limited_vector, smooth_transform
from vpreg import diffops as do
from vpreg import io as vio
from vpreg import metrics as mx
from vpreg import register as reg
from vpreg import synth, vpgrid
from vpreg._kernels import deriv_axis
from vpreg.cli import main
from vpreg.field import (
    Domain,
    LabelVolume,
    ScalarField,
    identity_coords,
    make_identity,
    pin_boundary,
)


def report(name: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'} - {name}: {detail}"
    print(line, file=sys.stderr)
    assert ok, line


# ---------------------------------------------------------------- phantoms


@pytest.fixture(scope="module")
def phantom_3d():
    m, f, lab_m, lab_f = synth.sphere_ellipsoid_pair(64)
    opts = reg.RegOptions(
        stage1=reg.Stage1Options(max_iters=150),
        stage2=reg.Stage2Options(max_iters=120, patience=15),
    )
    t0 = time.time()
    result = reg.vpreg_pipeline(
        m, f, opts, invert_opts=vpgrid.GridGenOptions(max_iters=400, target=1e-2)
    )
    elapsed = time.time() - t0
    return m, f, lab_m, lab_f, result, elapsed


@pytest.fixture(scope="module")
def phantom_2d():
    m, f, lab_m, lab_f = synth.disk_cshape_pair(64)
    opts = reg.RegOptions(
        stage1=reg.Stage1Options(max_iters=300),
        stage2=reg.Stage2Options(max_iters=3000, patience=40),
    )
    t0 = time.time()
    result = reg.vpreg_pipeline(
        m, f, opts, invert_opts=vpgrid.GridGenOptions(max_iters=3000, target=1e-2)
    )
    elapsed = time.time() - t0
    return m, f, lab_m, lab_f, result, elapsed


# ------------------------------------------------------------ criterion 1


def test_poisson_solver_accuracy_and_speed():
    n = 64
    dom = Domain((n, n, n))
    mesh = identity_coords(dom)
    mode = np.ones(dom.dims)
    lam = 0.0
    for ax in range(3):
        mode = mode * np.sin(np.pi * mesh[ax] / (n - 1))
        lam += 2.0 * np.cos(np.pi / (n - 1)) - 2.0
    solver = do.PoissonSolver(dom, do.BcMode.DIRICHLET_ZERO)
    solver.solve_component(lam * mode)  # warm-up
    t0 = time.time()
    sol = solver.solve_component(lam * mode)
    t_dirichlet = time.time() - t0
    err_d = np.abs(sol - mode).max() / np.abs(mode).max()

    rng = np.random.default_rng(0)
    r = rng.standard_normal(dom.dims)
    r -= r.mean()
    periodic = do.PoissonSolver(dom, do.BcMode.PERIODIC)
    periodic.solve_component(r)
    t0 = time.time()
    u = periodic.solve_component(r)
    t_periodic = time.time() - t0
    err_p = np.abs(periodic.apply_forward(u) - r).max() / np.abs(r).max()

    ok = err_d < 1e-12 and err_p < 1e-10 and t_dirichlet < 1.0 and t_periodic < 1.0
    report(
        "poisson-solver",
        ok,
        f"dirichlet eig rel {err_d:.2e} (<1e-12), periodic fwd-inv {err_p:.2e} "
        f"(<1e-10), solve times {t_dirichlet*1e3:.0f}/{t_periodic*1e3:.0f} ms (<1 s)",
    )


# ------------------------------------------------------------ criterion 2


def test_operator_identities():
    dom = Domain((32, 32, 32))
    rng = np.random.default_rng(1)
    worst_stencil = 0.0
    worst_spectral = 0.0
    for _ in range(10):
        s = band_limited_scalar(dom, rng)
        g = do.gradient(s)
        cg = do.curl(g)
        worst_stencil = max(
            worst_stencil, np.abs(cg.components).max() / max(np.abs(g.components).max(), 1e-12)
        )
        v = band_limited_vector(dom, rng)
        c = do.curl(v)
        dc = do.divergence(c)
        worst_stencil = max(
            worst_stencil, np.abs(dc.values).max() / max(np.abs(c.components).max(), 1e-12)
        )
        sp = band_limited_scalar(dom, rng, periodic=True)
        gp = do.gradient(sp, "spectral")
        cgp = do.curl(gp, method="spectral")
        worst_spectral = max(
            worst_spectral, np.abs(cgp.components).max() / max(np.abs(gp.components).max(), 1e-12)
        )
        vp_ = band_limited_vector(dom, rng, periodic=True)
        cp = do.curl(vp_, method="spectral")
        dcp = do.divergence(cp, "spectral")
        worst_spectral = max(
            worst_spectral, np.abs(dcp.values).max() / max(np.abs(cp.components).max(), 1e-12)
        )
    # the per-axis stencils commute, so the stencil identities hold to
    # roundoff (measured ~2e-16); 1e-12 is the frozen bound
    ok = worst_spectral < 1e-10 and worst_stencil < 1e-12
    report(
        "operator-identities",
        ok,
        f"spectral {worst_spectral:.2e} (<1e-10), stencil {worst_stencil:.2e} (<1e-12)",
    )


# ------------------------------------------------------------ criterion 3


def _interior_bump(dom, seed, vector=False):
    dims = dom.dims
    r = np.random.default_rng(seed)
    shape = ((dom.d,) if vector else ()) + dims
    out = np.zeros(shape)
    core = ((slice(None),) if vector else ()) + tuple(slice(3, s - 3) for s in dims)
    out[core] = r.standard_normal(out[core].shape)
    sigma = ((0,) if vector else ()) + (1.2,) * dom.d
    out = scipy.ndimage.gaussian_filter(out, sigma)
    edge = ((slice(None),) if vector else ()) + tuple(slice(2, s - 2) for s in dims)
    trimmed = np.zeros(shape)
    trimmed[edge] = out[edge]
    return trimmed


def _gaussian_images(dom):
    mesh = identity_coords(dom)
    c = (dom.dims[0] - 1) / 2.0
    sig2 = 2.0 * (dom.dims[0] / 6.0) ** 2
    m = np.exp(-sum((mesh[a] - c + 0.7 * a + 0.5) ** 2 for a in range(dom.d)) / sig2)
    f = np.exp(-sum((mesh[a] - c - 0.6) ** 2 for a in range(dom.d)) / sig2)
    return m, f


def test_gradient_checks():
    worst = 0.0
    for dims in ((16, 16), (12, 12, 12)):
        dom = Domain(dims)
        d = dom.d
        n = dom.size
        m_values, f_values = _gaussian_images(dom)
        solver = do.PoissonSolver(dom, do.BcMode.DIRICHLET_ZERO)
        b = reg.adjoint_b(
            ScalarField(dom, m_values), ScalarField(dom, f_values), make_identity(dom), solver
        )
        df, dg = reg.grad_fg(b)
        dg_arr = dg.values if isinstance(dg, ScalarField) else dg.components

        def mse_controls(fc, gc):
            rhs = np.stack([deriv_axis(fc, ax) for ax in range(d)])
            rhs = rhs - do.curl_force_values(dom, gc)
            u = solver.solve(rhs)
            coords = pin_boundary(dom, identity_coords(dom) + u)
            w = do.warp_values(m_values, coords)
            return float(((w - f_values) ** 2).sum()) / (2 * n)

        def mse_c(c_arr):
            u = solver.solve(c_arr)
            coords = pin_boundary(dom, identity_coords(dom) + u)
            w = do.warp_values(m_values, coords)
            return float(((w - f_values) ** 2).sum()) / (2 * n)

        eps = 1e-5
        f0 = np.ones(dims)
        g0 = np.zeros(dims) if d == 2 else np.zeros((3,) + dims)
        for seed in (1, 2):
            delta_f = _interior_bump(dom, seed)
            fd = (mse_controls(f0 + eps * delta_f, g0) - mse_controls(f0 - eps * delta_f, g0)) / (2 * eps)
            an = float((df.values / n * delta_f).sum())
            worst = max(worst, abs(fd - an) / max(abs(fd), 1e-12))
            delta_g = _interior_bump(dom, seed + 10, vector=(d == 3))
            fd = (mse_controls(f0, g0 + eps * delta_g) - mse_controls(f0, g0 - eps * delta_g)) / (2 * eps)
            an = float((dg_arr / n * delta_g).sum())
            worst = max(worst, abs(fd - an) / max(abs(fd), 1e-12))
            delta_c = _interior_bump(dom, seed + 20, vector=True)
            c0 = np.zeros((d,) + dims)
            fd = (mse_c(c0 + eps * delta_c) - mse_c(c0 - eps * delta_c)) / (2 * eps)
            an = float((b.components / n * delta_c).sum())
            worst = max(worst, abs(fd - an) / max(abs(fd), 1e-12))

        # target-grid gradient: full functional at identity base grid
        rng = np.random.default_rng(5)
        po = identity_coords(dom)
        pm = smooth_transform(dom, rng, amplitude=1.0).coords.copy()
        pt = smooth_transform(dom, rng, amplitude=0.8).coords.copy()
        grad = vpgrid.lm_gradient(dom, pm, po, pt, 1.0)

        def lm_objective(pmx):
            comp = do.compose_coords(pmx, po)
            det = vpgrid._jac_det_coords(pmx)
            p = vpgrid._partials(pmx)
            if d == 2:
                reg_g = 0.5 * float(((p[1, 0] - p[0, 1]) ** 2).sum())
            else:
                c0_ = p[2, 1] - p[1, 2]
                c1_ = p[0, 2] - p[2, 0]
                c2_ = p[1, 0] - p[0, 1]
                reg_g = 0.5 * float((c0_**2 + c1_**2 + c2_**2).sum())
            return 0.5 * float(((comp - pt) ** 2).sum()) + 0.5 * float((det**2).sum()) + reg_g

        eps = 1e-6
        for _ in range(25):
            c = int(rng.integers(0, d))
            idx = tuple(int(rng.integers(3, s - 3)) for s in dims)
            p = np.zeros((d,) + dims)
            p[(c,) + idx] = 1.0
            fd = (lm_objective(pm + eps * p) - lm_objective(pm - eps * p)) / (2 * eps)
            worst = max(worst, abs(fd - grad[(c,) + idx]) / max(abs(fd), 1e-10))

    ok = worst < 1e-4
    report("gradient-checks", ok, f"max relative error {worst:.2e} (<1e-4) on 16^2 and 12^3")


# --------------------------------------------------------- criteria 4 + 5


def test_registration_phantom_3d(phantom_3d):
    m, f, lab_m, lab_f, result, elapsed = phantom_3d
    ratio = result.metrics.mse_ratio
    dice = mx.dice(mx.warp_labels(lab_m, result.phi), lab_f, 1)
    accepted = [e for e in result.trace if e.accepted]
    min_jd_trace = min(e.min_jd for e in accepted)
    ok = ratio < 0.2 and min_jd_trace > 0.0 and dice >= 0.90 and elapsed < 300.0
    report(
        "registration-phantom-3d",
        ok,
        f"64^3 sphere->ellipsoid: mse-ratio {ratio:.4f} (<0.2), dice {dice:.4f} "
        f"(>=0.90), min accepted JD {min_jd_trace:.4f} (>0), {elapsed:.0f} s (<300)",
    )


def test_registration_phantom_2d(phantom_2d):
    m, f, lab_m, lab_f, result, elapsed = phantom_2d
    ratio = result.metrics.mse_ratio
    dice = mx.dice(mx.warp_labels(lab_m, result.phi), lab_f, 1)
    accepted = [e for e in result.trace if e.accepted]
    min_jd_trace = min(e.min_jd for e in accepted)
    ok = ratio < 0.2 and min_jd_trace > 0.0 and dice >= 0.90 and elapsed < 300.0
    report(
        "registration-phantom-2d",
        ok,
        f"64^2 disk->C: mse-ratio {ratio:.4f} (<0.2), dice {dice:.4f} (>=0.90), "
        f"min accepted JD {min_jd_trace:.4f} (>0), {elapsed:.0f} s (<300)",
    )


def test_inverse_consistency_phantoms(phantom_3d, phantom_2d):
    details = []
    ok = True
    for tag, bundle in (("64^3", phantom_3d), ("64^2", phantom_2d)):
        rec = bundle[4].metrics
        ok = ok and rec.inv_sumdet_per_voxel < 1e-2 and rec.inv_sumnorm_per_voxel < 1e-2
        details.append(
            f"{tag}: sum|detJ-1|/N {rec.inv_sumdet_per_voxel:.2e}, "
            f"sum|comp-id|/N {rec.inv_sumnorm_per_voxel:.2e} (both <1e-2)"
        )
    report("inverse-consistency", ok, "; ".join(details))


# ------------------------------------------------------------ criterion 6


def test_demo_consistency(tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = main(
            ["--quiet", "demo-consistency", "--out", str(out), "--seed", "11", "--size", "64"]
        )
        assert code == 0
        outs.append(out)
    identical = all(
        (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        for name in ("report.csv", "report.json")
    )
    rep = json.loads((outs[0] / "report.json").read_text())
    inv_mean = max(rep["inv_ba_ab_mean"], rep["inv_ab_ba_mean"])
    ok = identical and inv_mean < 0.5 and rep["transitivity_mean"] < 1.0
    report(
        "demo-consistency",
        ok,
        f"inverse mean {inv_mean:.3f} vox (<0.5), transitivity mean "
        f"{rep['transitivity_mean']:.3f} vox (<1), byte-identical reruns {identical}",
    )


# ------------------------------------------------------------ criterion 7


def test_grid_generation_radial_bump():
    targets = synth.radial_bump_targets(64, amplitude=0.6, d=2)
    phi = vpgrid.vp_generate(
        make_identity(Domain((64, 64))), targets, vpgrid.GridGenOptions(max_iters=500)
    )
    det = phi.jacobian_determinant_values()
    rel = np.linalg.norm(det - targets.f_t.values) / np.linalg.norm(targets.f_t.values)
    diffeo = phi.is_diffeomorphic()
    ok = rel < 0.05 and diffeo
    report(
        "grid-generation",
        ok,
        f"64^2 radial bump: ||detJ - target||/||target|| {rel:.4f} (<0.05), diffeomorphic {diffeo}",
    )


# ------------------------------------------------------------ criterion 8


def brute_dice(a, b, label):
    na = nb = ninter = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        in_a = x == label
        in_b = y == label
        na += in_a
        nb += in_b
        ninter += in_a and in_b
    return 1.0 if na + nb == 0 else 2.0 * ninter / (na + nb)


def brute_mi(mv, fv, bins):
    lo_m, hi_m = min(mv), max(mv)
    lo_f, hi_f = min(fv), max(fv)
    if lo_m == hi_m or lo_f == hi_f:
        return 0.0
    joint = {}
    for a, b in zip(mv, fv):
        i = min(int((a - lo_m) / (hi_m - lo_m) * bins), bins - 1)
        j = min(int((b - lo_f) / (hi_f - lo_f) * bins), bins - 1)
        joint[(i, j)] = joint.get((i, j), 0) + 1
    n = len(mv)
    pm, pf = {}, {}
    for (i, j), cnt in joint.items():
        pm[i] = pm.get(i, 0.0) + cnt / n
        pf[j] = pf.get(j, 0.0) + cnt / n
    return math.fsum(
        (cnt / n) * math.log((cnt / n) / (pm[i] * pf[j])) for (i, j), cnt in joint.items()
    )


def brute_quantiles(vals):
    s = sorted(vals)
    n = len(s)
    out = {}
    for q, name in ((0.0, "min"), (0.25, "q25"), (0.5, "median"), (0.75, "q75"), (1.0, "max")):
        pos = q * (n - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, n - 1)
        out[name] = s[lo] + (pos - lo) * (s[hi] - s[lo])
    return out


def test_metric_oracles():
    rng = np.random.default_rng(7)
    worst = 0.0
    trials = 100
    for _ in range(trials):
        d = int(rng.integers(2, 4))
        dims = tuple(int(rng.integers(8, 17)) for _ in range(d))
        if int(np.prod(dims)) > 16**3:
            dims = (8,) * d
        dom = Domain(dims)
        la = LabelVolume(dom, rng.integers(0, 4, size=dims).astype(np.int32))
        lb = LabelVolume(dom, rng.integers(0, 4, size=dims).astype(np.int32))
        label = int(rng.integers(1, 4))
        got = mx.dice(la, lb, label)
        want = brute_dice(la.labels, lb.labels, label)
        worst = max(worst, abs(got - want) / max(abs(want), 1.0))

        m = ScalarField(dom, rng.standard_normal(dims))
        f = ScalarField(dom, rng.standard_normal(dims))
        got = mx.mse(m, f, make_identity(dom))
        want = math.fsum(
            (a - b) ** 2 for a, b in zip(m.values.ravel().tolist(), f.values.ravel().tolist())
        ) / (2 * dom.size)
        worst = max(worst, abs(got - want) / max(abs(want), 1e-12))

        got = mx.mutual_information(m, f, bins=12)
        want = brute_mi(m.values.ravel().tolist(), f.values.ravel().tolist(), 12)
        worst = max(worst, abs(got - want) / max(abs(want), 1e-12))

        vals = rng.standard_normal(int(rng.integers(3, 12))).tolist()
        rec = mx.cohort_summary([mx.MetricRecord(mse_ratio=v) for v in vals]).stats["mse_ratio"]
        want_q = brute_quantiles(vals)
        for name, value in want_q.items():
            worst = max(worst, abs(rec[name] - value) / max(abs(value), 1e-12))

        rng_local = np.random.default_rng(int(rng.integers(0, 2**31)))
        phi = smooth_transform(dom, rng_local, amplitude=1.0)
        det = phi.jacobian_determinant_values()
        grads = [
            [np.gradient(phi.coords[i], axis=j, edge_order=2) for j in range(d)]
            for i in range(d)
        ]
        jac = np.stack([np.stack(row, axis=-1) for row in grads], axis=-2)
        oracle = np.linalg.det(jac)
        worst = max(worst, float(np.abs(det - oracle).max()))

    ok = worst < 1e-12
    report(
        "metric-oracles",
        ok,
        f"dice/mse/MI/quantiles/jacobian vs brute force over {trials} trials: "
        f"max deviation {worst:.2e} (<1e-12)",
    )


# ------------------------------------------------------------ criterion 9


def test_engine_economy():
    m, f, _, _ = synth.disk_cshape_pair(64)
    mz, fz = reg.zscore(m), reg.zscore(f)
    finals = {}
    traces = {}
    for engine in (reg.Engine.PENALTY, reg.Engine.CONTROL):
        opts = reg.RegOptions(
            engine=engine,
            stage1=reg.Stage1Options(max_iters=300),
            control_stage1=reg.Stage2Options(max_iters=800, patience=40),
            stage2=reg.Stage2Options(max_iters=3000, patience=40),
        )
        result = reg.register(mz, fz, opts)
        traces[engine] = result.trace
        finals[engine] = [e.mse for e in result.trace if e.accepted][-1]
    threshold = max(finals.values())

    def solves_to(trace):
        for e in trace:
            if e.accepted and e.mse <= threshold:
                return e.solves
        return None

    sp = solves_to(traces[reg.Engine.PENALTY])
    sc = solves_to(traces[reg.Engine.CONTROL])
    ok = sp is not None and sc is not None and sp < sc
    report(
        "engine-economy",
        ok,
        f"Poisson solves to reach MSE {threshold:.2e} on 64^2 phantom: "
        f"penalty {sp} < control {sc}",
    )


# ----------------------------------------------------------- criterion 10


def _t1_like_fixture(tmp_path, rng):
    dom = Domain((24, 24, 24))
    base = scipy.ndimage.gaussian_filter(rng.standard_normal(dom.dims), 2.5)
    warp_map = smooth_transform(dom, rng, amplitude=1.5)
    moving = ScalarField(dom, base)
    fixed = do.warp(moving, warp_map)

    def seg(num_labels, seed):
        r = np.random.default_rng(seed)
        fields = scipy.ndimage.gaussian_filter(
            r.standard_normal((num_labels,) + dom.dims), (0, 3, 3, 3)
        )
        return LabelVolume(dom, (np.argmax(fields, axis=0) + 1).astype(np.int32))

    return dom, moving, fixed, seg(4, 1), seg(4, 2), seg(35, 3), seg(35, 4)


def test_t1_schema_reports(tmp_path):
    rng = np.random.default_rng(99)
    dom, moving, fixed, seg4_m, seg4_f, seg35_m, seg35_f = _t1_like_fixture(tmp_path, rng)
    vio.write_volume(moving, tmp_path / "m")
    vio.write_volume(fixed, tmp_path / "f")
    vio.write_volume(seg4_m, tmp_path / "seg4_m")
    vio.write_volume(seg4_f, tmp_path / "seg4_f")
    vio.write_volume(seg35_m, tmp_path / "seg35_m")
    vio.write_volume(seg35_f, tmp_path / "seg35_f")
    run = tmp_path / "run"
    code = main(
        [
            "--quiet",
            "register",
            "--moving",
            str(tmp_path / "m"),
            "--fixed",
            str(tmp_path / "f"),
            "--out",
            str(run),
            "--stage1-iters",
            "60",
            "--stage2-iters",
            "80",
            "--invert-target",
            "0.05",
        ]
    )
    ok = code == 0
    headers = {}
    for tag, seg_m, seg_f in (("seg4", "seg4_m", "seg4_f"), ("seg35", "seg35_m", "seg35_f")):
        out = tmp_path / f"metrics_{tag}"
        code = main(
            [
                "--quiet",
                "metrics",
                "--moving",
                str(tmp_path / "m"),
                "--fixed",
                str(tmp_path / "f"),
                "--map",
                str(run / "phi"),
                "--inverse-map",
                str(run / "phi_inv"),
                "--labels-moving",
                str(tmp_path / seg_m),
                "--labels-fixed",
                str(tmp_path / seg_f),
                "--out",
                str(out),
            ]
        )
        ok = ok and code == 0
        headers[tag] = (out / "metrics.csv").read_text().splitlines()[0].split(",")
    expected = set(mx.METRIC_FIELDS)
    ok = ok and expected <= set(headers["seg4"]) and expected <= set(headers["seg35"])
    ok = ok and {f"dice_{i}" for i in range(1, 5)} <= set(headers["seg4"])
    ok = ok and {f"dice_{i}" for i in range(1, 36)} <= set(headers["seg35"])
    report(
        "t1-schema-reports",
        ok,
        f"register+metrics emit complete reports: {len(headers['seg4'])} columns "
        f"with 4 labels, {len(headers['seg35'])} with 35 labels",
    )
