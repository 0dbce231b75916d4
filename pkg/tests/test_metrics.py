import math

import numpy as np
import pytest

from tests.conftest import smooth_transform
from vpreg import metrics as mx
from vpreg import vpgrid
from vpreg.diffops import compose
from vpreg.errors import DomainMismatch, EmptyCohort, ZeroBaselineMI
from vpreg.field import (
    Domain,
    LabelVolume,
    ScalarField,
    identity_coords,
    make_identity,
    transform_from_coords,
)
from vpreg.synth import sin_bump_transform


def brute_dice(a, b, label):
    na = nb = ninter = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        in_a = x == label
        in_b = y == label
        na += in_a
        nb += in_b
        ninter += in_a and in_b
    if na + nb == 0:
        return 1.0
    return 2.0 * ninter / (na + nb)


def brute_mi(mv, fv, bins):
    lo_m, hi_m = min(mv), max(mv)
    lo_f, hi_f = min(fv), max(fv)
    if lo_m == hi_m or lo_f == hi_f:
        return 0.0
    joint: dict[tuple[int, int], int] = {}
    for a, b in zip(mv, fv):
        i = min(int((a - lo_m) / (hi_m - lo_m) * bins), bins - 1)
        j = min(int((b - lo_f) / (hi_f - lo_f) * bins), bins - 1)
        joint[(i, j)] = joint.get((i, j), 0) + 1
    n = len(mv)
    pm: dict[int, float] = {}
    pf: dict[int, float] = {}
    for (i, j), cnt in joint.items():
        pm[i] = pm.get(i, 0.0) + cnt / n
        pf[j] = pf.get(j, 0.0) + cnt / n
    return math.fsum(
        (cnt / n) * math.log((cnt / n) / (pm[i] * pf[j])) for (i, j), cnt in joint.items()
    )


def test_dice_trivial_and_counted():
    dom = Domain((8, 8, 8))
    a = np.zeros(dom.dims, dtype=np.int32)
    a[2:4, 2:4, 2:4] = 1
    la = LabelVolume(dom, a)
    assert mx.dice(la, la, 1) == 1.0
    b = np.zeros(dom.dims, dtype=np.int32)
    b[5:7, 5:7, 5:7] = 1
    assert mx.dice(la, LabelVolume(dom, b), 1) == 0.0
    # two 2x2x2 cubes overlapping in a 1x2x2 slab
    c = np.zeros(dom.dims, dtype=np.int32)
    c[3:5, 2:4, 2:4] = 1
    assert mx.dice(la, LabelVolume(dom, c), 1) == 2 * 4 / (8 + 8)


def test_dice_empty_conventions():
    dom = Domain((8, 8))
    empty = LabelVolume(dom, np.zeros(dom.dims, dtype=np.int32))
    full = np.zeros(dom.dims, dtype=np.int32)
    full[2:4, 2:4] = 7
    assert mx.dice(empty, empty, 7) == 1.0
    assert mx.dice(empty, LabelVolume(dom, full), 7) == 0.0


def test_dice_symmetry_and_permutation(rng):
    dom = Domain((10, 10))
    a = LabelVolume(dom, rng.integers(0, 4, size=dom.dims).astype(np.int32))
    b = LabelVolume(dom, rng.integers(0, 4, size=dom.dims).astype(np.int32))
    for label in (1, 2, 3):
        assert mx.dice(a, b, label) == mx.dice(b, a, label)
    perm = rng.permutation(dom.size)
    ap = LabelVolume(dom, a.labels.ravel()[perm].reshape(dom.dims))
    bp = LabelVolume(dom, b.labels.ravel()[perm].reshape(dom.dims))
    for label in (1, 2, 3):
        assert mx.dice(ap, bp, label) == mx.dice(a, b, label)


def test_warp_labels_identity_shift_and_subset(rng):
    dom = Domain((16, 16))
    labels = LabelVolume(dom, rng.integers(0, 5, size=dom.dims).astype(np.int32))
    assert np.array_equal(mx.warp_labels(labels, make_identity(dom)).labels, labels.labels)
    ident = identity_coords(dom)
    coords = ident.copy()
    coords[0] = np.clip(coords[0] + 1.0, 0, 15)
    phi = transform_from_coords(dom, coords)
    moved = mx.warp_labels(labels, phi)
    assert np.array_equal(moved.labels[1:-2, 1:-1], labels.labels[2:-1, 1:-1])
    warped = mx.warp_labels(labels, smooth_transform(dom, rng, amplitude=2.0))
    assert warped.label_set <= labels.label_set


def test_mse_ratio_conventions(rng):
    dom = Domain((12, 12))
    m = ScalarField(dom, rng.standard_normal(dom.dims))
    ident = make_identity(dom)
    assert mx.mse_ratio(m, m, ident) == 1.0  # zero baseline convention
    f = ScalarField(dom, rng.standard_normal(dom.dims))
    assert mx.mse_ratio(m, f, ident) == 1.0  # identity map leaves MSE unchanged
    phi = smooth_transform(dom, rng, amplitude=1.0)
    got = mx.mse_ratio(m, f, phi)
    oracle = mx.mse(m, f, phi) / mx.mse(m, f, ident)
    assert abs(got - oracle) < 1e-14


def test_mutual_information_self_is_entropy(rng):
    dom = Domain((24, 24))
    img = ScalarField(dom, rng.standard_normal(dom.dims))
    mi = mx.mutual_information(img, img, bins=32)
    hist, _ = np.histogram(img.values, bins=32)
    p = hist / hist.sum()
    entropy = -math.fsum(float(x) * math.log(float(x)) for x in p[p > 0])
    assert abs(mi - entropy) < 1e-12


def test_mutual_information_constant_and_symmetry(rng):
    dom = Domain((16, 16))
    const = ScalarField(dom, np.full(dom.dims, 2.0))
    img = ScalarField(dom, rng.standard_normal(dom.dims))
    assert mx.mutual_information(const, img) == 0.0
    other = ScalarField(dom, rng.standard_normal(dom.dims))
    assert abs(mx.mutual_information(img, other) - mx.mutual_information(other, img)) < 1e-12


def test_mutual_information_independent_noise(rng):
    # histogram MI carries a (bins-1)^2 / 2N sampling bias; 16 bins keeps
    # it well under the 0.05 bound at 64^2 (measured 0.031)
    dom = Domain((64, 64))
    a = ScalarField(dom, rng.uniform(size=dom.dims))
    b = ScalarField(dom, rng.uniform(size=dom.dims))
    assert mx.mutual_information(a, b, bins=16) < 0.05


def test_mutual_information_rescale_invariance(rng):
    dom = Domain((16, 16))
    img = ScalarField(dom, rng.standard_normal(dom.dims))
    other = ScalarField(dom, rng.standard_normal(dom.dims))
    base = mx.mutual_information(img, other)
    # power-of-two scaling keeps every bin assignment bit-identical
    scaled = ScalarField(dom, 2.0 * img.values)
    assert mx.mutual_information(scaled, other) == base
    halved = ScalarField(dom, 0.5 * img.values)
    assert mx.mutual_information(halved, other) == base


def test_mi_increment(rng):
    dom = Domain((16, 16))
    img = ScalarField(dom, rng.standard_normal(dom.dims))
    other = ScalarField(dom, rng.standard_normal(dom.dims))
    assert mx.mi_increment(img, other, make_identity(dom)) == 0.0
    const = ScalarField(dom, np.full(dom.dims, 1.0))
    with pytest.raises(ZeroBaselineMI):
        mx.mi_increment(const, other, make_identity(dom))


def test_mi_increment_positive_on_alignment():
    from vpreg import register as reg
    from vpreg import synth

    m, f = synth.gaussian_blob_pair(48, shift=5.0)
    result = reg.register(reg.zscore(m), reg.zscore(f))
    assert mx.mi_increment(m, f, result.phi) > 0.0


def test_mi_incr_pct_field():
    rec = mx.MetricRecord(mi_incr=0.2934)
    assert abs(rec.mi_incr_pct - 29.34) < 1e-12
    assert mx.MetricRecord().mi_incr_pct is None


def test_jd_stats_identity_and_scaling():
    dom = Domain((16, 16, 16))
    stats = mx.jd_stats(make_identity(dom))
    assert stats == {"min": 1.0, "max": 1.0, "neg_fraction": 0.0}
    ident = identity_coords(dom)
    coords = ident.copy()
    c = 7.5
    block = np.s_[:, 3:13, 3:13, 3:13]
    coords[block] = c + 1.1 * (ident[block] - c)
    phi = transform_from_coords(dom, coords)
    det = phi.jacobian_determinant_values()
    assert np.allclose(det[5:11, 5:11, 5:11], 1.331, rtol=1e-12)
    assert mx.jd_stats(phi)["max"] >= 1.331 - 1e-12
    assert mx.jd_stats(phi)["neg_fraction"] == 0.0


def test_jd_stats_detects_fold():
    dom = Domain((16, 16))
    coords = identity_coords(dom)
    coords[0, 7, 7] -= 3.0
    phi = transform_from_coords(dom, coords)
    stats = mx.jd_stats(phi)
    assert stats["min"] < 0.0
    assert stats["neg_fraction"] > 0.0
    # brute-force determinant oracle at the folded voxel
    g = [[np.gradient(coords[i], axis=j, edge_order=2) for j in range(2)] for i in range(2)]
    det = g[0][0] * g[1][1] - g[0][1] * g[1][0]
    assert det.min() < 0.0


def test_inverse_consistency_identity():
    dom = Domain((12, 12))
    ident = make_identity(dom)
    rep = mx.inverse_consistency(ident, ident)
    assert all(v == 0.0 for v in rep.values())


def test_inverse_consistency_both_orders_reported():
    dom = Domain((32, 32))
    phi = sin_bump_transform(dom, amplitude=2.0)
    inv = vpgrid.invert(phi, vpgrid.GridGenOptions(max_iters=500, target=5e-2))
    rep = mx.inverse_consistency(phi, inv)
    for prefix in ("inv", "rev"):
        for stat in ("maxdet", "sumdet", "sumdet_per_voxel", "maxnorm", "sumnorm", "sumnorm_per_voxel"):
            assert f"{prefix}_{stat}" in rep
    assert np.isclose(rep["inv_sumnorm_per_voxel"], rep["inv_sumnorm"] / dom.size)
    psi = compose(inv, phi)
    dev = np.sqrt(((psi.coords - identity_coords(dom)) ** 2).sum(axis=0))
    assert np.isclose(rep["inv_maxnorm"], dev.max())


def test_inverse_consistency_monotone_in_tolerance():
    dom = Domain((48, 48))
    phi = sin_bump_transform(dom, amplitude=4.0)
    sums = []
    for target in (1e-1, 1e-2, 1e-3):
        inv = vpgrid.invert(phi, vpgrid.GridGenOptions(max_iters=3000, target=target))
        rep = mx.inverse_consistency(phi, inv)
        sums.append(rep["inv_sumnorm_per_voxel"])
        assert rep["inv_sumnorm_per_voxel"] <= target
    assert sums[0] >= sums[1] >= sums[2]


def test_cohort_summary_single_record():
    rec = mx.MetricRecord(mse_ratio=0.4, jd_min=0.2)
    summary = mx.cohort_summary([rec])
    s = summary.stats["mse_ratio"]
    assert s["min"] == s["q25"] == s["median"] == s["q75"] == s["max"] == 0.4
    assert s["std"] == 0.0


def test_cohort_summary_quartiles_linear_interpolation():
    records = [mx.MetricRecord(mse_ratio=v) for v in (1.0, 2.0, 3.0, 4.0)]
    s = mx.cohort_summary(records).stats["mse_ratio"]
    assert s["median"] == 2.5
    assert s["q25"] == 1.75
    assert s["q75"] == 3.25


def test_cohort_summary_mean_std_oracle(rng):
    vals = rng.standard_normal(17).tolist()
    records = [mx.MetricRecord(mse_ratio=v) for v in vals]
    s = mx.cohort_summary(records).stats["mse_ratio"]
    mu = math.fsum(vals) / len(vals)
    std = math.sqrt(math.fsum((v - mu) ** 2 for v in vals) / (len(vals) - 1))
    assert abs(s["mean"] - mu) < 1e-14
    assert abs(s["std"] - std) < 1e-14


def test_cohort_summary_includes_dice_and_skips_missing():
    records = [
        mx.MetricRecord(mse_ratio=0.5, dice={1: 0.9}),
        mx.MetricRecord(mse_ratio=0.7, dice={1: 0.8}),
    ]
    summary = mx.cohort_summary(records)
    assert "dice_1" in summary.stats
    assert summary.stats["dice_1"]["mean"] == pytest.approx(0.85)


def test_cohort_summary_empty():
    with pytest.raises(EmptyCohort):
        mx.cohort_summary([])


def test_metric_oracles_randomized(rng):
    """dice / mse / MI / quantiles vs independent brute-force implementations."""
    for _ in range(20):
        dims = tuple(int(rng.integers(8, 13)) for _ in range(2))
        dom = Domain(dims)
        a = LabelVolume(dom, rng.integers(0, 4, size=dims).astype(np.int32))
        b = LabelVolume(dom, rng.integers(0, 4, size=dims).astype(np.int32))
        label = int(rng.integers(1, 4))
        got = mx.dice(a, b, label)
        want = brute_dice(a.labels, b.labels, label)
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))
        m = ScalarField(dom, rng.standard_normal(dims))
        f = ScalarField(dom, rng.standard_normal(dims))
        mi = mx.mutual_information(m, f, bins=16)
        want_mi = brute_mi(m.values.ravel().tolist(), f.values.ravel().tolist(), 16)
        assert abs(mi - want_mi) <= 1e-12 * max(1.0, abs(want_mi))


def test_domain_mismatch_errors(rng):
    a = LabelVolume(Domain((8, 8)), np.zeros((8, 8), dtype=np.int32))
    b = LabelVolume(Domain((10, 10)), np.zeros((10, 10), dtype=np.int32))
    with pytest.raises(DomainMismatch):
        mx.dice(a, b, 1)
    with pytest.raises(DomainMismatch):
        mx.inverse_consistency(make_identity(Domain((8, 8))), make_identity(Domain((10, 10))))
