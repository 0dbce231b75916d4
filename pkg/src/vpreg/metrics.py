"""Registration-quality and transformation-quality measures, inverse
consistency, and cohort summary statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ._kernels import kernels
from .diffops import compose, jacobian_determinant, warp
from .errors import DomainMismatch, EmptyCohort, ZeroBaselineMI
from .field import LabelVolume, ScalarField, Transform, identity_coords, interior_slices

# Fixed column order of the per-pair report; dice_<label> columns follow.
METRIC_FIELDS = (
    "mse_ratio",
    "mi_incr",
    "mi_incr_pct",
    "jd_min",
    "jd_max",
    "jd_neg_fraction",
    "inv_maxdet",
    "inv_sumdet",
    "inv_sumdet_per_voxel",
    "inv_maxnorm",
    "inv_sumnorm",
    "inv_sumnorm_per_voxel",
    "rev_maxdet",
    "rev_sumdet",
    "rev_sumdet_per_voxel",
    "rev_maxnorm",
    "rev_sumnorm",
    "rev_sumnorm_per_voxel",
)


@dataclass
class MetricRecord:
    """One registration's metric battery.

    inv_* measures the composition inverse-after-forward (phi_inv o phi);
    rev_* the opposite order. Inverse fields stay None when no inverse map
    was supplied.
    """

    dice: dict[int, float] = dc_field(default_factory=dict)
    mse_ratio: float | None = None
    mi_incr: float | None = None
    jd_min: float | None = None
    jd_max: float | None = None
    jd_neg_fraction: float | None = None
    inv_maxdet: float | None = None
    inv_sumdet: float | None = None
    inv_sumdet_per_voxel: float | None = None
    inv_maxnorm: float | None = None
    inv_sumnorm: float | None = None
    inv_sumnorm_per_voxel: float | None = None
    rev_maxdet: float | None = None
    rev_sumdet: float | None = None
    rev_sumdet_per_voxel: float | None = None
    rev_maxnorm: float | None = None
    rev_sumnorm: float | None = None
    rev_sumnorm_per_voxel: float | None = None

    @property
    def mi_incr_pct(self) -> float | None:
        return None if self.mi_incr is None else 100.0 * self.mi_incr

    def scalar_items(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        for name in METRIC_FIELDS:
            out[name] = getattr(self, name)
        for label in sorted(self.dice):
            out[f"dice_{label}"] = self.dice[label]
        return out


@dataclass
class CohortSummary:
    """Order statistics (0/25/50/75/100 percentiles), mean and sample std
    per metric across a cohort of MetricRecords."""

    stats: dict[str, dict[str, float]]

    def metric_names(self) -> list[str]:
        return list(self.stats)


def _require_same_domain(a, b):
    if a.domain != b.domain:
        raise DomainMismatch("inputs live on different domains")


def mse(m: ScalarField, f: ScalarField, phi: Transform) -> float:
    """Mean squared error (1 / 2|Omega|) * sum (M(phi) - F)^2."""
    _require_same_domain(m, f)
    _require_same_domain(m, phi)
    w = warp(m, phi)
    return float(((w.values - f.values) ** 2).sum()) / (2.0 * m.domain.size)


def mse_ratio(m: ScalarField, f: ScalarField, phi: Transform) -> float:
    """MSE after registration relative to before; 1 when the baseline is 0."""
    _require_same_domain(m, f)
    baseline = float(((m.values - f.values) ** 2).sum()) / (2.0 * m.domain.size)
    if baseline == 0.0:
        return 1.0
    return mse(m, f, phi) / baseline


def dice(a: LabelVolume, b: LabelVolume, label: int) -> float:
    _require_same_domain(a, b)
    in_a = a.labels == label
    in_b = b.labels == label
    na = int(in_a.sum())
    nb = int(in_b.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int((in_a & in_b).sum()) / (na + nb)


def dice_scores(a: LabelVolume, b: LabelVolume, labels=None) -> dict[int, float]:
    """DICE per label; defaults to all non-background labels present."""
    if labels is None:
        labels = sorted((a.label_set | b.label_set) - {0})
    return {int(l): dice(a, b, int(l)) for l in labels}


def warp_labels(lab: LabelVolume, phi: Transform) -> LabelVolume:
    _require_same_domain(lab, phi)
    c = phi.coords
    if lab.domain.d == 2:
        moved = kernels.interp_nearest_2d(lab.labels, c[0], c[1])
    else:
        moved = kernels.interp_nearest_3d(lab.labels, c[0], c[1], c[2])
    return LabelVolume(lab.domain, moved)


def mutual_information(m: ScalarField, f: ScalarField, bins: int = 64) -> float:
    """Histogram mutual information, natural log; 0 for constant images."""
    _require_same_domain(m, f)
    if bins < 2:
        raise ValueError("bins must be >= 2")
    mv = m.values.ravel()
    fv = f.values.ravel()
    if mv.min() == mv.max() or fv.min() == fv.max():
        return 0.0
    joint, _, _ = np.histogram2d(
        mv, fv, bins=bins, range=[[mv.min(), mv.max()], [fv.min(), fv.max()]]
    )
    p = joint / joint.sum()
    pm = p.sum(axis=1)
    pf = p.sum(axis=0)
    nz = p > 0.0
    outer = np.outer(pm, pf)
    return float((p[nz] * np.log(p[nz] / outer[nz])).sum())


def mi_increment(m: ScalarField, f: ScalarField, phi: Transform, bins: int = 64) -> float:
    """Relative gain in mutual information after warping m by phi."""
    base = mutual_information(m, f, bins)
    if base == 0.0:
        raise ZeroBaselineMI("mutual information of the unregistered pair is zero")
    return (mutual_information(warp(m, phi), f, bins) - base) / base


def jd_stats(phi: Transform) -> dict[str, float]:
    """Interior min/max of the Jacobian determinant and the fraction <= 0."""
    det = phi.jacobian_determinant_values()[interior_slices(phi.domain)]
    return {
        "min": float(det.min()),
        "max": float(det.max()),
        "neg_fraction": float((det <= 0.0).mean()),
    }


def _deviation_from_identity(psi: Transform) -> dict[str, float]:
    n = psi.domain.size
    det_dev = np.abs(psi.jacobian_determinant_values() - 1.0)
    diff = psi.coords - identity_coords(psi.domain)
    norm = np.sqrt((diff**2).sum(axis=0))
    return {
        "maxdet": float(det_dev.max()),
        "sumdet": float(det_dev.sum()),
        "sumdet_per_voxel": float(det_dev.sum()) / n,
        "maxnorm": float(norm.max()),
        "sumnorm": float(norm.sum()),
        "sumnorm_per_voxel": float(norm.sum()) / n,
    }


def inverse_consistency(phi: Transform, phi_inv: Transform) -> dict[str, float]:
    """Deviation of both composition orders from identity.

    inv_* keys use phi_inv o phi (the order tabulated per column), rev_* the
    reverse order phi o phi_inv.
    """
    _require_same_domain(phi, phi_inv)
    fwd = _deviation_from_identity(compose(phi_inv, phi))
    rev = _deviation_from_identity(compose(phi, phi_inv))
    out = {f"inv_{k}": v for k, v in fwd.items()}
    out.update({f"rev_{k}": v for k, v in rev.items()})
    return out


def cohort_summary(records: list[MetricRecord]) -> CohortSummary:
    """Five-number summary plus mean/std per metric across records.

    Percentiles use linear interpolation; std is the sample estimator
    (0 for a single record). Metrics absent from every record are dropped.
    """
    if not records:
        raise EmptyCohort("cannot summarize an empty cohort")
    names: list[str] = []
    for rec in records:
        for key in rec.scalar_items():
            if key not in names:
                names.append(key)
    stats: dict[str, dict[str, float]] = {}
    for name in names:
        vals = np.array(
            [
                rec.scalar_items()[name]
                for rec in records
                if rec.scalar_items().get(name) is not None
            ],
            dtype=np.float64,
        )
        if vals.size == 0:
            continue
        q = np.percentile(vals, [0, 25, 50, 75, 100], method="linear")
        stats[name] = {
            "min": float(q[0]),
            "q25": float(q[1]),
            "median": float(q[2]),
            "q75": float(q[3]),
            "max": float(q[4]),
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        }
    return CohortSummary(stats)
