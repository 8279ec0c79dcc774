"""Range / incidence-angle intensity correction and high-reflectance extraction.

For an extended Lambertian target the received power follows
``P_r = P_t * D^2 * rho * cos(alpha) / (4 R^2) * eta_sys * eta_atm``; folding
the constants gives ``I = C * rho * cos(alpha) / R^2``. Real surfaces deviate
from this, so the angle and range dependencies are modelled as two
independent polynomials, ``I_raw = I_c(rho) * f2(cos alpha) * f3(R)``, fitted
to calibration samples. The corrected intensity at the reference geometry
``(alpha_s, R_s)`` is then ``I_raw * f2(cos alpha_s) f3(R_s) / (f2(cos alpha) f3(R))``.

``f3`` may start at a negative power of ``R`` (``range_power_offset``) so
that the inverse-square law is representable exactly.
"""
import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import SpatialIndex
from .descriptor import estimate_normals
from .exceptions import CalibrationError


@dataclass
class CorrectionModel:
    beta: np.ndarray
    gamma: np.ndarray
    ref_angle_cos: float = 1.0
    ref_range: float = 10.0
    range_power_offset: int = 0
    residual_rms: float = math.nan

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if not 0 < self.ref_angle_cos <= 1:
            raise ValueError("ref_angle_cos must lie in (0, 1]")
        if self.ref_range <= 0:
            raise ValueError("ref_range must be positive")
        if self.f2(self.ref_angle_cos) == 0 or self.f3(self.ref_range) == 0:
            raise ValueError("correction polynomials vanish at the reference geometry")

    @property
    def poly_deg_angle(self):
        return len(self.beta) - 1

    @property
    def poly_deg_range(self):
        return len(self.gamma) - 1

    def f2(self, cos_alpha):
        c = np.asarray(cos_alpha, dtype=np.float64)
        return sum(b * c ** k for k, b in enumerate(self.beta))

    def f3(self, rng):
        r = np.asarray(rng, dtype=np.float64)
        return sum(g * r ** (k + self.range_power_offset) for k, g in enumerate(self.gamma))

    def predict(self, cos_alpha, rng):
        return self.f2(cos_alpha) * self.f3(rng)

    def to_dict(self):
        return {
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "ref_angle_cos": float(self.ref_angle_cos),
            "ref_range": float(self.ref_range),
            "range_power_offset": int(self.range_power_offset),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["beta"], d["gamma"], d["ref_angle_cos"], d["ref_range"],
                   d.get("range_power_offset", 0))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def lambertian_model(ref_angle_cos=1.0, ref_range=10.0):
    """``f2 = cos``, ``f3 = R^-2``: the ideal Lambertian correction."""
    return CorrectionModel([0.0, 1.0], [1.0], ref_angle_cos, ref_range, range_power_offset=-2)


@dataclass
class ReturnGeometry:
    """Per-point range, incidence cosine and a flag for degenerate normals."""

    range: np.ndarray
    cos_incidence: np.ndarray
    degenerate: np.ndarray


def incidence_geometry(cloud, index=None, normal_k=15):
    if normal_k < 3:
        raise ValueError("normal_k must be at least 3")
    if len(cloud) < normal_k:
        raise ValueError(f"cloud has {len(cloud)} points, fewer than normal_k={normal_k}")
    index = index or SpatialIndex(cloud.positions)
    beam = cloud.positions - cloud.scanner_origin
    rng = np.linalg.norm(beam, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = beam / rng[:, None]
    normals, degenerate = estimate_normals(cloud.positions, index.knn_all(normal_k),
                                           viewpoint=cloud.scanner_origin)
    cos = np.clip(np.abs(np.einsum("ij,ij->i", normals, u)), 0.0, 1.0)
    cos[degenerate] = 1.0
    bad_range = ~(rng > 0)
    cos[bad_range] = 1.0
    return ReturnGeometry(rng, cos, degenerate | bad_range)


def _lstsq(design, target, factor):
    norms = np.linalg.norm(design, axis=0)
    if np.any(norms == 0):
        raise CalibrationError(f"{factor} design matrix has an all-zero column")
    coef, _, rank, _ = np.linalg.lstsq(design / norms, target, rcond=None)
    if rank < design.shape[1]:
        raise CalibrationError(f"{factor} design matrix is rank deficient "
                               f"(rank {rank} < {design.shape[1]})")
    return coef / norms


def _powers(x, start, count):
    return np.column_stack([x ** (start + k) for k in range(count)])


def fit_correction(intensity, cos_alpha, rng, deg_angle=3, deg_range=3, ref_angle_cos=1.0,
                   ref_range=10.0, range_power_offset=-2, range_bins=16, max_iter=500,
                   tol=1e-14, robust=False):
    """Fit ``f2`` and ``f3`` to calibration samples.

    The angle polynomial is fitted first, on intensities normalised within
    bins of near-constant range; the range polynomial is then fitted to the
    angle-corrected intensities. The two steps alternate until the
    predictions stop changing. ``robust=True`` drops samples whose log-ratio
    to the fit lies beyond 3.5 scaled MADs and refits (twice).
    """
    I = np.asarray(intensity, dtype=np.float64)
    c = np.asarray(cos_alpha, dtype=np.float64)
    R = np.asarray(rng, dtype=np.float64)
    if not (I.shape == c.shape == R.shape):
        raise ValueError("sample arrays must have equal length")
    need = max(deg_angle, deg_range) + 1
    if len(I) < need:
        raise CalibrationError(f"{len(I)} samples cannot determine a degree-{need - 1} fit")
    if len(np.unique(c)) < deg_angle + 1:
        raise CalibrationError("angle factor: too few distinct cos(alpha) values")
    if len(np.unique(R)) < deg_range + 1:
        raise CalibrationError("range factor: too few distinct range values")
    if np.any(R <= 0):
        raise CalibrationError("range factor: ranges must be positive")

    keep = np.ones(len(I), dtype=bool)
    rounds = 3 if robust else 1
    for _ in range(rounds):
        beta, gamma = _als(I[keep], c[keep], R[keep], deg_angle, deg_range, range_power_offset,
                           range_bins, max_iter, tol)
        if not robust:
            break
        pred = _powers(c, 0, deg_angle + 1) @ beta * (_powers(R, range_power_offset, deg_range + 1) @ gamma)
        with np.errstate(invalid="ignore", divide="ignore"):
            lr = np.log(I / pred)
        ok = np.isfinite(lr)
        med = np.median(lr[ok & keep])
        mad = 1.4826 * np.median(np.abs(lr[ok & keep] - med)) + 1e-12
        new_keep = ok & (np.abs(lr - med) <= 3.5 * mad)
        if new_keep.sum() < need or np.array_equal(new_keep, keep):
            break
        keep = new_keep

    # put the scale into f3: f2(cos alpha_s) = 1
    s = float((_powers(np.array([ref_angle_cos]), 0, deg_angle + 1) @ beta)[0])
    if s == 0:
        raise CalibrationError("angle factor vanishes at the reference angle")
    beta, gamma = beta / s, gamma * s
    model = CorrectionModel(beta, gamma, ref_angle_cos, ref_range, range_power_offset)
    resid = I[keep] - model.predict(c[keep], R[keep])
    model.residual_rms = float(np.sqrt(np.mean(resid ** 2)))
    return model


def _als(I, c, R, deg_angle, deg_range, offset, range_bins, max_iter, tol):
    A = _powers(c, 0, deg_angle + 1)
    B = _powers(R, offset, deg_range + 1)
    # angle first: normalise out the range trend within near-constant-range bins
    nb = max(1, min(range_bins, len(I) // (deg_angle + 2)))
    edges = np.quantile(R, np.linspace(0, 1, nb + 1))
    bin_of = np.clip(np.searchsorted(edges, R, side="right") - 1, 0, nb - 1)
    scale = np.ones(len(I))
    for b in range(nb):
        sel = bin_of == b
        if sel.any():
            m = np.mean(I[sel])
            scale[sel] = m if m != 0 else 1.0
    # relative residuals: rows scaled by 1/I so near, bright returns do not dominate
    w = 1.0 / np.where(I > 0, I, 1.0)
    beta = _lstsq(A * w[:, None] * scale[:, None], I * w, "angle")
    pred = None
    for _ in range(max_iter):
        f2 = A @ beta
        gamma = _lstsq(B * (f2 * w)[:, None], I * w, "range")
        f3 = B @ gamma
        beta = _lstsq(A * (f3 * w)[:, None], I * w, "angle")
        new = (A @ beta) * f3
        if pred is not None:
            change = np.linalg.norm(new - pred) / max(np.linalg.norm(new), 1e-300)
            if change < tol:
                break
        pred = new
    return beta, gamma


def corrected_intensity(intensity_raw, geom, model):
    """Float64 corrected intensities; NaN where the model denominator is not positive."""
    I = np.asarray(intensity_raw, dtype=np.float64)
    den = model.f2(geom.cos_incidence) * model.f3(geom.range)
    num = model.f2(model.ref_angle_cos) * model.f3(model.ref_range)
    out = np.full(len(I), np.nan)
    ok = np.isfinite(den) & (den > 0)
    out[ok] = I[ok] * (num / den[ok])
    return out


def correct_intensity(cloud, geom, model):
    """Copy of ``cloud`` with ``intensity_corrected`` filled (NaN = uncorrectable)."""
    return cloud.replace(intensity_corrected=corrected_intensity(cloud.intensity, geom, model)
                         .astype(np.float32))


def _top_count(q, n):
    frac = Fraction(q).limit_denominator(10 ** 9)
    return math.ceil((100 - frac) * n / 100)


def extract_reflective_candidates(cloud, threshold=None, percentile=None):
    """Ids of first/single-echo points whose corrected intensity passes the threshold.

    Give either an absolute ``threshold`` (inclusive) or a ``percentile``
    ``q``; the latter keeps the top ``ceil((1 - q/100) * n)`` eligible points,
    ties broken by lower id.
    """
    if (threshold is None) == (percentile is None):
        raise ValueError("give exactly one of threshold / percentile")
    if cloud.intensity_corrected is None:
        raise ValueError("cloud has no corrected intensities")
    ic = cloud.intensity_corrected.astype(np.float64)
    eligible = np.flatnonzero((cloud.echo_index == 1) & np.isfinite(ic))
    if threshold is not None:
        return eligible[ic[eligible] >= threshold]
    if not 0 <= percentile <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    k = _top_count(percentile, len(eligible))
    order = np.lexsort((eligible, -ic[eligible]))
    return np.sort(eligible[order[:k]])


def calibration_samples(cloud, geom):
    """Self-calibration set: single-echo points with a well-defined normal."""
    sel = (cloud.echo_count == 1) & ~geom.degenerate & (cloud.intensity > 0)
    return cloud.intensity[sel].astype(np.float64), geom.cos_incidence[sel], geom.range[sel]


def self_calibrate(cloud, geom, deg_angle=3, deg_range=3, ref_angle_cos=1.0, ref_range=10.0,
                   range_power_offset=-2):
    """Fit the correction on the cloud's own single-echo returns (outliers trimmed)."""
    I, c, R = calibration_samples(cloud, geom)
    return fit_correction(I, c, R, deg_angle, deg_range, ref_angle_cos, ref_range,
                          range_power_offset, robust=True)


def read_calibration_csv(path):
    """Columns ``intensity,cos_alpha,range`` with a header row."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = {"intensity", "cos_alpha", "range"} - set(reader.fieldnames or [])
        if missing:
            raise CalibrationError(f"{path}: missing columns {sorted(missing)}")
        rows = [(float(r["intensity"]), float(r["cos_alpha"]), float(r["range"])) for r in reader]
    arr = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def write_calibration_csv(path, intensity, cos_alpha, rng):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["intensity", "cos_alpha", "range"])
        for row in zip(intensity, cos_alpha, rng):
            w.writerow(["%.17g" % v for v in row])
