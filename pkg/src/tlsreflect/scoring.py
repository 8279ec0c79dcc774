"""Virtual-point scoring and removal.

A point behind a reflective plane is mirrored across it. If a real point sits
near the mirror image (symmetry evidence) and the two neighbourhoods look
alike once each descriptor is referenced to its own laser direction
(similarity evidence), the point is likely a reflection:

    virtual = exp(-gap / sigma_sym) * exp(-H / sigma_sim)

with ``gap`` the distance from the mirror image to its nearest cloud point
and ``H`` the Hausdorff distance between the two descriptors.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import PredLabel, SpatialIndex
from .descriptor import RelsfhDescriptor, point_normals, reflect_direction, reflection_frame, \
    relsfh_batch, mirror_point

SCORE_COLUMNS = ["point_id", "plane_id", "sym_score", "sim_score", "virtual_score",
                 "mirror_gap", "hausdorff"]


@dataclass
class ScoringConfig:
    radius: float = 0.5
    normal_k: int = 50
    n1: int = 11
    n2: int = 11
    sigma_sym: float = 0.15
    sigma_sim: float = 0.5
    threshold: float = 0.5
    behind_margin: float = 0.05
    chunk: int = 20000

    @property
    def nn_cap(self):
        # beyond this gap the symmetry score drops below 1e-6
        return self.sigma_sym * math.log(1e6)


# ---------------------------------------------------------------------------
# histogram distances


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"histogram lengths differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("empty histogram")
    return a, b


def directed_hausdorff(a, b):
    """``max_i min_j |alpha_i - beta_j|`` with bins embedded at ``(i/(N-1), h_i)``."""
    a, b = _check_pair(a, b)
    x = kernels._bin_positions(len(a))
    dx = x[:, None] - x[None, :]
    dy = a[:, None] - b[None, :]
    return float(np.sqrt(dx * dx + dy * dy).min(axis=1).max())


def hausdorff(a, b):
    a, b = _check_pair(a, b)
    return float(kernels.hausdorff_rows(a[None], b[None])[0])


def feature_distance(da, db):
    """Mean of the angle- and density-histogram Hausdorff distances; inf if either is empty."""
    if da.empty or db.empty:
        return math.inf
    return 0.5 * (hausdorff(da.angle_hist, db.angle_hist)
                  + hausdorff(da.density_hist, db.density_hist))


def combined_score(mirror_gap, h, sigma_sym, sigma_sim):
    sym = np.exp(-np.asarray(mirror_gap, dtype=np.float64) / sigma_sym)
    sim = np.exp(-np.asarray(h, dtype=np.float64) / sigma_sim)
    return sym, sim, sym * sim


# ---------------------------------------------------------------------------
# feature backends


class RelsfhFeatures:
    """Default descriptor backend: angle and density histograms, Hausdorff distance.

    A backend provides ``describe(centers, axes, exclude)`` returning a tuple
    of per-row arrays (last entry: neighbour counts) and
    ``distance(fa, fb)`` returning per-row distances.
    """

    def __init__(self, index, normals, config):
        self.index = index
        self.normals = normals
        self.cfg = config

    def describe(self, centers, axes, exclude):
        return relsfh_batch(self.index, self.normals, centers, axes, self.cfg.radius,
                            self.cfg.n1, self.cfg.n2, exclude=exclude)

    def distance(self, fa, fb):
        ha = kernels.hausdorff_rows(fa[0], fb[0])
        hd = kernels.hausdorff_rows(fa[1], fb[1])
        out = 0.5 * (ha + hd)
        out[(fa[-1] == 0) | (fb[-1] == 0)] = np.inf
        return out


# ---------------------------------------------------------------------------
# scoring


@dataclass
class ScoreRecord:
    point_id: int
    plane_id: int
    sym_score: float
    sim_score: float
    virtual_score: float
    predicted_mirror: np.ndarray
    matched_neighbor: int
    mirror_gap: float
    hausdorff: float


@dataclass
class ScoreTable:
    """Column-wise scores of the gated points, sorted by point id.

    ``matched_neighbor`` is -1 when no cloud point lies within the search
    cap of the mirror image; such rows carry infinite gap/distance and zero
    scores.
    """

    point_id: np.ndarray
    plane_id: np.ndarray
    sym_score: np.ndarray
    sim_score: np.ndarray
    virtual_score: np.ndarray
    mirror_gap: np.ndarray
    hausdorff: np.ndarray
    matched_neighbor: np.ndarray = field(default=None)
    predicted_mirror: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.point_id)
        if self.matched_neighbor is None:
            self.matched_neighbor = np.full(n, -1, dtype=np.int64)
        if self.predicted_mirror is None:
            self.predicted_mirror = np.full((n, 3), np.nan)

    def __len__(self):
        return len(self.point_id)

    def record(self, i):
        return ScoreRecord(int(self.point_id[i]), int(self.plane_id[i]), float(self.sym_score[i]),
                           float(self.sim_score[i]), float(self.virtual_score[i]),
                           self.predicted_mirror[i].copy(), int(self.matched_neighbor[i]),
                           float(self.mirror_gap[i]), float(self.hausdorff[i]))

    def full_scores(self, n):
        """Virtual score for every point of an ``n``-point cloud (0 where unscored)."""
        out = np.zeros(n)
        out[self.point_id] = self.virtual_score
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SCORE_COLUMNS)
            for row in zip(self.point_id.tolist(), self.plane_id.tolist(), self.sym_score.tolist(),
                           self.sim_score.tolist(), self.virtual_score.tolist(),
                           self.mirror_gap.tolist(), self.hausdorff.tolist()):
                w.writerow([row[0], row[1]] + ["%.17g" % v for v in row[2:]])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != SCORE_COLUMNS:
                raise ValueError(f"{path}: expected header {','.join(SCORE_COLUMNS)}")
            rows = list(reader)
        ints = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
        flts = np.array([[float(v) for v in r[2:]] for r in rows], dtype=np.float64).reshape(-1, 5)
        return cls(ints[:, 0], ints[:, 1], *flts.T)


def _empty_table():
    e = np.empty(0)
    return ScoreTable(np.empty(0, np.int64), np.empty(0, np.int64), e, e, e, e, e)


def gate_behind(positions, origin, plane, margin):
    """Mask of points on the far side of ``plane`` from the scanner by more than ``margin``."""
    s_o = float(plane.signed_distance(origin))
    if s_o == 0.0:
        return np.zeros(len(positions), dtype=bool)
    s = positions @ plane.normal + plane.offset
    return (np.sign(s) == -np.sign(s_o)) & (np.abs(s) > margin)


def score_cloud(cloud, planes, config=None, index=None, normals=None, features=None):
    """Score every point of ``cloud`` that lies behind at least one plane.

    For each plane the gated points are mirrored, matched to their nearest
    cloud point and compared through ``features`` (a backend as in
    :class:`RelsfhFeatures`). Each point keeps its best plane; ties go to the
    lower plane id.
    """
    cfg = config or ScoringConfig()
    if not 0 < cfg.threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    if len(planes) == 0 or len(cloud) == 0:
        return _empty_table()
    index = index or SpatialIndex(cloud.positions)
    if features is None:
        if normals is None:
            normals, _ = point_normals(index, cfg.normal_k, cloud.scanner_origin)
        features = RelsfhFeatures(index, normals, cfg)
    pos = cloud.positions
    origin = cloud.scanner_origin
    n = len(cloud)
    best = np.full(n, -1.0)
    plane_id = np.full(n, -1, dtype=np.int64)
    sym = np.zeros(n)
    sim = np.zeros(n)
    gap = np.full(n, np.inf)
    hd = np.full(n, np.inf)
    match = np.full(n, -1, dtype=np.int64)
    mirror = np.full((n, 3), np.nan)
    cap = cfg.nn_cap
    for k, plane in enumerate(planes):
        q = np.flatnonzero(gate_behind(pos, origin, plane, cfg.behind_margin))
        for s in range(0, len(q), cfg.chunk):
            ids = q[s:s + cfg.chunk]
            m = mirror_point(pos[ids], plane)
            dist, nn = index.tree.query(m, distance_upper_bound=cap)
            hit = np.isfinite(dist)
            g = np.full(len(ids), np.inf)
            h = np.full(len(ids), np.inf)
            nn = np.where(hit, nn, -1)
            if hit.any():
                hi, hn = ids[hit], nn[hit]
                # beam direction from the scanner; its mirror is the reflected ray
                u = pos[hi] - origin
                u /= np.linalg.norm(u, axis=1, keepdims=True)
                r = reflect_direction(u, plane.normal)
                fq = features.describe(pos[hi], u, hi)
                fm = features.describe(pos[hn], r, hn)
                g[hit] = dist[hit]
                h[hit] = features.distance(fq, fm)
            ys, yh, v = combined_score(g, h, cfg.sigma_sym, cfg.sigma_sim)
            better = v > best[ids]
            b = ids[better]
            best[b] = v[better]
            plane_id[b] = k
            sym[b], sim[b], gap[b], hd[b] = ys[better], yh[better], g[better], h[better]
            match[b] = nn[better]
            mirror[b] = m[better]
    sel = np.flatnonzero(plane_id >= 0)
    return ScoreTable(sel, plane_id[sel], sym[sel], sim[sel], best[sel], gap[sel], hd[sel],
                      match[sel], mirror[sel])


def score_point(cloud, index, query_id, planes, config=None, normals=None):
    """Score one point; ``None`` when no plane has it behind (not a candidate)."""
    cfg = config or ScoringConfig()
    if normals is None:
        normals, _ = point_normals(index, cfg.normal_k, cloud.scanner_origin)
    query = cloud.positions[int(query_id)]
    best = None
    for k, plane in enumerate(planes):
        frame = reflection_frame(query, cloud.scanner_origin, plane, min_depth=cfg.behind_margin)
        if frame is None:
            continue
        m = mirror_point(query, plane)
        dist, nn = index.tree.query(m, distance_upper_bound=cfg.nn_cap)
        if np.isfinite(dist):
            fq = relsfh_batch(index, normals, query[None], frame.incident_dir[None], cfg.radius,
                              cfg.n1, cfg.n2, exclude=np.array([int(query_id)]))
            fm = relsfh_batch(index, normals, cloud.positions[nn][None], frame.reflected_dir[None],
                              cfg.radius, cfg.n1, cfg.n2, exclude=np.array([int(nn)]))
            da = RelsfhDescriptor(fq[0][0], fq[1][0], int(fq[2][0]))
            db = RelsfhDescriptor(fm[0][0], fm[1][0], int(fm[2][0]))
            h = feature_distance(da, db)
            g = float(dist)
        else:
            nn, g, h = -1, math.inf, math.inf
        ys, yh, v = (float(x) for x in combined_score(g, h, cfg.sigma_sym, cfg.sigma_sim))
        if best is None or v > best.virtual_score:
            best = ScoreRecord(int(query_id), k, ys, yh, v, m, int(nn), g, h)
    return best


# ---------------------------------------------------------------------------
# removal


@dataclass
class RemovalResult:
    kept: object          # PointCloud without the removed points
    labeled: object       # full PointCloud with pred_label filled
    removed_ids: np.ndarray
    report: dict


def remove_virtual(cloud, scores, threshold=0.5):
    """Label points with ``virtual_score >= threshold`` as virtual and drop them."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    full = scores.full_scores(len(cloud))
    virtual = full >= threshold
    pred = np.where(virtual, PredLabel.VIRTUAL, PredLabel.REAL).astype(np.uint8)
    labeled = cloud.replace(pred_label=pred)
    removed = np.flatnonzero(virtual)
    report = {
        "threshold": float(threshold),
        "n_points": int(len(cloud)),
        "n_scored": int(len(scores)),
        "n_removed": int(len(removed)),
        "n_kept": int(len(cloud) - len(removed)),
    }
    return RemovalResult(labeled.subset(~virtual), labeled, removed, report)
