"""Reflective plane estimation from high-reflectance candidate points.

Candidates are clustered with DBSCAN, clusters that are too small, too
curved or too elongated are dropped, a plane is fitted to each survivor with
RANSAC, and near-identical planes are merged.

Planes use ``n . x + d = 0`` with the unit normal ``n`` facing the scanner,
so ``n . origin + d > 0``.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import SpatialIndex


@dataclass
class Cluster:
    point_ids: np.ndarray
    centroid: np.ndarray
    eigenvalues: np.ndarray  # descending
    curvature: float
    linearity: float
    degenerate: bool = False

    def __len__(self):
        return len(self.point_ids)


@dataclass
class Plane:
    normal: np.ndarray
    offset: float
    inlier_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    centroid: np.ndarray = field(default_factory=lambda: np.zeros(3))
    n_inliers: int | None = None

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.centroid = np.asarray(self.centroid, dtype=np.float64)
        self.inlier_ids = np.asarray(self.inlier_ids, dtype=np.int64)
        self.offset = float(self.offset)
        if self.n_inliers is None:
            self.n_inliers = len(self.inlier_ids)

    def signed_distance(self, x):
        return np.asarray(x) @ self.normal + self.offset

    def to_dict(self):
        return {
            "normal": [float(v) for v in self.normal],
            "offset": self.offset,
            "n_inliers": int(self.n_inliers),
            "centroid": [float(v) for v in self.centroid],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(normal=d["normal"], offset=d["offset"], centroid=d["centroid"],
                   n_inliers=int(d["n_inliers"]))


class PlaneSet(list):
    """List of :class:`Plane` with JSON (de)serialisation."""

    def to_json(self):
        return json.dumps([p.to_dict() for p in self], indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(Plane.from_dict(d) for d in json.loads(text))

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(f.read())


@dataclass
class PlaneDetectionConfig:
    eps: float = 0.3
    min_pts: int = 10
    min_size: int = 200
    max_curvature: float = 0.02
    max_linearity: float = 0.9
    ransac_dist: float = 0.02
    ransac_iters: int = 1000
    merge_cos: float = 0.985
    merge_dist: float = 0.1
    seed: int = 0


def dbscan(positions, eps, min_pts, ids=None):
    """Density clustering of ``positions``; returns a list of id arrays.

    ``min_pts`` counts the point itself. Clusters are ordered by their lowest
    core id and border points go to the cluster of their lowest-id core
    neighbour, so the result does not depend on input order. ``ids`` maps
    rows back to caller ids (defaults to row numbers).
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be > 0 and min_pts >= 1")
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    ids = np.arange(len(positions)) if ids is None else np.asarray(ids, dtype=np.int64)
    if len(positions) == 0:
        return []
    # work in id order so tie-breaking refers to caller ids
    order = np.argsort(ids, kind="stable")
    pos = positions[order]
    index = SpatialIndex(pos)
    indptr, indices = index.radius_csr(pos, eps, exclude=np.arange(len(pos)))
    labels = kernels.dbscan_labels(indptr, indices, int(min_pts))
    sorted_ids = ids[order]
    clusters = []
    n_labels = labels.max() + 1 if len(labels) else 0
    for lab in range(n_labels):
        clusters.append(sorted_ids[labels == lab])
    return clusters


def cluster_stats(point_ids, positions):
    """Centroid, covariance eigenvalues, curvature and linearity of a cluster."""
    point_ids = np.asarray(point_ids, dtype=np.int64)
    pts = np.asarray(positions, dtype=np.float64)[point_ids]
    centroid = pts.mean(axis=0)
    d = pts - centroid
    cov = d.T @ d / max(len(pts), 1)
    ev = np.clip(np.linalg.eigvalsh(cov)[::-1], 0.0, None)
    total = ev.sum()
    degenerate = len(pts) < 3 or total <= 1e-300 or ev[0] <= 0
    if degenerate:
        curvature = linearity = math.nan
    else:
        curvature = float(ev[2] / total)
        linearity = float((ev[0] - ev[1]) / ev[0])
    return Cluster(point_ids, centroid, ev, curvature, linearity, degenerate)


def filter_reliable(clusters, min_size, max_curvature, max_linearity):
    return [c for c in clusters
            if not c.degenerate and len(c) >= min_size
            and c.curvature <= max_curvature and c.linearity <= max_linearity]


def _orient(normal, offset, origin):
    if normal @ origin + offset < 0:
        return -normal, -offset
    return normal, offset


def fit_plane_lsq(pts):
    """Total-least-squares plane through ``pts``: (unit normal, offset, centroid)."""
    centroid = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    normal = vt[-1]
    return normal, -float(normal @ centroid), centroid


def fit_plane_ransac(point_ids, positions, dist_thresh, max_iters, seed, origin=None,
                     min_consensus=0.5, confidence=0.999):
    """RANSAC plane for one cluster, refined by least squares on its inliers.

    Returns ``None`` when the best consensus covers less than
    ``min_consensus`` of the cluster.
    """
    point_ids = np.asarray(point_ids, dtype=np.int64)
    pts = np.asarray(positions, dtype=np.float64)[point_ids]
    n = len(pts)
    if n < 3:
        return None
    origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=np.float64)
    rng = np.random.default_rng(seed)
    best_count, best = -1, None
    needed = max_iters
    it = 0
    while it < min(max_iters, needed):
        it += 1
        sample = pts[rng.choice(n, 3, replace=False)]
        normal = np.cross(sample[1] - sample[0], sample[2] - sample[0])
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal /= norm
        offset = -normal @ sample[0]
        count = int(np.count_nonzero(np.abs(pts @ normal + offset) <= dist_thresh))
        if count > best_count:
            best_count, best = count, (normal, offset)
            ratio = count / n
            if ratio >= 1.0:
                needed = it
            else:
                needed = math.ceil(math.log(1 - confidence) / math.log(1 - ratio ** 3)) \
                    if ratio > 0 else max_iters
    if best is None:
        return None
    normal, offset = best
    inliers = np.abs(pts @ normal + offset) <= dist_thresh
    if inliers.sum() < 3:
        return None
    normal, offset, _ = fit_plane_lsq(pts[inliers])
    inliers = np.abs(pts @ normal + offset) <= dist_thresh
    if inliers.sum() < min_consensus * n or inliers.sum() < 3:
        return None
    normal, offset = _orient(normal, offset, origin)
    return Plane(normal, offset, point_ids[inliers], pts[inliers].mean(axis=0))


def _similar(a, b, cos_thresh, dist_thresh):
    cos_sim = float(a.normal @ b.normal)
    if abs(cos_sim) < cos_thresh:
        return False
    sign = 1.0 if cos_sim >= 0 else -1.0
    dis_sim = abs(a.normal @ a.centroid - sign * (b.normal @ b.centroid))
    return dis_sim <= dist_thresh


def merge_planes(planes, cos_thresh, dist_thresh, positions, dist_inlier=None, origin=None):
    """Merge planes whose normals and centroid offsets agree.

    Groups are the connected components of the pairwise similarity graph;
    each group is refitted once on the union of its inliers. This repeats
    until no pair is similar, so the result is order-independent and
    idempotent.
    """
    positions = np.asarray(positions, dtype=np.float64)
    origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=np.float64)
    current = list(planes)
    while True:
        n = len(current)
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        merged_any = False
        for i in range(n):
            for j in range(i + 1, n):
                if _similar(current[i], current[j], cos_thresh, dist_thresh):
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
                        merged_any = True
        if not merged_any:
            return PlaneSet(current)
        groups = {}
        for i in range(n):
            groups.setdefault(find(i), []).append(i)
        out = []
        for root in sorted(groups):
            members = groups[root]
            if len(members) == 1:
                out.append(current[members[0]])
                continue
            ids = np.unique(np.concatenate([current[m].inlier_ids for m in members]))
            pts = positions[ids]
            normal, offset, _ = fit_plane_lsq(pts)
            if dist_inlier is not None:
                keep = np.abs(pts @ normal + offset) <= dist_inlier
                if keep.sum() >= 3:
                    ids, pts = ids[keep], pts[keep]
                    normal, offset, _ = fit_plane_lsq(pts)
            normal, offset = _orient(normal, offset, origin)
            out.append(Plane(normal, offset, ids, pts.mean(axis=0)))
        current = out


def detect_reflective_planes(cloud, candidates, config=None):
    """Full plane-estimation chain on the candidate ids of ``cloud``."""
    cfg = config or PlaneDetectionConfig()
    candidates = np.asarray(candidates, dtype=np.int64)
    if len(candidates) == 0:
        return PlaneSet()
    positions = cloud.positions
    clusters = dbscan(positions[candidates], cfg.eps, cfg.min_pts, ids=candidates)
    stats = [cluster_stats(c, positions) for c in clusters]
    reliable = filter_reliable(stats, cfg.min_size, cfg.max_curvature, cfg.max_linearity)
    planes = []
    for k, cluster in enumerate(reliable):
        plane = fit_plane_ransac(cluster.point_ids, positions, cfg.ransac_dist, cfg.ransac_iters,
                                 seed=(cfg.seed, k), origin=cloud.scanner_origin)
        if plane is not None:
            planes.append(plane)
    return merge_planes(planes, cfg.merge_cos, cfg.merge_dist, positions,
                        dist_inlier=cfg.ransac_dist, origin=cloud.scanner_origin)
