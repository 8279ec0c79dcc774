"""Reflection-invariant local descriptor referenced to the laser direction.

The descriptor of a point is two histograms over its radius-``r``
neighbourhood (the point itself excluded):

* deviation angle: ``arccos(|axis . n_k|)`` for each neighbour normal,
  binned uniformly over ``[0, pi/2]``;
* point density: the distance of each neighbour from the line through the
  point along ``axis``, binned uniformly over ``[0, r]``.

Each histogram is L1-normalised on its own. Mirroring a neighbourhood and
its axis across any plane leaves both histograms unchanged, which is what
lets a virtual point be compared with its real counterpart.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .exceptions import DegenerateGeometryError

RANK_TOL = 1e-10


@dataclass
class RelsfhDescriptor:
    angle_hist: np.ndarray
    density_hist: np.ndarray
    neighbor_count: int

    @property
    def empty(self):
        return self.neighbor_count == 0

    @property
    def vector(self):
        return np.concatenate([self.angle_hist, self.density_hist])


@dataclass
class ReflectionFrame:
    glass_hit: np.ndarray
    incident_dir: np.ndarray
    reflected_dir: np.ndarray


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def reflect_direction(u, normal):
    """Mirror direction(s) ``u`` about a plane with unit ``normal``."""
    u = np.asarray(u, dtype=np.float64)
    return u - 2.0 * np.asarray(u @ normal)[..., None] * normal


def mirror_point(p, plane):
    """Reflect point(s) across ``plane``: ``p - 2 (n . p + d) n``."""
    p = np.asarray(p, dtype=np.float64)
    s = p @ plane.normal + plane.offset
    if p.ndim > 1:
        return p - 2.0 * s[:, None] * plane.normal
    return p - 2.0 * s * plane.normal


def reflection_frame(query, origin, plane, min_depth=0.0):
    """Beam/plane geometry for a query seen through ``plane``.

    Returns ``None`` unless the segment from ``origin`` to ``query`` crosses
    the plane strictly between its ends with the query at least
    ``min_depth`` behind it.
    """
    query = np.asarray(query, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    s_o = float(origin @ plane.normal + plane.offset)
    s_q = float(query @ plane.normal + plane.offset)
    if s_o == 0.0 or s_q == 0.0 or (s_o > 0) == (s_q > 0):
        return None
    if abs(s_q) <= min_depth:
        return None
    t = s_o / (s_o - s_q)
    hit = origin + t * (query - origin)
    incident = _unit(query - hit)
    reflected = reflect_direction(incident, plane.normal)
    return ReflectionFrame(hit, incident, reflected / np.linalg.norm(reflected))


def estimate_normal(points, viewpoint=None):
    """Smallest-eigenvalue direction of the centred covariance of ``points``.

    The sign is chosen so the normal points toward ``viewpoint`` when one is
    given. Raises :class:`DegenerateGeometryError` for fewer than three
    points or a rank < 2 spread (coincident or collinear points).
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        raise DegenerateGeometryError("need at least 3 points for a normal")
    centroid = pts.mean(axis=0)
    d = pts - centroid
    w, v = np.linalg.eigh(d.T @ d)
    if w[2] <= 0 or w[1] <= RANK_TOL * w[2]:
        raise DegenerateGeometryError("neighbourhood has rank < 2")
    normal = v[:, 0]
    if viewpoint is not None and normal @ (np.asarray(viewpoint) - centroid) < 0:
        normal = -normal
    return normal


def estimate_normals(positions, knn_idx, viewpoint=None, chunk=200_000):
    """Batched :func:`estimate_normal` over rows of neighbour indices.

    Returns ``(normals, degenerate)``; degenerate rows get ``(0, 0, 1)``
    oriented like the rest.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = len(knn_idx)
    normals = np.empty((n, 3))
    degenerate = np.zeros(n, dtype=bool)
    for s in range(0, n, chunk):
        nb = positions[knn_idx[s:s + chunk]]
        centroid = nb.mean(axis=1)
        d = nb - centroid[:, None, :]
        cov = np.einsum("nki,nkj->nij", d, d)
        w, v = np.linalg.eigh(cov)
        nrm = v[:, :, 0]
        bad = (w[:, 2] <= 0) | (w[:, 1] <= RANK_TOL * w[:, 2])
        nrm[bad] = (0.0, 0.0, 1.0)
        if viewpoint is not None:
            flip = np.einsum("ni,ni->n", nrm, np.asarray(viewpoint) - centroid) < 0
            nrm[flip] *= -1
        normals[s:s + chunk] = nrm
        degenerate[s:s + chunk] = bad
    return normals, degenerate


def _bin(values, vmax, bins):
    idx = (np.asarray(values, dtype=np.float64) * bins / vmax).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _normalised_hist(idx, bins):
    h = np.bincount(idx, minlength=bins).astype(float)
    return h / h.sum() if h.sum() > 0 else h


def deviation_angle_feature(axis, neighbor_normals, bins=11):
    """Histogram of ``arccos(|axis . n|)`` over ``[0, pi/2]``, L1-normalised."""
    nrm = np.asarray(neighbor_normals, dtype=np.float64).reshape(-1, 3)
    c = np.minimum(np.abs(nrm @ np.asarray(axis, dtype=np.float64)), 1.0)
    return _normalised_hist(_bin(np.arccos(c), kernels.HALF_PI, bins), bins)


def point_density_feature(query, axis, neighbors, radius, bins=11):
    """Histogram of distances from the line through ``query`` along ``axis``."""
    d = np.asarray(query, dtype=np.float64) - np.asarray(neighbors, dtype=np.float64).reshape(-1, 3)
    proj = d @ np.asarray(axis, dtype=np.float64)
    rho = np.sqrt(np.maximum(np.einsum("ij,ij->i", d, d) - proj * proj, 0.0))
    return _normalised_hist(_bin(rho, radius, bins), bins)


def point_normals(index, normal_k, viewpoint=None):
    """Normals for every indexed point from its ``normal_k`` nearest points."""
    if len(index) < 3:
        raise DegenerateGeometryError("need at least 3 points for normals")
    return estimate_normals(index.positions, index.knn_all(normal_k), viewpoint)


def relsfh_batch(index, normals, centers, axes, radius, n1=11, n2=11, exclude=None):
    """Descriptors for many (center, axis) pairs at once.

    Returns ``(angle_hists, density_hists, neighbor_counts)``.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    axes = _unit(np.atleast_2d(axes))
    indptr, indices = index.radius_csr(centers, radius, exclude=exclude)
    return kernels.relsfh_hist(index.positions, normals, centers, axes, indptr, indices,
                               float(radius), int(n1), int(n2))


def compute_relsfh(index, query_id, axis, radius=0.5, normal_k=50, n1=11, n2=11, normals=None,
                   viewpoint=None):
    """Descriptor of cloud point ``query_id`` with reference ``axis``."""
    if normals is None:
        normals, _ = point_normals(index, normal_k, viewpoint)
    center = index.positions[int(query_id)]
    a, d, c = relsfh_batch(index, normals, center[None], np.asarray(axis)[None], radius, n1, n2,
                           exclude=np.array([int(query_id)]))
    return RelsfhDescriptor(a[0], d[0], int(c[0]))


def write_descriptor_dump(path, point_ids, angle_hists, density_hists):
    """Headerless record stream: uint32 point id, then N1+N2 float32 bins (little-endian)."""
    vals = np.hstack([angle_hists, density_hists]).astype("<f4")
    rec = np.dtype([("id", "<u4"), ("bins", "<f4", (vals.shape[1],))])
    out = np.empty(len(vals), dtype=rec)
    out["id"] = point_ids
    out["bins"] = vals
    with open(path, "wb") as f:
        f.write(out.tobytes())


def read_descriptor_dump(path, n1, n2):
    rec = np.dtype([("id", "<u4"), ("bins", "<f4", (n1 + n2,))])
    with open(path, "rb") as f:
        data = np.frombuffer(f.read(), dtype=rec)
    return data["id"].astype(np.int64), data["bins"][:, :n1], data["bins"][:, n1:]
