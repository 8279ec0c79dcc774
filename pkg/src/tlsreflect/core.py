"""Point-cloud container, spatial index and preprocessing filters.

A :class:`PointCloud` stores its attributes column-wise as numpy arrays;
:class:`PointRecord` is the row view returned by indexing a cloud.
"""
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.spatial import cKDTree


class GtLabel(IntEnum):
    REAL = 0
    VIRTUAL = 1
    UNKNOWN = 255


class PredLabel(IntEnum):
    REAL = 0
    VIRTUAL = 1
    UNSCORED = 255


@dataclass(frozen=True)
class PointRecord:
    position: tuple
    color: tuple | None
    intensity_raw: float
    intensity_corrected: float | None
    echo_index: int
    echo_count: int
    gt_label: GtLabel
    pred_label: PredLabel


def _as_array(value, dtype, n, default, shape=()):
    if value is None:
        return np.full((n,) + shape, default, dtype=dtype)
    arr = np.asarray(value, dtype=dtype)
    if arr.shape != (n,) + shape:
        raise ValueError(f"expected shape {(n,) + shape}, got {arr.shape}")
    return arr


@dataclass(eq=False)
class PointCloud:
    """Column-wise point cloud from a single scanner position.

    Coordinates are float64, intensities float32. ``colors`` and
    ``intensity_corrected`` are optional and ``None`` when absent.
    """

    positions: np.ndarray
    scanner_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    intensity: np.ndarray | None = None
    colors: np.ndarray | None = None
    intensity_corrected: np.ndarray | None = None
    echo_index: np.ndarray | None = None
    echo_count: np.ndarray | None = None
    gt_label: np.ndarray | None = None
    pred_label: np.ndarray | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.size == 0:
            pos = pos.reshape(0, 3)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (n, 3), got {pos.shape}")
        n = len(pos)
        self.positions = pos
        self.scanner_origin = np.asarray(self.scanner_origin, dtype=np.float64).reshape(3)
        self.intensity = _as_array(self.intensity, np.float32, n, 0.0)
        if self.colors is not None:
            self.colors = _as_array(self.colors, np.uint8, n, 0, (3,))
        if self.intensity_corrected is not None:
            self.intensity_corrected = _as_array(self.intensity_corrected, np.float32, n, np.nan)
        self.echo_index = _as_array(self.echo_index, np.uint8, n, 1)
        self.echo_count = _as_array(self.echo_count, np.uint8, n, 1)
        self.gt_label = _as_array(self.gt_label, np.uint8, n, GtLabel.UNKNOWN)
        self.pred_label = _as_array(self.pred_label, np.uint8, n, PredLabel.UNSCORED)
        self.validate()

    def validate(self):
        if not np.all(np.isfinite(self.scanner_origin)):
            raise ValueError("scanner_origin must be finite")
        bad = ~np.isfinite(self.positions).all(axis=1)
        if bad.any():
            raise ValueError(f"non-finite coordinate at point {int(np.flatnonzero(bad)[0])}")
        bad = (self.echo_index < 1) | (self.echo_index > self.echo_count)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(f"point {i}: echo_index {self.echo_index[i]} not in 1..{self.echo_count[i]}")
        bad = ~(self.intensity >= 0)
        if bad.any():
            raise ValueError(f"negative or NaN intensity at point {int(np.flatnonzero(bad)[0])}")

    def __len__(self):
        return len(self.positions)

    def __getitem__(self, i):
        i = int(i)
        corrected = None
        if self.intensity_corrected is not None:
            corrected = float(self.intensity_corrected[i])
        return PointRecord(
            position=tuple(float(v) for v in self.positions[i]),
            color=None if self.colors is None else tuple(int(c) for c in self.colors[i]),
            intensity_raw=float(self.intensity[i]),
            intensity_corrected=corrected,
            echo_index=int(self.echo_index[i]),
            echo_count=int(self.echo_count[i]),
            gt_label=GtLabel(int(self.gt_label[i])),
            pred_label=PredLabel(int(self.pred_label[i])),
        )

    def columns(self):
        """Per-point arrays by name, optional ones omitted when absent."""
        cols = {
            "positions": self.positions,
            "intensity": self.intensity,
            "echo_index": self.echo_index,
            "echo_count": self.echo_count,
            "gt_label": self.gt_label,
            "pred_label": self.pred_label,
        }
        if self.colors is not None:
            cols["colors"] = self.colors
        if self.intensity_corrected is not None:
            cols["intensity_corrected"] = self.intensity_corrected
        return cols

    def subset(self, ids):
        """New cloud holding the selected rows (bool mask or index array), order kept."""
        ids = np.asarray(ids)
        if ids.dtype == bool:
            ids = np.flatnonzero(ids)
        cols = {k: v[ids].copy() for k, v in self.columns().items()}
        return PointCloud(scanner_origin=self.scanner_origin.copy(), **cols)

    def replace(self, **changes):
        cols = {k: v.copy() for k, v in self.columns().items()}
        cols["scanner_origin"] = self.scanner_origin.copy()
        cols.update(changes)
        return PointCloud(**cols)

    def equals(self, other):
        """Bit-exact comparison of every stored field."""
        if not np.array_equal(self.scanner_origin, other.scanner_origin):
            return False
        a, b = self.columns(), other.columns()
        if a.keys() != b.keys():
            return False
        # NaN-aware, bit-level comparison
        return all(np.array_equal(a[k].view(np.uint8), b[k].view(np.uint8)) for k in a)

    @property
    def has_ground_truth(self):
        return bool(np.any(self.gt_label != GtLabel.UNKNOWN))


class SpatialIndex:
    """Exact radius and k-nearest queries over a fixed set of positions."""

    def __init__(self, positions):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.tree = cKDTree(self.positions) if len(self.positions) else None

    def __len__(self):
        return len(self.positions)

    def _resolve(self, p):
        if isinstance(p, (int, np.integer)):
            return self.positions[int(p)], int(p)
        return np.asarray(p, dtype=np.float64).reshape(3), None

    def radius_query(self, p, r):
        """Ids with ``|q - p| <= r``, ascending.

        ``p`` is either a coordinate triple or a point id; in the latter case
        the point itself is left out of the result.
        """
        if r <= 0:
            raise ValueError("radius must be positive")
        center, own = self._resolve(p)
        if self.tree is None:
            return np.empty(0, dtype=np.int64)
        # pad the tree search, then apply the exact test ourselves
        ids = np.asarray(self.tree.query_ball_point(center, r * (1 + 1e-9) + 1e-12), dtype=np.int64)
        d = np.linalg.norm(self.positions[ids] - center, axis=1)
        ids = np.sort(ids[d <= r])
        if own is not None:
            ids = ids[ids != own]
        return ids

    def knn_query(self, p, k):
        """The ``k`` nearest ids ordered by distance, ties by lower id.

        A point id as ``p`` excludes that point from the result.
        """
        center, own = self._resolve(p)
        n = len(self.positions)
        want = k + (own is not None)
        want = min(want, n)
        if want == 0:
            return np.empty(0, dtype=np.int64)
        dist, _ = self.tree.query(center, k=want)
        dist = np.atleast_1d(dist)
        # everything tied with the k-th distance has to be considered
        ids = self.radius_query(center, float(dist[-1])) if dist[-1] > 0 else None
        if ids is None or len(ids) == 0:
            ids = np.flatnonzero(np.all(self.positions == center, axis=1))
        if own is not None:
            ids = ids[ids != own]
        d = np.linalg.norm(self.positions[ids] - center, axis=1)
        order = np.lexsort((ids, d))
        return ids[order][:k]

    def radius_csr(self, centers, r, exclude=None, chunk=4096):
        """Batched radius query in CSR form.

        Returns ``(indptr, indices)``; ``exclude[i]`` (an id or -1) is removed
        from row ``i``. Rows are sorted by id.
        """
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        m = len(centers)
        if self.tree is None or m == 0:
            return np.zeros(m + 1, dtype=np.int64), np.empty(0, dtype=np.int64)
        if exclude is not None:
            exclude = np.asarray(exclude, dtype=np.int64)
        counts = np.zeros(m, dtype=np.int64)
        pieces = []
        # chunked so the intermediate python lists stay small
        for s in range(0, m, chunk):
            c = centers[s:s + chunk]
            lists = self.tree.query_ball_point(c, r * (1 + 1e-9) + 1e-12, return_sorted=True)
            cnt = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(c))
            idx = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=int(cnt.sum()))
            del lists
            rows = np.repeat(np.arange(len(c)), cnt)
            d = self.positions[idx] - c[rows]
            keep = np.einsum("ij,ij->i", d, d) <= r * r
            if exclude is not None:
                keep &= idx != exclude[s:s + chunk][rows]
            counts[s:s + chunk] = np.bincount(rows[keep], minlength=len(c))
            pieces.append(idx[keep])
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, np.concatenate(pieces)

    def knn_all(self, k):
        """Indices of the ``k`` nearest points (self included) for every point."""
        k = min(k, len(self.positions))
        _, idx = self.tree.query(self.positions, k=k)
        return np.asarray(idx, dtype=np.int64).reshape(len(self.positions), k)


def radius_filter(cloud, radius, min_neighbors, index=None, iterate=False):
    """Keep points with at least ``min_neighbors`` other points within ``radius``.

    One pass by default. With ``iterate=True`` the filter is reapplied until
    nothing changes, which makes it idempotent.
    """
    if radius <= 0 or min_neighbors < 0:
        raise ValueError("radius must be > 0 and min_neighbors >= 0")
    current = cloud
    while True:
        if len(current) == 0:
            return current
        idx = index if (index is not None and current is cloud) else SpatialIndex(current.positions)
        counts = idx.tree.query_ball_point(current.positions, radius, return_length=True) - 1
        keep = counts >= min_neighbors
        if keep.all():
            return current if current is not cloud else cloud.subset(np.arange(len(cloud)))
        current = current.subset(keep)
        if not iterate:
            return current


def voxel_downsample(cloud, voxel):
    """One survivor per occupied voxel: the point nearest that voxel's centroid.

    Ties go to the lower id. Survivors keep their original order.
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    n = len(cloud)
    if n == 0:
        return cloud.subset(np.empty(0, dtype=np.int64))
    keys = np.floor(cloud.positions / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, cloud.positions)
    centroids = sums / counts[:, None]
    d = np.linalg.norm(cloud.positions - centroids[inverse], axis=1)
    order = np.lexsort((np.arange(n), d, inverse))
    first = np.r_[True, inverse[order][1:] != inverse[order][:-1]]
    return cloud.subset(np.sort(order[first]))
