"""Comparison baselines for the ablation test (not part of the package).

* Hellinger distance between L1-normalised histograms;
* FPFH (fast point feature histogram): Darboux-frame angle triplets of
  every neighbour pair, 11 bins per angle, weighted over the neighbourhood.

Both plug into :func:`tlsreflect.scoring.score_cloud` as feature backends.
"""
import numpy as np

from tlsreflect.scoring import RelsfhFeatures


def hellinger(a, b):
    """Row-wise Hellinger distance ``sqrt(1 - sum sqrt(a*b))`` in [0, 1]."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    bc = np.sqrt(a * b).sum(axis=1)
    return np.sqrt(np.maximum(1.0 - bc, 0.0))


class RelsfhHellinger(RelsfhFeatures):
    """RE-LSFH histograms compared with the Hellinger distance instead of Hausdorff."""

    def distance(self, fa, fb):
        out = 0.5 * (hellinger(fa[0], fb[0]) + hellinger(fa[1], fb[1]))
        out[(fa[-1] == 0) | (fb[-1] == 0)] = np.inf
        return out


def _norm_rows(h):
    s = h.sum(axis=1, keepdims=True)
    return np.divide(h, s, out=np.zeros_like(h), where=s > 0)


def spfh(positions, normals, ids, index, radius, bins=11, chunk=2048):
    """Simplified point feature histograms of ``ids`` (three concatenated L1-normalised parts)."""
    out = np.zeros((len(ids), 3 * bins))
    counts = np.zeros(len(ids), dtype=np.int64)
    for s in range(0, len(ids), chunk):
        c = ids[s:s + chunk]
        indptr, nb = index.radius_csr(positions[c], radius, exclude=c)
        cnt = np.diff(indptr)
        rows = np.repeat(np.arange(len(c)), cnt)
        src = c[rows]
        d = positions[nb] - positions[src]
        dist = np.linalg.norm(d, axis=1)
        dist[dist == 0] = 1.0
        d /= dist[:, None]
        u = normals[src]
        nt = normals[nb]
        v = np.cross(d, u)
        vn = np.linalg.norm(v, axis=1)
        vn[vn == 0] = 1.0
        v /= vn[:, None]
        w = np.cross(u, v)
        alpha = np.einsum("ij,ij->i", v, nt)
        phi = np.einsum("ij,ij->i", u, d)
        theta = np.arctan2(np.einsum("ij,ij->i", w, nt), np.einsum("ij,ij->i", u, nt))
        parts = []
        for val, lo, hi in ((alpha, -1.0, 1.0), (phi, -1.0, 1.0), (theta, -np.pi, np.pi)):
            b = np.clip(((val - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)
            parts.append(np.bincount(rows * bins + b, minlength=len(c) * bins).reshape(len(c), bins)
                         .astype(float))
        out[s:s + chunk] = np.hstack([_norm_rows(p) for p in parts])
        counts[s:s + chunk] = cnt
    return out, counts


class FpfhHellinger:
    """FPFH descriptors (axis ignored) compared with the Hellinger distance.

    The SPFH radius is half the RE-LSFH radius so the weighted FPFH support
    spans the same neighbourhood size.
    """

    def __init__(self, index, normals, config, bins=11):
        self.index = index
        self.normals = normals
        self.radius = 0.5 * config.radius
        self.bins = bins
        self._cache = {}

    def _spfh(self, ids):
        ids = np.unique(ids)
        todo = np.array([i for i in ids.tolist() if i not in self._cache], dtype=np.int64)
        if len(todo):
            h, _ = spfh(self.index.positions, self.normals, todo, self.index, self.radius, self.bins)
            for i, row in zip(todo.tolist(), h):
                self._cache[i] = row

    def describe(self, centers, axes, exclude):
        ids = np.asarray(exclude, dtype=np.int64)
        pos = self.index.positions
        indptr, nb = self.index.radius_csr(pos[ids], self.radius, exclude=ids)
        self._spfh(np.concatenate([ids, nb]))
        nbins = 3 * self.bins
        out = np.zeros((len(ids), nbins))
        counts = np.diff(indptr)
        for r, i in enumerate(ids.tolist()):
            acc = self._cache[i].copy()
            js = nb[indptr[r]:indptr[r + 1]]
            if len(js):
                wts = 1.0 / np.maximum(np.linalg.norm(pos[js] - pos[i], axis=1), 1e-9)
                acc += (wts[:, None] * np.array([self._cache[j] for j in js.tolist()])).sum(0) / len(js)
            out[r] = acc
        b = self.bins
        out = np.hstack([_norm_rows(out[:, k * b:(k + 1) * b]) for k in range(3)])
        return out, counts

    def distance(self, fa, fb):
        b = self.bins
        d = np.mean([hellinger(fa[0][:, k * b:(k + 1) * b], fb[0][:, k * b:(k + 1) * b])
                     for k in range(3)], axis=0)
        d[(fa[-1] == 0) | (fb[-1] == 0)] = np.inf
        return d
