"""Hot inner loops, each in a numba flavour and a numpy flavour.

The public names at the bottom of the module point at one flavour or the
other depending on :data:`tlsreflect._accel.USE_NUMBA`. Both flavours are
importable directly (``*_nb`` / ``*_np``) so tests and the benchmark can
compare them.

Neighbour lists are passed in CSR form: the neighbours of row ``i`` are
``indices[indptr[i]:indptr[i + 1]]``.
"""
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ._accel import USE_NUMBA, njit, prange

HALF_PI = math.pi / 2.0


# ---------------------------------------------------------------------------
# descriptor histograms


@njit(parallel=True)
def relsfh_hist_nb(positions, normals, centers, axes, indptr, indices, radius, n1, n2):
    m = centers.shape[0]
    angle = np.zeros((m, n1))
    density = np.zeros((m, n2))
    counts = np.zeros(m, dtype=np.int64)
    for i in prange(m):
        cx, cy, cz = centers[i, 0], centers[i, 1], centers[i, 2]
        ax, ay, az = axes[i, 0], axes[i, 1], axes[i, 2]
        start, stop = indptr[i], indptr[i + 1]
        for p in range(start, stop):
            j = indices[p]
            dx = cx - positions[j, 0]
            dy = cy - positions[j, 1]
            dz = cz - positions[j, 2]
            proj = dx * ax + dy * ay + dz * az
            rho2 = (dx * dx + dy * dy + dz * dz) - proj * proj
            rho = math.sqrt(rho2) if rho2 > 0.0 else 0.0
            c = abs(normals[j, 0] * ax + normals[j, 1] * ay + normals[j, 2] * az)
            if c > 1.0:
                c = 1.0
            theta = math.acos(c)
            bi = int(theta * n1 / HALF_PI)
            if bi > n1 - 1:
                bi = n1 - 1
            bj = int(rho * n2 / radius)
            if bj > n2 - 1:
                bj = n2 - 1
            angle[i, bi] += 1.0
            density[i, bj] += 1.0
        k = stop - start
        counts[i] = k
        if k > 0:
            for b in range(n1):
                angle[i, b] /= k
            for b in range(n2):
                density[i, b] /= k
    return angle, density, counts


def relsfh_hist_np(positions, normals, centers, axes, indptr, indices, radius, n1, n2):
    m = centers.shape[0]
    counts = np.diff(indptr).astype(np.int64)
    rows = np.repeat(np.arange(m), counts)
    d = centers[rows] - positions[indices]
    ax = axes[rows]
    proj = d[:, 0] * ax[:, 0] + d[:, 1] * ax[:, 1] + d[:, 2] * ax[:, 2]
    rho2 = (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]) - proj * proj
    rho = np.sqrt(np.maximum(rho2, 0.0))
    nrm = normals[indices]
    c = np.abs(nrm[:, 0] * ax[:, 0] + nrm[:, 1] * ax[:, 1] + nrm[:, 2] * ax[:, 2])
    theta = np.arccos(np.minimum(c, 1.0))
    bi = np.minimum((theta * n1 / HALF_PI).astype(np.int64), n1 - 1)
    bj = np.minimum((rho * n2 / radius).astype(np.int64), n2 - 1)
    angle = np.bincount(rows * n1 + bi, minlength=m * n1).reshape(m, n1).astype(float)
    density = np.bincount(rows * n2 + bj, minlength=m * n2).reshape(m, n2).astype(float)
    nz = counts > 0
    angle[nz] /= counts[nz, None]
    density[nz] /= counts[nz, None]
    return angle, density, counts


# ---------------------------------------------------------------------------
# Hausdorff distance between histograms embedded as (bin position, value)


@njit(parallel=True)
def hausdorff_rows_nb(a, b):
    m, n = a.shape
    out = np.empty(m)
    denom = n - 1 if n > 1 else 1
    for r in prange(m):
        hab = 0.0
        for i in range(n):
            xi = i / denom if n > 1 else 0.0
            best = np.inf
            for j in range(n):
                xj = j / denom if n > 1 else 0.0
                dx = xi - xj
                dy = a[r, i] - b[r, j]
                d = math.sqrt(dx * dx + dy * dy)
                if d < best:
                    best = d
            if best > hab:
                hab = best
        hba = 0.0
        for j in range(n):
            xj = j / denom if n > 1 else 0.0
            best = np.inf
            for i in range(n):
                xi = i / denom if n > 1 else 0.0
                dx = xj - xi
                dy = b[r, j] - a[r, i]
                d = math.sqrt(dx * dx + dy * dy)
                if d < best:
                    best = d
            if best > hba:
                hba = best
        out[r] = hab if hab > hba else hba
    return out


def _bin_positions(n):
    if n == 1:
        return np.zeros(1)
    return np.arange(n) / (n - 1)


def hausdorff_rows_np(a, b, chunk=20000):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] > chunk:
        return np.concatenate([hausdorff_rows_np(a[s:s + chunk], b[s:s + chunk], chunk)
                               for s in range(0, a.shape[0], chunk)])
    x = _bin_positions(a.shape[1])
    dx = x[:, None] - x[None, :]
    dx2 = dx * dx
    dy = a[:, :, None] - b[:, None, :]
    d = np.sqrt(dx2[None] + dy * dy)
    hab = d.min(axis=2).max(axis=1)
    # recompute with the operands swapped so both directions use identical
    # rounding to the compiled kernel
    dy = b[:, :, None] - a[:, None, :]
    d = np.sqrt(dx2[None] + dy * dy)
    hba = d.min(axis=2).max(axis=1)
    return np.maximum(hab, hba)


# ---------------------------------------------------------------------------
# DBSCAN labelling on a precomputed eps-graph (neighbour lists exclude self)


@njit
def dbscan_labels_nb(indptr, indices, min_pts):
    n = indptr.shape[0] - 1
    core = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        core[i] = (indptr[i + 1] - indptr[i]) + 1 >= min_pts
    labels = -np.ones(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    next_label = 0
    # scanning ids in ascending order numbers components by their lowest core id
    for seed in range(n):
        if not core[seed] or labels[seed] >= 0:
            continue
        labels[seed] = next_label
        top = 0
        stack[top] = seed
        top += 1
        while top > 0:
            top -= 1
            p = stack[top]
            for q in range(indptr[p], indptr[p + 1]):
                j = indices[q]
                if core[j] and labels[j] < 0:
                    labels[j] = next_label
                    stack[top] = j
                    top += 1
        next_label += 1
    for i in range(n):
        if core[i]:
            continue
        best = -1
        for q in range(indptr[i], indptr[i + 1]):
            j = indices[q]
            if core[j] and (best < 0 or j < best):
                best = j
        if best >= 0:
            labels[i] = labels[best]
    return labels


def dbscan_labels_np(indptr, indices, min_pts):
    n = len(indptr) - 1
    deg = np.diff(indptr)
    core = deg + 1 >= min_pts
    rows = np.repeat(np.arange(n), deg)
    labels = -np.ones(n, dtype=np.int64)
    if not core.any():
        return labels
    keep = core[rows] & core[indices]
    graph = csr_matrix((np.ones(keep.sum()), (rows[keep], indices[keep])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    core_ids = np.flatnonzero(core)
    # relabel components by their lowest core id
    comp_core = comp[core_ids]
    first = {}
    for cid in comp_core:
        if cid not in first:
            first[cid] = len(first)
    labels[core_ids] = [first[c] for c in comp_core]
    # border points take the label of their lowest-id core neighbour
    border = ~core[rows] & core[indices]
    if border.any():
        b_rows = rows[border]
        b_nbrs = indices[border]
        order = np.lexsort((b_nbrs, b_rows))
        b_rows, b_nbrs = b_rows[order], b_nbrs[order]
        firsts = np.r_[True, b_rows[1:] != b_rows[:-1]]
        labels[b_rows[firsts]] = labels[b_nbrs[firsts]]
    return labels


if USE_NUMBA:
    relsfh_hist = relsfh_hist_nb
    hausdorff_rows = hausdorff_rows_nb
    dbscan_labels = dbscan_labels_nb
else:
    relsfh_hist = relsfh_hist_np
    hausdorff_rows = hausdorff_rows_np
    dbscan_labels = dbscan_labels_np
