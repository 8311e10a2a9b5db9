"""Hot numeric kernels.

Every kernel has two implementations: a numba ``@njit`` loop version and a
vectorized numpy version. The numba path is used by default; set
``PRIMPLAN_DISABLE_NUMBA=1`` to force the numpy path (useful for debugging and
for platforms without numba). Both paths return identical results up to
floating point rounding; ``benchmarks/bench_kernels.py`` compares them.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("PRIMPLAN_DISABLE_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)

_BIG = 1e20


# --------------------------------------------------------------------------
# squared Euclidean distance transform (cell units)
# --------------------------------------------------------------------------


def _edt_lines_py(f, out):
    # Felzenszwalb & Huttenlocher lower envelope of parabolas, one row at a time
    n_lines, n = f.shape
    v = np.zeros(n, dtype=np.int64)
    z = np.zeros(n + 1)
    for r in range(n_lines):
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for qq in range(1, n):
            s = ((f[r, qq] + qq * qq) - (f[r, v[k]] + v[k] * v[k])) / (2.0 * qq - 2.0 * v[k])
            while s <= z[k]:
                k -= 1
                s = ((f[r, qq] + qq * qq) - (f[r, v[k]] + v[k] * v[k])) / (2.0 * qq - 2.0 * v[k])
            k += 1
            v[k] = qq
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for qq in range(n):
            while z[k + 1] < qq:
                k += 1
            d = qq - v[k]
            out[r, qq] = d * d + f[r, v[k]]
    return out


def _edt_lines_numpy(f):
    n = f.shape[1]
    idx = np.arange(n, dtype=float)
    sq = (idx[:, None] - idx[None, :]) ** 2  # (target, source)
    out = np.empty_like(f)
    # chunk rows so the (rows, n, n) temporary stays small
    step = max(1, int(4_000_000 // max(n * n, 1)))
    for r0 in range(0, f.shape[0], step):
        blk = f[r0 : r0 + step]
        out[r0 : r0 + step] = np.min(blk[:, None, :] + sq[None, :, :], axis=2)
    return out


if HAVE_NUMBA:
    _edt_lines_nb = njit(cache=True)(_edt_lines_py)


def squared_edt(occupied, use_numba=None):
    """Exact squared Euclidean distance (in cell units) to the nearest True cell.

    Cells with no occupied cell anywhere in the grid get ``inf``.
    """
    use_numba = USE_NUMBA if use_numba is None else use_numba
    occupied = np.asarray(occupied, dtype=bool)
    if not occupied.any():
        return np.full(occupied.shape, np.inf)
    f = np.where(occupied, 0.0, _BIG)
    for axis in range(f.ndim):
        moved = np.moveaxis(f, axis, -1)
        shape = moved.shape
        lines = np.ascontiguousarray(moved.reshape(-1, shape[-1]))
        if use_numba and HAVE_NUMBA:
            res = _edt_lines_nb(lines, np.empty_like(lines))
        else:
            res = _edt_lines_numpy(lines)
        f = np.moveaxis(res.reshape(shape), -1, axis)
    f = np.ascontiguousarray(f)
    f[f >= _BIG * 0.5] = np.inf
    return f


# --------------------------------------------------------------------------
# batched Horner evaluation
# --------------------------------------------------------------------------


def _horner_py(coeffs, ts, out):
    n, d1 = coeffs.shape
    k = ts.shape[0]
    for i in range(n):
        for j in range(k):
            acc = coeffs[i, d1 - 1]
            t = ts[j]
            for c in range(d1 - 2, -1, -1):
                acc = acc * t + coeffs[i, c]
            out[i, j] = acc
    return out


def _horner_numpy(coeffs, ts):
    acc = np.broadcast_to(coeffs[:, -1:], (coeffs.shape[0], ts.shape[0])).copy()
    for c in range(coeffs.shape[1] - 2, -1, -1):
        acc *= ts[None, :]
        acc += coeffs[:, c : c + 1]
    return acc


if HAVE_NUMBA:
    _horner_nb = njit(cache=True)(_horner_py)


def eval_polys(coeffs, ts, use_numba=None):
    """Evaluate ``n`` polynomials (rows of ``coeffs``, lowest degree first) at ``ts``.

    Returns an ``(n, len(ts))`` array.
    """
    use_numba = USE_NUMBA if use_numba is None else use_numba
    coeffs = np.ascontiguousarray(coeffs, dtype=float)
    ts = np.ascontiguousarray(ts, dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[None, :]
    if use_numba and HAVE_NUMBA:
        return _horner_nb(coeffs, ts, np.empty((coeffs.shape[0], ts.shape[0])))
    return _horner_numpy(coeffs, ts)


# --------------------------------------------------------------------------
# grid lookup
# --------------------------------------------------------------------------


def _cell_index_py(points, origin, resolution, dims, out):
    n, m = points.shape
    for i in range(n):
        flat = 0
        inside = True
        for k in range(m):
            c = int(np.floor((points[i, k] - origin[k]) / resolution))
            if c < 0 or c >= dims[k]:
                inside = False
                break
            flat = flat * dims[k] + c
        out[i] = flat if inside else -1
    return out


def _cell_index_numpy(points, origin, resolution, dims):
    idx = np.floor((points - origin[None, :]) / resolution).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < dims[None, :]), axis=1)
    flat = np.ravel_multi_index(tuple(np.where(inside[:, None], idx, 0).T), tuple(dims))
    return np.where(inside, flat, -1)


if HAVE_NUMBA:
    _cell_index_nb = njit(cache=True)(_cell_index_py)


def cell_indices(points, origin, resolution, dims, use_numba=None):
    """Flat C-order cell index of each point, ``-1`` when outside the grid."""
    use_numba = USE_NUMBA if use_numba is None else use_numba
    points = np.ascontiguousarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    origin = np.asarray(origin, dtype=float)
    dims = np.asarray(dims, dtype=np.int64)
    if use_numba and HAVE_NUMBA:
        return _cell_index_nb(points, origin, float(resolution), dims, np.empty(points.shape[0], np.int64))
    return _cell_index_numpy(points, origin, float(resolution), dims)


# --------------------------------------------------------------------------
# point-to-polyline distance
# --------------------------------------------------------------------------


def _polyline_dist_py(points, verts, out):
    n, m = points.shape
    nv = verts.shape[0]
    for i in range(n):
        best = np.inf
        if nv == 1:
            s = 0.0
            for k in range(m):
                d = points[i, k] - verts[0, k]
                s += d * d
            best = s
        for j in range(nv - 1):
            ab2 = 0.0
            ap_ab = 0.0
            for k in range(m):
                ab = verts[j + 1, k] - verts[j, k]
                ab2 += ab * ab
                ap_ab += (points[i, k] - verts[j, k]) * ab
            u = 0.0
            if ab2 > 0.0:
                u = min(1.0, max(0.0, ap_ab / ab2))
            s = 0.0
            for k in range(m):
                d = points[i, k] - (verts[j, k] + u * (verts[j + 1, k] - verts[j, k]))
                s += d * d
            if s < best:
                best = s
        out[i] = np.sqrt(best)
    return out


def _polyline_dist_numpy(points, verts):
    if verts.shape[0] == 1:
        return np.linalg.norm(points - verts[0], axis=1)
    a = verts[:-1]
    ab = verts[1:] - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ap = points[:, None, :] - a[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.einsum("nsk,sk->ns", ap, ab) / ab2[None, :]
    u = np.where(ab2[None, :] > 0, np.clip(u, 0.0, 1.0), 0.0)
    diff = ap - u[:, :, None] * ab[None, :, :]
    return np.sqrt(np.min(np.einsum("nsk,nsk->ns", diff, diff), axis=1))


if HAVE_NUMBA:
    _polyline_dist_nb = njit(cache=True)(_polyline_dist_py)


def polyline_distance(points, verts, use_numba=None):
    """Euclidean distance from each point to a polyline given by its vertices."""
    use_numba = USE_NUMBA if use_numba is None else use_numba
    points = np.ascontiguousarray(points, dtype=float)
    verts = np.ascontiguousarray(verts, dtype=float)
    if use_numba and HAVE_NUMBA:
        return _polyline_dist_nb(points, verts, np.empty(points.shape[0]))
    return _polyline_dist_numpy(points, verts)
