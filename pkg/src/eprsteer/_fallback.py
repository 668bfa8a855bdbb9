"""Pure numpy implementations of the hot kernels.

These define the reference semantics; the compiled module in ``_kernels.pyx``
must agree with them to floating point round-off.
"""
import numpy as np

_ROW_BLOCK = 256


def mixture_plogp(wu, wv, fu1, fv1, fu2, fv2, c1, c2):
    """Quadrature of ``P`` and ``P log P`` for a two-term separable mixture.

    ``P[i, j] = c1 * fu1[i] * fv1[j] + c2 * fu2[i] * fv2[j]`` on the tensor
    grid whose 1-D quadrature weights are ``wu`` and ``wv``.

    Returns
    -------
    mass, plogp : float
        ``sum w P`` and ``sum w P log P`` (natural log, ``0 log 0 = 0``).
    """
    wu = np.asarray(wu, dtype=float)
    wv = np.asarray(wv, dtype=float)
    mass = 0.0
    plogp = 0.0
    for start in range(0, wu.size, _ROW_BLOCK):
        sl = slice(start, start + _ROW_BLOCK)
        p = c1 * np.outer(fu1[sl], fv1) + c2 * np.outer(fu2[sl], fv2)
        w = np.outer(wu[sl], wv)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(p > 0.0, p * np.log(p), 0.0)
        mass += float(np.sum(w * p))
        plogp += float(np.sum(w * term))
    return mass, plogp


def disk_offsets(radius):
    """Integer (dy, dx) offsets inside a disk, in raster order."""
    r = int(radius)
    out = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
           if dx * dx + dy * dy <= radius * radius]
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def find_peaks(signal, threshold, radius):
    """Local maxima above ``threshold`` that dominate their disk neighbourhood.

    A pixel is kept when no pixel in the disk is brighter and no earlier
    pixel (raster order) in the disk is equally bright. Two peaks closer than
    ``radius`` therefore collapse onto the brighter one.
    """
    signal = np.asarray(signal, dtype=float)
    h, w = signal.shape
    offsets = disk_offsets(radius)
    ys, xs = np.nonzero(signal > threshold)
    keep = np.ones(ys.size, dtype=bool)
    for dy, dx in offsets:
        if dy == 0 and dx == 0:
            continue
        qy = ys + dy
        qx = xs + dx
        inside = (qy >= 0) & (qy < h) & (qx >= 0) & (qx < w)
        qv = np.full(ys.size, -np.inf)
        qv[inside] = signal[qy[inside], qx[inside]]
        pv = signal[ys, xs]
        earlier = (dy < 0) | ((dy == 0) & (dx < 0))
        keep &= ~((qv > pv) | ((qv == pv) & earlier))
    return ys[keep], xs[keep]


def fit_peaks(signal, raw, ys, xs, radius, saturation):
    """Weighted least-squares paraboloid fit to ``log(signal)`` around each peak.

    Pixels with ``signal < 1`` or at the digitizer ceiling are left out. Returns ``(x, y, amplitude,
    saturated)`` arrays; when the fitted surface has no interior maximum the
    intensity-weighted centroid is used instead.
    """
    signal = np.asarray(signal, dtype=float)
    h, w = signal.shape
    offsets = disk_offsets(radius)
    n = ys.size
    out_x = np.empty(n)
    out_y = np.empty(n)
    out_a = np.empty(n)
    out_s = np.zeros(n, dtype=bool)
    for k in range(n):
        py, px = int(ys[k]), int(xs[k])
        qy = py + offsets[:, 0]
        qx = px + offsets[:, 1]
        inside = (qy >= 0) & (qy < h) & (qx >= 0) & (qx < w)
        qy, qx = qy[inside], qx[inside]
        dy = offsets[inside, 0].astype(float)
        dx = offsets[inside, 1].astype(float)
        s = signal[qy, qx]
        clipped = raw[qy, qx] >= saturation
        out_s[k] = bool(np.any(clipped))
        # clipped pixels are censored, so they stay out of the fit
        use = (s >= 1.0) & ~clipped
        res = _solve_paraboloid(dx[use], dy[use], s[use], radius)
        if res is None:
            wsum = np.sum(np.clip(s, 0.0, None))
            cx = np.sum(np.clip(s, 0.0, None) * dx) / wsum
            cy = np.sum(np.clip(s, 0.0, None) * dy) / wsum
            out_x[k], out_y[k], out_a[k] = px + cx, py + cy, signal[py, px]
        else:
            cx, cy, amp = res
            out_x[k], out_y[k], out_a[k] = px + cx, py + cy, amp
    return out_x, out_y, out_a, out_s


def _solve_paraboloid(dx, dy, s, radius):
    if s.size < 6:
        return None
    design = np.column_stack([np.ones_like(dx), dx, dy, dx * dx, dy * dy, dx * dy])
    z = np.log(s)
    wt = s * s
    normal = design.T @ (design * wt[:, None])
    rhs = design.T @ (wt * z)
    try:
        c = np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError:
        return None
    hxx, hyy, hxy = 2.0 * c[3], 2.0 * c[4], c[5]
    det = hxx * hyy - hxy * hxy
    if not (hxx < 0.0 and det > 0.0):
        return None
    cx = (-c[1] * hyy + c[2] * hxy) / det
    cy = (-c[2] * hxx + c[1] * hxy) / det
    if cx * cx + cy * cy > radius * radius:
        return None
    logamp = (c[0] + c[1] * cx + c[2] * cy + c[3] * cx * cx
              + c[4] * cy * cy + c[5] * cx * cy)
    return cx, cy, float(np.exp(logamp))
