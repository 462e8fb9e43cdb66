"""Pure-numpy implementations of the hot kernels.

Every function here has a twin in ``_numba`` with the same signature and the
same floating-point operation order, so the two backends agree to the last
bit on diffusion and to rounding noise on the trigonometric agent updates.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

NAME = "numpy"


def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def prf_uniform(seed, entity, step, draw):
    """Counter-based uniform in [0, 1) keyed by (seed, entity, step, draw).

    ``entity`` may be an array; the other keys are scalars.
    """
    with np.errstate(over="ignore"):
        ent = np.asarray(entity, dtype=np.uint64)
        h = _mix64(np.uint64(seed) + GOLDEN)
        h = _mix64(h ^ ent)
        h = _mix64(h ^ np.uint64(step))
        h = _mix64(h ^ np.uint64(draw))
    return (h >> _S11).astype(np.float64) * _INV53


def _hsum(v):
    h = v + np.roll(v, 1, axis=1)
    return h + np.roll(v, -1, axis=1)


def _vsum_into(h, decay, out):
    v = h + np.roll(h, 1, axis=0)
    v = v + np.roll(h, -1, axis=0)
    out[...] = v * (decay / 9.0)
    return out


def diffuse_decay(src, decay, out=None, scratch=None):
    """3x3 toroidal box mean followed by multiplicative decay."""
    if out is None:
        out = np.empty_like(src)
    return _vsum_into(_hsum(src.astype(np.float64, copy=False)), decay, out)


def deposit_diffuse_decay(src, counts, deposit, decay, out=None, scratch=None):
    """``diffuse_decay(src + counts * deposit)`` computed at float64."""
    if out is None:
        out = np.empty_like(src)
    v = src.astype(np.float64) + counts * float(deposit)
    return _vsum_into(_hsum(v), decay, out)


def _wrap(p, size):
    p = p - size * np.floor(p / size)
    p[p >= size] = 0.0
    return p


def _cell(p, size):
    return np.floor(p).astype(np.int64) % size


def physarum_agents(x, y, heading, ids, fields, weights, sensor_angle,
                    sensor_offset, step_size, rotation_angle, seed, step,
                    counts):
    """Sense-rotate-move-deposit for one species chunk; mutates in place."""
    n_layers, height, width = fields.shape
    ca, sa = np.cos(sensor_angle), np.sin(sensor_angle)
    cr, sr = np.cos(rotation_angle), np.sin(rotation_angle)
    c = np.cos(heading)
    s = np.sin(heading)

    def sample(dx, dy):
        cx = _cell(x + sensor_offset * dx, width)
        cy = _cell(y + sensor_offset * dy, height)
        acc = np.zeros(x.shape[0])
        for k in range(n_layers):
            w = weights[k]
            if w != 0.0:
                acc = acc + w * fields[k, cy, cx].astype(np.float64)
        return acc

    f = sample(c, s)
    left = sample(c * ca + s * sa, s * ca - c * sa)
    right = sample(c * ca - s * sa, s * ca + c * sa)

    stay = (f > left) & (f > right)
    rand = ~stay & (f < left) & (f < right)
    turn = np.zeros(x.shape[0], dtype=np.int8)
    if rand.any():
        u = prf_uniform(seed, ids[rand], step, 0)
        turn[rand] = np.where(u < 0.5, -1, 1)
    rest = ~stay & ~rand
    turn[rest & (left > right)] = -1
    turn[rest & (right > left)] = 1

    neg = turn < 0
    pos = turn > 0
    heading[neg] -= rotation_angle
    heading[pos] += rotation_angle
    c2 = c.copy()
    s2 = s.copy()
    c2[neg] = c[neg] * cr + s[neg] * sr
    s2[neg] = s[neg] * cr - c[neg] * sr
    c2[pos] = c[pos] * cr - s[pos] * sr
    s2[pos] = s[pos] * cr + c[pos] * sr

    x[:] = _wrap(x + step_size * c2, width)
    y[:] = _wrap(y + step_size * s2, height)

    flat = _cell(y, height) * width + _cell(x, width)
    counts += np.bincount(flat, minlength=height * width).reshape(
        height, width).astype(counts.dtype)


def termite_agents(x, y, heading, spikes, field, sigma, probe_angle,
                   probe_dist, turn, step_size, theta_dep, p0, seed, step,
                   entity0, flags, counts):
    """One termite step. ``flags`` receives 0 none, 1 spike, 2 trail, 3 random."""
    height, width = field.shape
    n = x.shape[0]
    ent = np.uint64(entity0) + np.arange(n, dtype=np.uint64)

    heading += (2.0 * prf_uniform(seed, ent, step, 0) - 1.0) * sigma
    c = np.cos(heading)
    s = np.sin(heading)
    ca, sa = np.cos(probe_angle), np.sin(probe_angle)
    ct, st = np.cos(turn), np.sin(turn)

    def sample(dx, dy):
        px = x + probe_dist * dx
        py = y + probe_dist * dy
        return field[_cell(py, height), _cell(px, width)]

    mid = sample(c, s)
    left = sample(c * ca + s * sa, s * ca - c * sa)
    right = sample(c * ca - s * sa, s * ca + c * sa)
    best = np.maximum(np.maximum(left, mid), right)

    go_left = (left > mid) & (left > right)
    go_right = ~go_left & (right > mid) & (right > left)
    heading -= np.where(go_left, turn, 0.0)
    heading += np.where(go_right, turn, 0.0)
    c, s = (np.where(go_left, c * ct + s * st, np.where(go_right, c * ct - s * st, c)),
            np.where(go_left, s * ct - c * st, np.where(go_right, s * ct + c * st, s)))

    x += step_size * c
    y += step_size * s
    x[:] = _wrap(x, width)
    y[:] = _wrap(y, height)

    u = prf_uniform(seed, ent, step, 1)
    out = np.zeros(n, dtype=np.int8)
    out[u < p0] = 3
    out[best > theta_dep] = 2
    out[spikes != 0] = 1
    flags[:] = out

    hit = out != 0
    flat = _cell(y[hit], height) * width + _cell(x[hit], width)
    counts += np.bincount(flat, minlength=height * width).reshape(
        height, width).astype(counts.dtype)


def _min_image(d, size):
    return d - size * np.floor(d / size + 0.5)


def _finish_steer(n, sdx, sdy, svx, svy, sepx, sepy, vx_i, vy_i, w_coh,
                  w_sep, w_ali):
    sx = w_sep * sepx
    sy = w_sep * sepy
    has = n > 0
    safe = np.where(has, n, 1)
    sx = sx + np.where(has, w_coh * (sdx / safe) + w_ali * (svx / safe - vx_i), 0.0)
    sy = sy + np.where(has, w_coh * (sdy / safe) + w_ali * (svy / safe - vy_i), 0.0)
    return sx, sy


def boid_steer_naive(px, py, vx, vy, width, height, r_neighbor, r_sep,
                     w_coh, w_sep, w_ali, lo, hi, block=512):
    """All-pairs steering for boids ``lo..hi``; O(n) memory per block row."""
    rn2 = r_neighbor * r_neighbor
    rs2 = r_sep * r_sep
    idx_all = np.arange(px.shape[0])
    out_x = np.empty(hi - lo)
    out_y = np.empty(hi - lo)
    for b0 in range(lo, hi, block):
        b1 = min(b0 + block, hi)
        rows = np.arange(b0, b1)
        dx = _min_image(px[None, :] - px[rows, None], width)
        dy = _min_image(py[None, :] - py[rows, None], height)
        d2 = dx * dx + dy * dy
        near = (d2 < rn2) & (idx_all[None, :] != rows[:, None])
        sep = near & (d2 < rs2) & (d2 > 0.0)
        n = near.sum(axis=1)
        sdx = np.where(near, dx, 0.0).sum(axis=1)
        sdy = np.where(near, dy, 0.0).sum(axis=1)
        svx = np.where(near, vx[None, :], 0.0).sum(axis=1)
        svy = np.where(near, vy[None, :], 0.0).sum(axis=1)
        inv = np.where(sep, 1.0 / np.where(sep, d2, 1.0), 0.0)
        sepx = -(dx * inv).sum(axis=1)
        sepy = -(dy * inv).sum(axis=1)
        sx, sy = _finish_steer(n, sdx, sdy, svx, svy, sepx, sepy, vx[rows],
                               vy[rows], w_coh, w_sep, w_ali)
        out_x[b0 - lo:b1 - lo] = sx
        out_y[b0 - lo:b1 - lo] = sy
    return out_x, out_y


def boid_steer_grid(px, py, vx, vy, width, height, r_neighbor, r_sep,
                    w_coh, w_sep, w_ali, lo, hi):
    """Spatial-index steering; the numpy path uses a periodic k-d tree."""
    from scipy.spatial import cKDTree

    n_all = px.shape[0]
    pts = np.column_stack([px, py])
    tree = cKDTree(pts, boxsize=(width, height))
    pairs = tree.query_pairs(r_neighbor, output_type="ndarray")
    i = np.concatenate([pairs[:, 0], pairs[:, 1]])
    j = np.concatenate([pairs[:, 1], pairs[:, 0]])
    dx = _min_image(px[j] - px[i], width)
    dy = _min_image(py[j] - py[i], height)
    d2 = dx * dx + dy * dy
    keep = d2 < r_neighbor * r_neighbor
    i, j, dx, dy, d2 = i[keep], j[keep], dx[keep], dy[keep], d2[keep]
    sep = (d2 < r_sep * r_sep) & (d2 > 0.0)
    inv = np.where(sep, 1.0 / np.where(sep, d2, 1.0), 0.0)

    n = np.bincount(i, minlength=n_all)
    sdx = np.bincount(i, dx, minlength=n_all)
    sdy = np.bincount(i, dy, minlength=n_all)
    svx = np.bincount(i, vx[j], minlength=n_all)
    svy = np.bincount(i, vy[j], minlength=n_all)
    sepx = -np.bincount(i, dx * inv, minlength=n_all)
    sepy = -np.bincount(i, dy * inv, minlength=n_all)
    sl = slice(lo, hi)
    return _finish_steer(n[sl], sdx[sl], sdy[sl], svx[sl], svy[sl], sepx[sl],
                         sepy[sl], vx[sl], vy[sl], w_coh, w_sep, w_ali)


def block_sums(fields, ys, xs):
    """Per-layer sums over the blocks bounded by ``ys`` and ``xs`` (float64).

    ``ys`` and ``xs`` hold ``grid + 1`` increasing edges starting at 0.
    Also returns each layer's maximum.
    """
    f = fields.astype(np.float64)
    sums = np.add.reduceat(np.add.reduceat(f, ys[:-1], axis=1), xs[:-1], axis=2)
    return sums, f.max(axis=(1, 2))
