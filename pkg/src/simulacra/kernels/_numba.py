"""numba-compiled kernels. Signatures mirror ``_numpy``."""
import math

import numpy as np

from .._jit import njit

NAME = "numba"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True, inline="always")
def _uniform(seed, entity, step, draw):
    h = _mix64(seed + GOLDEN)
    h = _mix64(h ^ entity)
    h = _mix64(h ^ step)
    h = _mix64(h ^ draw)
    return np.float64(h >> _S11) * _INV53


@njit(cache=True, nogil=True)
def _prf_array(seed, entity, step, draw, out):
    for i in range(entity.shape[0]):
        out[i] = _uniform(seed, entity[i], step, draw)


def prf_uniform(seed, entity, step, draw):
    ent = np.atleast_1d(np.asarray(entity, dtype=np.uint64))
    out = np.empty(ent.shape[0])
    _prf_array(np.uint64(seed), ent, np.uint64(step), np.uint64(draw), out)
    if np.ndim(entity) == 0:
        return out[0]
    return out.reshape(np.shape(entity))


@njit(cache=True, nogil=True)
def _hpass(src, i, j, width):
    jl = j - 1 if j > 0 else width - 1
    jr = j + 1 if j < width - 1 else 0
    return (np.float64(src[i, j]) + np.float64(src[i, jl])) + np.float64(src[i, jr])


@njit(cache=True, nogil=True)
def _vpass(h, decay, out):
    height, width = h.shape
    scale = decay / 9.0
    for i in range(height):
        iu = i - 1 if i > 0 else height - 1
        idn = i + 1 if i < height - 1 else 0
        for j in range(width):
            out[i, j] = ((h[i, j] + h[iu, j]) + h[idn, j]) * scale


@njit(cache=True, nogil=True)
def _diffuse_decay(src, decay, out, scratch):
    height, width = src.shape
    for i in range(height):
        for j in range(width):
            scratch[i, j] = _hpass(src, i, j, width)
    _vpass(scratch, decay, out)


@njit(cache=True, nogil=True)
def _deposit_diffuse_decay(src, counts, deposit, decay, out, scratch):
    height, width = src.shape
    for i in range(height):
        for j in range(width):
            jl = j - 1 if j > 0 else width - 1
            jr = j + 1 if j < width - 1 else 0
            a = np.float64(src[i, j]) + counts[i, j] * deposit
            b = np.float64(src[i, jl]) + counts[i, jl] * deposit
            c = np.float64(src[i, jr]) + counts[i, jr] * deposit
            scratch[i, j] = (a + b) + c
    _vpass(scratch, decay, out)


def _buffers(src, out, scratch):
    if out is None:
        out = np.empty_like(src)
    if scratch is None or scratch.shape != src.shape:
        scratch = np.empty(src.shape, dtype=np.float64)
    return out, scratch


def diffuse_decay(src, decay, out=None, scratch=None):
    out, scratch = _buffers(src, out, scratch)
    _diffuse_decay(src, float(decay), out, scratch)
    return out


def deposit_diffuse_decay(src, counts, deposit, decay, out=None, scratch=None):
    out, scratch = _buffers(src, out, scratch)
    _deposit_diffuse_decay(src, counts, float(deposit), float(decay), out, scratch)
    return out


@njit(cache=True, nogil=True, inline="always")
def _wrap(p, size):
    # in-range values skip the division; p - size * floor(p / size) == p there
    if p < 0.0 or p >= size:
        p = p - size * math.floor(p / size)
        if p >= size:
            p = 0.0
    return p


@njit(cache=True, nogil=True, inline="always")
def _cell(p, size):
    k = int(math.floor(p))
    if k < 0:
        k += size
    elif k >= size:
        k -= size
    if k < 0 or k >= size:
        k = k % size
    return k


@njit(cache=True, nogil=True, inline="always")
def _sample_layers(fields, weights, px, py):
    n_layers, height, width = fields.shape
    cx = _cell(px, width)
    cy = _cell(py, height)
    acc = 0.0
    for k in range(n_layers):
        w = weights[k]
        if w != 0.0:
            acc = acc + w * np.float64(fields[k, cy, cx])
    return acc


@njit(cache=True, nogil=True)
def _physarum(x, y, heading, ids, fields, weights, sensor_angle, sensor_offset,
              step_size, rotation_angle, seed, step, counts):
    height = fields.shape[1]
    width = fields.shape[2]
    ca = math.cos(sensor_angle)
    sa = math.sin(sensor_angle)
    cr = math.cos(rotation_angle)
    sr = math.sin(rotation_angle)
    for i in range(x.shape[0]):
        h = heading[i]
        c = math.cos(h)
        s = math.sin(h)
        xi = x[i]
        yi = y[i]
        f = _sample_layers(fields, weights, xi + sensor_offset * c, yi + sensor_offset * s)
        left = _sample_layers(fields, weights, xi + sensor_offset * (c * ca + s * sa),
                              yi + sensor_offset * (s * ca - c * sa))
        right = _sample_layers(fields, weights, xi + sensor_offset * (c * ca - s * sa),
                               yi + sensor_offset * (s * ca + c * sa))
        turn = 0
        if f > left and f > right:
            turn = 0
        elif f < left and f < right:
            u = _uniform(seed, ids[i], step, np.uint64(0))
            turn = -1 if u < 0.5 else 1
        elif left > right:
            turn = -1
        elif right > left:
            turn = 1
        if turn < 0:
            heading[i] = h - rotation_angle
            c, s = c * cr + s * sr, s * cr - c * sr
        elif turn > 0:
            heading[i] = h + rotation_angle
            c, s = c * cr - s * sr, s * cr + c * sr
        nx = _wrap(xi + step_size * c, width)
        ny = _wrap(yi + step_size * s, height)
        x[i] = nx
        y[i] = ny
        counts[_cell(ny, height), _cell(nx, width)] += 1


def physarum_agents(x, y, heading, ids, fields, weights, sensor_angle,
                    sensor_offset, step_size, rotation_angle, seed, step,
                    counts):
    _physarum(x, y, heading, ids, fields, weights, float(sensor_angle),
              float(sensor_offset), float(step_size), float(rotation_angle),
              np.uint64(seed), np.uint64(step), counts)


@njit(cache=True, nogil=True, inline="always")
def _sample(field, px, py):
    height, width = field.shape
    return field[_cell(py, height), _cell(px, width)]


@njit(cache=True, nogil=True)
def _termites(x, y, heading, spikes, field, sigma, probe_angle, probe_dist,
              turn, step_size, theta_dep, p0, seed, step, entity0, flags,
              counts):
    height, width = field.shape
    ca = math.cos(probe_angle)
    sa = math.sin(probe_angle)
    ct = math.cos(turn)
    st = math.sin(turn)
    for i in range(x.shape[0]):
        ent = entity0 + np.uint64(i)
        h = heading[i] + (2.0 * _uniform(seed, ent, step, np.uint64(0)) - 1.0) * sigma
        c = math.cos(h)
        s = math.sin(h)
        xi = x[i]
        yi = y[i]
        mid = _sample(field, xi + probe_dist * c, yi + probe_dist * s)
        left = _sample(field, xi + probe_dist * (c * ca + s * sa),
                       yi + probe_dist * (s * ca - c * sa))
        right = _sample(field, xi + probe_dist * (c * ca - s * sa),
                        yi + probe_dist * (s * ca + c * sa))
        best = max(max(left, mid), right)
        if left > mid and left > right:
            h = h - turn
            c, s = c * ct + s * st, s * ct - c * st
        elif right > mid and right > left:
            h = h + turn
            c, s = c * ct - s * st, s * ct + c * st
        heading[i] = h
        nx = _wrap(xi + step_size * c, width)
        ny = _wrap(yi + step_size * s, height)
        x[i] = nx
        y[i] = ny
        u = _uniform(seed, ent, step, np.uint64(1))
        flag = 0
        if spikes[i] != 0:
            flag = 1
        elif best > theta_dep:
            flag = 2
        elif u < p0:
            flag = 3
        flags[i] = flag
        if flag != 0:
            counts[_cell(ny, height), _cell(nx, width)] += 1


def termite_agents(x, y, heading, spikes, field, sigma, probe_angle,
                   probe_dist, turn, step_size, theta_dep, p0, seed, step,
                   entity0, flags, counts):
    _termites(x, y, heading, spikes, field, float(sigma), float(probe_angle),
              float(probe_dist), float(turn), float(step_size),
              float(theta_dep), float(p0), np.uint64(seed), np.uint64(step),
              np.uint64(entity0), flags, counts)


@njit(cache=True, nogil=True, inline="always")
def _min_image(d, size):
    return d - size * math.floor(d / size + 0.5)


@njit(cache=True, nogil=True, inline="always")
def _finish(n, sdx, sdy, svx, svy, sepx, sepy, vxi, vyi, w_coh, w_sep, w_ali):
    sx = w_sep * sepx
    sy = w_sep * sepy
    if n > 0.0:
        sx = sx + (w_coh * (sdx / n) + w_ali * (svx / n - vxi))
        sy = sy + (w_coh * (sdy / n) + w_ali * (svy / n - vyi))
    return sx, sy


@njit(cache=True, nogil=True)
def _steer_naive(px, py, vx, vy, width, height, r_neighbor, r_sep, w_coh,
                 w_sep, w_ali, lo, hi, out_x, out_y):
    rn2 = r_neighbor * r_neighbor
    rs2 = r_sep * r_sep
    n_all = px.shape[0]
    for i in range(lo, hi):
        # scalar accumulators; an accumulator array here is an order of magnitude slower
        n = sdx = sdy = svx = svy = sepx = sepy = 0.0
        xi = px[i]
        yi = py[i]
        for j in range(n_all):
            if j == i:
                continue
            dx = _min_image(px[j] - xi, width)
            dy = _min_image(py[j] - yi, height)
            d2 = dx * dx + dy * dy
            if d2 < rn2:
                n += 1.0
                sdx += dx
                sdy += dy
                svx += vx[j]
                svy += vy[j]
                if d2 < rs2 and d2 > 0.0:
                    inv = 1.0 / d2
                    sepx -= dx * inv
                    sepy -= dy * inv
        sx, sy = _finish(n, sdx, sdy, svx, svy, sepx, sepy, vx[i], vy[i],
                         w_coh, w_sep, w_ali)
        out_x[i - lo] = sx
        out_y[i - lo] = sy


def boid_steer_naive(px, py, vx, vy, width, height, r_neighbor, r_sep,
                     w_coh, w_sep, w_ali, lo, hi):
    out_x = np.empty(hi - lo)
    out_y = np.empty(hi - lo)
    _steer_naive(px, py, vx, vy, float(width), float(height),
                 float(r_neighbor), float(r_sep), float(w_coh), float(w_sep),
                 float(w_ali), lo, hi, out_x, out_y)
    return out_x, out_y


@njit(cache=True, nogil=True)
def _steer_grid(px, py, vx, vy, width, height, r_neighbor, r_sep, w_coh,
                w_sep, w_ali, lo, hi, ncx, ncy, out_x, out_y):
    n = px.shape[0]
    cw = width / ncx
    ch = height / ncy
    cell = np.empty(n, dtype=np.int64)
    start = np.zeros(ncx * ncy + 1, dtype=np.int64)
    for i in range(n):
        cx = min(int(px[i] / cw), ncx - 1)
        cy = min(int(py[i] / ch), ncy - 1)
        cell[i] = cy * ncx + cx
        start[cell[i] + 1] += 1
    for c in range(ncx * ncy):
        start[c + 1] += start[c]
    fill = start[:-1].copy()
    order = np.empty(n, dtype=np.int64)
    for i in range(n):
        order[fill[cell[i]]] = i
        fill[cell[i]] += 1

    rn2 = r_neighbor * r_neighbor
    rs2 = r_sep * r_sep
    for i in range(lo, hi):
        n = sdx = sdy = svx = svy = sepx = sepy = 0.0
        xi = px[i]
        yi = py[i]
        cx0 = cell[i] % ncx
        cy0 = cell[i] // ncx
        for oy in range(-1, 2):
            cy = (cy0 + oy) % ncy
            for ox in range(-1, 2):
                cx = (cx0 + ox) % ncx
                c = cy * ncx + cx
                for k in range(start[c], start[c + 1]):
                    j = order[k]
                    if j == i:
                        continue
                    dx = _min_image(px[j] - xi, width)
                    dy = _min_image(py[j] - yi, height)
                    d2 = dx * dx + dy * dy
                    if d2 < rn2:
                        n += 1.0
                        sdx += dx
                        sdy += dy
                        svx += vx[j]
                        svy += vy[j]
                        if d2 < rs2 and d2 > 0.0:
                            inv = 1.0 / d2
                            sepx -= dx * inv
                            sepy -= dy * inv
        sx, sy = _finish(n, sdx, sdy, svx, svy, sepx, sepy, vx[i], vy[i],
                         w_coh, w_sep, w_ali)
        out_x[i - lo] = sx
        out_y[i - lo] = sy


def boid_steer_grid(px, py, vx, vy, width, height, r_neighbor, r_sep,
                    w_coh, w_sep, w_ali, lo, hi):
    ncx = int(width // r_neighbor)
    ncy = int(height // r_neighbor)
    if ncx < 3 or ncy < 3:
        return boid_steer_naive(px, py, vx, vy, width, height, r_neighbor,
                                r_sep, w_coh, w_sep, w_ali, lo, hi)
    out_x = np.empty(hi - lo)
    out_y = np.empty(hi - lo)
    _steer_grid(px, py, vx, vy, float(width), float(height),
                float(r_neighbor), float(r_sep), float(w_coh), float(w_sep),
                float(w_ali), lo, hi, ncx, ncy, out_x, out_y)
    return out_x, out_y


@njit(cache=True, nogil=True)
def _block_sums(fields, ys, xs, sums, tops):
    layers, height, width = fields.shape
    gy = ys.shape[0] - 1
    gx = xs.shape[0] - 1
    for s in range(layers):
        top = -np.inf
        for by in range(gy):
            for i in range(ys[by], ys[by + 1]):
                for bx in range(gx):
                    acc = 0.0
                    for j in range(xs[bx], xs[bx + 1]):
                        v = np.float64(fields[s, i, j])
                        acc += v
                        top = max(top, v)
                    sums[s, by, bx] += acc
        tops[s] = top


def block_sums(fields, ys, xs):
    ys = np.ascontiguousarray(ys, dtype=np.int64)
    xs = np.ascontiguousarray(xs, dtype=np.int64)
    sums = np.zeros((fields.shape[0], ys.shape[0] - 1, xs.shape[0] - 1))
    tops = np.empty(fields.shape[0])
    _block_sums(fields, ys, xs, sums, tops)
    return sums, tops
