"""Brute-force reference implementations.

Written as plain Python loops over nodes / positions and deliberately free of
the package's vectorized helpers, so that agreement is an independent check.
"""
import math

import numpy as np


def stencil_step(frame, ring_mask, ring_values, dxi, deta, beta, dtau):
    ny, nx = frame.shape
    out = [[float(frame[j][i]) for i in range(nx)] for j in range(ny)]
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            c = frame[j][i]
            lap = (frame[j][i + 1] - 2 * c + frame[j][i - 1]) / (dxi * dxi)
            lap += (frame[j + 1][i] - 2 * c + frame[j - 1][i]) / (deta * deta)
            out[j][i] = c + dtau * beta * lap
    for j in range(ny):
        for i in range(nx):
            if ring_mask[j][i]:
                out[j][i] = ring_values[j][i]
    return np.array(out)


def residual_loop(pred, beta, dtau, dxi, deta):
    b_n, t_n, ny, nx = pred.shape
    out = np.zeros((b_n, t_n - 1, ny - 2, nx - 2))
    for b in range(b_n):
        for n in range(t_n - 1):
            f, g = pred[b, n], pred[b, n + 1]
            for j in range(1, ny - 1):
                for i in range(1, nx - 1):
                    lap = (f[j, i + 1] - 2 * f[j, i] + f[j, i - 1]) / dxi**2
                    lap += (f[j + 1, i] - 2 * f[j, i] + f[j - 1, i]) / deta**2
                    out[b, n, j - 1, i - 1] = (g[j, i] - f[j, i]) / dtau[b] - beta[b] * lap
    return out


def physics_loss_loop(pred, beta, dtau, dxi, deta, eps):
    r = residual_loop(pred, beta, dtau, dxi, deta).ravel()
    n = len(r)
    mean = sum(r) / n
    var = sum((x - mean) ** 2 for x in r) / n
    std = math.sqrt(var + eps)
    return sum((x / std) ** 2 for x in r) / n


def ring_mse_loop(pred, ring_mask, ring_values):
    total, count = 0.0, 0
    b_n, t_n, ny, nx = pred.shape
    for b in range(b_n):
        for t in range(t_n):
            for j in range(ny):
                for i in range(nx):
                    if ring_mask[j][i]:
                        total += (pred[b, t, j, i] - ring_values[b][j][i]) ** 2
                        count += 1
    return total / count


def mse_loop(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)) / len(a)


def dot_scores(q, k):
    n, d = len(q), len(q[0])
    return np.array([[sum(q[i][c] * k[j][c] for c in range(d)) / math.sqrt(d) for j in range(n)] for i in range(n)])


def weighted_sum(s, v):
    n, d = len(s), len(v[0])
    return np.array([[sum(s[i][j] * v[j][c] for j in range(len(v))) for c in range(d)] for i in range(n)])


def softmax_rows(scores, visible):
    out = np.zeros_like(scores)
    for i in range(len(scores)):
        cols = [j for j in range(len(scores[i])) if visible[i][j]]
        m = max(scores[i][j] for j in cols)
        z = sum(math.exp(scores[i][j] - m) for j in cols)
        for j in cols:
            out[i][j] = math.exp(scores[i][j] - m) / z
    return out


def pe_entry(pos, i, dims, scale):
    if i % 2 == 0:
        return scale * math.sin(pos / 10000 ** (i / dims))
    return scale * math.cos(pos / 10000 ** ((i - 1) / dims))


def mask_entry(kind, i, j, n):
    if kind == "block":
        return j < n
    return j < n or j < i


def heatmap_loop(w, ny, nx):
    # w: [ny*nx, d_e], row k is the weight vector of grid node k (C order)
    out = np.zeros((ny, nx))
    for j in range(ny):
        for i in range(nx):
            row = w[j * nx + i]
            out[j, i] = sum(abs(x) for x in row) / len(row)
    return out
