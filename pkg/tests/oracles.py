"""Independent reference implementations used to pin expected test values.

Everything here is deliberately naive (nested loops, brute force,
finite differences) and shares no code with the package under test.
"""

import numpy as np


def conv2d_naive(x, w, b):
    """Direct six-nested-loop convolution, zero 'same' padding, stride 1."""
    bs, ci, h, ww = x.shape
    co, _, k, _ = w.shape
    p = (k - 1) // 2
    y = np.zeros((bs, co, h, ww), dtype=np.float64)
    for n in range(bs):
        for o in range(co):
            for yy in range(h):
                for xx in range(ww):
                    acc = 0.0
                    for dy in range(k):
                        for dx in range(k):
                            sy, sx = yy + dy - p, xx + dx - p
                            if 0 <= sy < h and 0 <= sx < ww:
                                acc += float(np.dot(x[n, :, sy, sx], w[o, :, dy, dx]))
                    y[n, o, yy, xx] = acc + b[o]
    return y


def maxpool2x2_naive(x):
    """Nested-loop 2x2 window max."""
    bs, c, h, w = x.shape
    y = np.zeros((bs, c, h // 2, w // 2), dtype=x.dtype)
    for n in range(bs):
        for ch in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    y[n, ch, i, j] = x[n, ch, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()
    return y


def finite_difference_grad(f, x, eps=1e-5):
    """Central-difference gradient of scalar f at x (x is modified in place and restored)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def assert_grads_close(analytic, numeric, rtol, atol=1e-7):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def otsu_bruteforce(values):
    """Exhaustive 256-bin Otsu: recompute class stats from scratch for each split.

    Returns the bin index t (0..254) whose split [0..t] | [t+1..255]
    maximizes between-class variance, or None for a constant input.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = values.min(), values.max()
    if hi == lo:
        return None
    bins = np.minimum((values - lo) / (hi - lo) * 256.0, 255.0).astype(int)
    hist = np.bincount(bins, minlength=256).astype(np.float64)
    best_t, best_var = 0, -1.0
    total = hist.sum()
    for t in range(255):
        w0 = hist[:t + 1].sum()
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            var = 0.0
        else:
            m0 = np.dot(np.arange(t + 1), hist[:t + 1]) / w0
            m1 = np.dot(np.arange(t + 1, 256), hist[t + 1:]) / w1
            var = (w0 / total) * (w1 / total) * (m0 - m1) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return best_t


def flood_fill_labels(mask):
    """8-connected labeling by explicit BFS flood fill."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=int)
    nxt = 0
    for sy in range(h):
        for sx in range(w):
            if mask[sy, sx] and labels[sy, sx] == 0:
                nxt += 1
                stack = [(sy, sx)]
                labels[sy, sx] = nxt
                while stack:
                    y, x = stack.pop()
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx_ = y + dy, x + dx
                            if 0 <= ny < h and 0 <= nx_ < w and mask[ny, nx_] and labels[ny, nx_] == 0:
                                labels[ny, nx_] = nxt
                                stack.append((ny, nx_))
    return labels


def max_matching_bruteforce(detections, truths, radius):
    """Maximum-cardinality matching with pair distance <= radius, by recursion.

    Feasible only for small instances (<= ~8x8).
    """
    dets = [tuple(d) for d in detections]
    gts = [tuple(t) for t in truths]
    feasible = [
        [j for j, g in enumerate(gts)
         if (d[0] - g[0]) ** 2 + (d[1] - g[1]) ** 2 <= radius ** 2]
        for d in dets
    ]

    def best(i, used):
        if i == len(dets):
            return 0
        top = best(i + 1, used)
        for j in feasible[i]:
            if not used & (1 << j):
                top = max(top, 1 + best(i + 1, used | (1 << j)))
        return top

    return best(0, 0)
