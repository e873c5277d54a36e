"""Slow, definition-level reference implementations used as test oracles.

Nothing here touches the package's fast paths.
"""

import math

import numpy as np


def naive_dct2(x):
    """Orthonormal DCT-II straight from the defining sum."""
    n = len(x)
    out = []
    for k in range(n):
        c = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        out.append(c * sum(x[i] * math.cos(math.pi * (2 * i + 1) * k / (2 * n)) for i in range(n)))
    return np.array(out)


def naive_idct2(X):
    """Orthonormal DCT-III (inverse of :func:`naive_dct2`) from its sum."""
    n = len(X)
    out = []
    for i in range(n):
        s = 0.0
        for k in range(n):
            c = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
            s += c * X[k] * math.cos(math.pi * (2 * i + 1) * k / (2 * n))
        out.append(s)
    return np.array(out)


def naive_dct2d(m):
    h, w = len(m), len(m[0])
    out = np.zeros((h, w))
    for u in range(h):
        cu = math.sqrt(1.0 / h) if u == 0 else math.sqrt(2.0 / h)
        for v in range(w):
            cv = math.sqrt(1.0 / w) if v == 0 else math.sqrt(2.0 / w)
            s = 0.0
            for i in range(h):
                for j in range(w):
                    s += (m[i][j] * math.cos(math.pi * (2 * i + 1) * u / (2 * h))
                          * math.cos(math.pi * (2 * j + 1) * v / (2 * w)))
            out[u, v] = cu * cv * s
    return out


def naive_idct2d(M):
    h, w = len(M), len(M[0])
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            s = 0.0
            for u in range(h):
                cu = math.sqrt(1.0 / h) if u == 0 else math.sqrt(2.0 / h)
                for v in range(w):
                    cv = math.sqrt(1.0 / w) if v == 0 else math.sqrt(2.0 / w)
                    s += (cu * cv * M[u][v] * math.cos(math.pi * (2 * i + 1) * u / (2 * h))
                          * math.cos(math.pi * (2 * j + 1) * v / (2 * w)))
            out[i, j] = s
    return out


def scalar_soft(x, tau):
    if x > tau:
        return x - tau
    if x < -tau:
        return x + tau
    return 0.0


def hrv_loop(rr):
    """Scalar loop evaluation of mean RR, SDNN (1/N), RMSSD (1/(N-1)), NN50, pNN50."""
    n = len(rr)
    mean = 0.0
    for v in rr:
        mean += v
    mean /= n
    ss = 0.0
    for v in rr:
        ss += (v - mean) ** 2
    sdnn = math.sqrt(ss / n)
    sd = 0.0
    nn50 = 0
    for i in range(n - 1):
        diff = rr[i + 1] - rr[i]
        sd += diff * diff
        if abs(diff) > 50.0:
            nn50 += 1
    rmssd = math.sqrt(sd / (n - 1))
    return mean, sdnn, rmssd, nn50, 100.0 * nn50 / (n - 1)


def moments_loop(x):
    n = len(x)
    mean = sum(x) / n
    m2 = sum((v - mean) ** 2 for v in x) / n
    m3 = sum((v - mean) ** 3 for v in x) / n
    m4 = sum((v - mean) ** 4 for v in x) / n
    return mean, math.sqrt(m2), m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0


def auc_pairs(scores, labels):
    """All-pairs Mann-Whitney AUC with ties counted one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def conv3x3_loop(x, w):
    """Direct sliding-window 3x3 same-padded convolution (cross-correlation).

    ``x`` is (C, H, W), ``w`` is (O, C, 3, 3).
    """
    c, h, wd = x.shape
    o = w.shape[0]
    out = np.zeros((o, h, wd))
    for oc in range(o):
        for i in range(h):
            for j in range(wd):
                s = 0.0
                for ic in range(c):
                    for di in range(3):
                        for dj in range(3):
                            ii, jj = i + di - 1, j + dj - 1
                            if 0 <= ii < h and 0 <= jj < wd:
                                s += x[ic, ii, jj] * w[oc, ic, di, dj]
                out[oc, i, j] = s
    return out


def rel_error(analytic, numeric, floor=1e-6):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def central_difference(f, params, j, eps=1e-4):
    old = params[j]
    params[j] = old + eps
    fp = f()
    params[j] = old - eps
    fm = f()
    params[j] = old
    return (fp - fm) / (2 * eps)
