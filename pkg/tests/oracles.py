"""Independent re-implementations used as test oracles.

Deliberately written frame by frame with corner arithmetic, sharing no
code with the library.
"""

import math


def iou_corners(p, g):
    px1, py1, px2, py2 = p[0], p[1], p[0] + p[2], p[1] + p[3]
    gx1, gy1, gx2, gy2 = g[0], g[1], g[0] + g[2], g[1] + g[3]
    ix1, iy1 = max(px1, gx1), max(py1, gy1)
    ix2, iy2 = min(px2, gx2), min(py2, gy2)
    if ix2 <= ix1 or iy2 <= iy1:
        return 0.0
    inter = (ix2 - ix1) * (iy2 - iy1)
    union = (px2 - px1) * (py2 - py1) + (gx2 - gx1) * (gy2 - gy1) - inter
    return min(1.0, inter / union)  # IoU is at most 1 by definition


def center_dist(p, g):
    return math.sqrt(((p[0] + p[2] / 2) - (g[0] + g[2] / 2)) ** 2 + ((p[1] + p[3] / 2) - (g[1] + g[3] / 2)) ** 2)


def norm_center_dist(p, g):
    dx = ((p[0] + p[2] / 2) - (g[0] + g[2] / 2)) / g[2]
    dy = ((p[1] + p[3] / 2) - (g[1] + g[3] / 2)) / g[3]
    return math.sqrt(dx * dx + dy * dy)


def evaluated_pairs(result, seqs):
    pairs = []
    for seq in seqs:
        preds = result.predictions[seq.name]
        for t, frame in enumerate(seq.frames):
            if frame.absent:
                continue
            pairs.append((tuple(preds[t]), frame.box.as_tuple()))
    return pairs


def brute_curves(result, seqs):
    pairs = evaluated_pairs(result, seqs)
    n = len(pairs)
    prec = [sum(center_dist(p, g) <= tau for p, g in pairs) / n for tau in range(51)]
    succ = [sum(iou_corners(p, g) > i / 20 for p, g in pairs) / n for i in range(21)]
    norm = [sum(norm_center_dist(p, g) <= i / 200 for p, g in pairs) / n for i in range(101)]
    return prec, succ, norm


def block_loops(x, w, n_heads, eps=1e-6):
    """Pre-norm transformer block written token by token with Python loops."""
    n, d = len(x), len(x[0])
    dh = d // n_heads

    def ln(row, g, b):
        mu = sum(row) / d
        var = sum((v - mu) ** 2 for v in row) / d
        return [(v - mu) / math.sqrt(var + eps) * g[c] + b[c] for c, v in enumerate(row)]

    def lin(row, m, b):
        return [sum(row[i] * m[i][j] for i in range(len(row))) + b[j] for j in range(len(b))]

    a = [ln(r, w["ln1_g"], w["ln1_b"]) for r in x]
    q = [lin(r, w["wq"], w["bq"]) for r in a]
    k = [lin(r, w["wk"], w["bk"]) for r in a]
    v = [lin(r, w["wv"], w["bv"]) for r in a]
    o = [[0.0] * d for _ in range(n)]
    for h in range(n_heads):
        cols = range(h * dh, (h + 1) * dh)
        for i in range(n):
            s = [sum(q[i][c] * k[j][c] for c in cols) / math.sqrt(dh) for j in range(n)]
            m = max(s)
            e = [math.exp(t - m) for t in s]
            z = sum(e)
            for c in cols:
                o[i][c] = sum(e[j] / z * v[j][c] for j in range(n))
    x1 = [[x[i][c] + val for c, val in enumerate(lin(o[i], w["wo"], w["bo"]))] for i in range(n)]
    out = []
    for r in x1:
        c_ = ln(r, w["ln2_g"], w["ln2_b"])
        f = [0.5 * t * (1 + math.erf(t / math.sqrt(2))) for t in lin(c_, w["w1"], w["b1"])]
        out.append([r[c] + val for c, val in enumerate(lin(f, w["w2"], w["b2"]))])
    return out
