"""Independent scalar re-implementations used as test oracles.

Nothing here imports the vectorized code paths it checks.  Loops over plain
Python floats, one equation at a time.
"""
import math


def triple_loop_matmul(a, b):
    n, m = len(a), len(a[0])
    p = len(b[0])
    out = [[0.0] * p for _ in range(n)]
    for i in range(n):
        for j in range(p):
            s = 0.0
            for t in range(m):
                s += float(a[i][t]) * float(b[t][j])
            out[i][j] = s
    return out


def sig(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def dot_col(x, W, col):
    return sum(float(x[r]) * float(W[r][col]) for r in range(len(x)))


def lstm_cell(x, h, c, p):
    """One step of the five LSTM equations on Python lists."""
    hs = len(h)
    h_new, c_new = [], []
    for j in range(hs):
        pre = {}
        for g in "ifog":
            pre[g] = dot_col(x, p[f"W_{g}"], j) + dot_col(h, p[f"U_{g}"], j) + float(p[f"b_{g}"][0][j])
        i, f, o = sig(pre["i"]), sig(pre["f"]), sig(pre["o"])
        g = math.tanh(pre["g"])
        cj = f * float(c[j]) + i * g
        c_new.append(cj)
        h_new.append(o * math.tanh(cj))
    return h_new, c_new


def lstm_unrolled(X, p):
    hs = len(p["U_i"])
    h, c = [0.0] * hs, [0.0] * hs
    for row in X:
        h, c = lstm_cell(row, h, c, p)
    return h


def softmax_list(v):
    m = max(v)
    e = [math.exp(x - m) for x in v]
    s = sum(e)
    return [x / s for x in e]


def attention(X, p):
    """Returns (A, output) for single-head scaled dot-product attention."""
    k, d = len(X), len(X[0])
    proj = {}
    for n in "qkv":
        W = p[f"W_{n}"]
        proj[n] = [[dot_col(X[t], W, j) for j in range(d)] for t in range(k)]
    Q, K, V = proj["q"], proj["k"], proj["v"]
    A = []
    for t in range(k):
        logits = [sum(Q[t][j] * K[s][j] for j in range(d)) / math.sqrt(d) for s in range(k)]
        A.append(softmax_list(logits))
    out = [[sum(A[t][s] * V[s][j] for s in range(k)) for j in range(d)] for t in range(k)]
    return A, out


def head(v, p):
    def dense(x, W, b):
        return [dot_col(x, W, j) + float(b[0][j]) for j in range(len(W[0]))]

    a1 = [max(0.0, z) for z in dense(v, p["W1"], p["b1"])]
    s = [sig(z) for z in dense(a1, p["W2"], p["b2"])]
    return softmax_list(dense(s, p["W3"], p["b3"]))


def cubic(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x ** 3 - (a + 3) * x ** 2 + 1
    if x < 2:
        return a * x ** 3 - 5 * a * x ** 2 + 8 * a * x - 4 * a
    return 0.0


def bicubic_pixel(img, out_w, out_h, x, y, ch=0):
    """Direct two-dimensional convolution formula for one output sample."""
    h, w = len(img), len(img[0])
    sx = (x + 0.5) * w / out_w - 0.5
    sy = (y + 0.5) * h / out_h - 0.5
    ix, iy = math.floor(sx), math.floor(sy)
    fx, fy = sx - ix, sy - iy
    acc = 0.0
    for n in range(-1, 3):
        for m in range(-1, 3):
            yy = min(max(iy + n, 0), h - 1)
            xx = min(max(ix + m, 0), w - 1)
            acc += cubic(n - fy) * cubic(m - fx) * float(img[yy][xx][ch])
    return min(255, max(0, math.floor(acc + 0.5)))


def block_means(gray, grid=8):
    h, w = len(gray), len(gray[0])
    bh, bw = h // grid, w // grid
    out = []
    for i in range(grid):
        for j in range(grid):
            vals = [gray[y][x] for y in range(i * bh, (i + 1) * bh) for x in range(j * bw, (j + 1) * bw)]
            out.append(sum(vals) / len(vals))
    return out


def nearest_centroid_accuracy(samples):
    """Leave-nothing-out nearest class centroid on flattened features."""
    dims = None
    sums, counts = {}, {}
    for s in samples:
        flat = [float(v) for v in s.features.matrix.reshape(-1)]
        dims = len(flat)
        acc = sums.setdefault(s.label, [0.0] * dims)
        for i, v in enumerate(flat):
            acc[i] += v
        counts[s.label] = counts.get(s.label, 0) + 1
    cents = {lab: [v / counts[lab] for v in acc] for lab, acc in sums.items()}
    correct = 0
    for s in samples:
        flat = [float(v) for v in s.features.matrix.reshape(-1)]
        dist = {lab: sum((a - b) ** 2 for a, b in zip(flat, c)) for lab, c in cents.items()}
        correct += min(dist, key=dist.get) == s.label
    return correct / len(samples)
