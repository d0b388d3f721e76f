"""Slow, direct-definition reference implementations used only by the tests.

Everything here is written from the index formulas with explicit loops and
shares no code with the package.
"""

import math

import numpy as np


def conv_loop(K, X):
    """out[h,w,j] = sum_{n,u,v} K[u,v,j,n] X[h+u-r, w+v-r, n], zero outside."""
    k, _, No, Ni = K.shape
    H, W, _ = X.shape
    r = k // 2
    out = np.zeros((H, W, No))
    for h in range(H):
        for w in range(W):
            for j in range(No):
                acc = 0.0
                for n in range(Ni):
                    for u in range(k):
                        y = h + u - r
                        if y < 0 or y >= H:
                            continue
                        for v in range(k):
                            x = w + v - r
                            if 0 <= x < W:
                                acc += K[u, v, j, n] * X[y, x, n]
                out[h, w, j] = acc
    return out


def depthwise_loop(K, M):
    k, _, No, Ni = K.shape
    H, W, N = M.shape
    r = k // 2
    out = np.zeros((H, W, No, Ni, N))
    for j in range(No):
        for c in range(Ni):
            for n in range(N):
                for h in range(H):
                    for w in range(W):
                        acc = 0.0
                        for u in range(k):
                            for v in range(k):
                                y, x = h + u - r, w + v - r
                                if 0 <= y < H and 0 <= x < W:
                                    acc += K[u, v, j, c] * M[y, x, n]
                        out[h, w, j, c, n] = acc
    return out


def conv_matrix(K, H, W):
    """Dense matrix A with vec(conv(K, X)) = A @ vec(X) (row-major vec)."""
    k, _, No, Ni = K.shape
    r = k // 2
    A = np.zeros((H * W * No, H * W * Ni))
    for h in range(H):
        for w in range(W):
            for j in range(No):
                row = (h * W + w) * No + j
                for n in range(Ni):
                    for u in range(k):
                        for v in range(k):
                            y, x = h + u - r, w + v - r
                            if 0 <= y < H and 0 <= x < W:
                                A[row, (y * W + x) * Ni + n] += K[u, v, j, n]
    return A


def central_diff(f, x, step=1e-6):
    """Central finite-difference gradient of scalar f at array x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        fp = f(x)
        flat[i] = old - step
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * step)
    return g


def ssim_direct(ya, yb, win=11, sigma=1.5, c1=0.01 ** 2, c2=0.03 ** 2):
    """SSIM from its definition: weighted moments in each full window, then mean."""
    half = win // 2
    g = [[math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma ** 2))
          for j in range(win)] for i in range(win)]
    total = sum(sum(row) for row in g)
    H, W = ya.shape
    vals = []
    for h in range(H - win + 1):
        for w in range(W - win + 1):
            ma = mb = saa = sbb = sab = 0.0
            for i in range(win):
                for j in range(win):
                    wt = g[i][j] / total
                    a, b = ya[h + i, w + j], yb[h + i, w + j]
                    ma += wt * a
                    mb += wt * b
            for i in range(win):
                for j in range(win):
                    wt = g[i][j] / total
                    a, b = ya[h + i, w + j] - ma, yb[h + i, w + j] - mb
                    saa += wt * a * a
                    sbb += wt * b * b
                    sab += wt * a * b
            vals.append(((2 * ma * mb + c1) * (2 * sab + c2))
                        / ((ma * ma + mb * mb + c1) * (saa + sbb + c2)))
    return sum(vals) / len(vals)


def png_bytes(rows, color_type=2):
    """Minimal PNG encoder (zlib + struct only) for 8-bit RGB or RGBA rows."""
    import struct
    import zlib

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    height, width = len(rows), len(rows[0])
    raw = b"".join(b"\x00" + bytes(v for px in row for v in px) for row in rows)
    header = struct.pack(">IIBBBBB", width, height, 8, color_type, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header)
            + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b""))
