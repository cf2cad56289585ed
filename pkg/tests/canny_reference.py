"""Straightforward scalar Canny implementation used as the rendering oracle.

Written with plain Python loops, no vectorization, following the documented
contract step by step: luma grayscale, separable Gaussian blur with replicate
padding and left-to-right tap accumulation, row-major Sobel accumulation,
4-sector non-maximum suppression with the negative-side tie break, border
ring suppression, double threshold, 8-connected hysteresis.
"""

import math


def ref_gaussian_kernel(sigma):
    radius = int(math.ceil(3.0 * sigma))
    raw = [math.exp(-(k * k) / (2.0 * sigma * sigma)) for k in range(-radius, radius + 1)]
    s = sum(raw)
    return [w / s for w in raw], radius


def ref_canny(rgb, blur_sigma=1.4, low=50.0, high=150.0):
    """rgb: anything indexable as rgb[i][j][c] of bytes. Returns list of
    boolean rows."""
    H = len(rgb)
    W = len(rgb[0])

    gray = [[0.299 * float(rgb[i][j][0]) + 0.587 * float(rgb[i][j][1])
             + 0.114 * float(rgb[i][j][2]) for j in range(W)] for i in range(H)]

    kernel, radius = ref_gaussian_kernel(blur_sigma)

    def clamp(v, hi):
        return 0 if v < 0 else (hi if v > hi else v)

    hblur = [[0.0] * W for _ in range(H)]
    for i in range(H):
        for j in range(W):
            acc = 0.0
            for k in range(-radius, radius + 1):
                acc += kernel[k + radius] * gray[i][clamp(j + k, W - 1)]
            hblur[i][j] = acc
    blur = [[0.0] * W for _ in range(H)]
    for i in range(H):
        for j in range(W):
            acc = 0.0
            for k in range(-radius, radius + 1):
                acc += kernel[k + radius] * hblur[clamp(i + k, H - 1)][j]
            blur[i][j] = acc

    sx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    sy = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    gx = [[0.0] * W for _ in range(H)]
    gy = [[0.0] * W for _ in range(H)]
    for i in range(H):
        for j in range(W):
            ax = 0.0
            ay = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    pix = blur[clamp(i + dy, H - 1)][clamp(j + dx, W - 1)]
                    wx = sx[dy + 1][dx + 1]
                    wy = sy[dy + 1][dx + 1]
                    if wx:
                        ax += wx * pix
                    if wy:
                        ay += wy * pix
            gx[i][j] = ax
            gy[i][j] = ay

    mag = [[math.sqrt(gx[i][j] * gx[i][j] + gy[i][j] * gy[i][j])
            for j in range(W)] for i in range(H)]

    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    nms = [[0.0] * W for _ in range(H)]
    for i in range(H):
        for j in range(W):
            angle = math.atan2(gy[i][j], gx[i][j]) % math.pi
            sector = int(math.floor((angle + math.pi / 8) / (math.pi / 4))) % 4
            dy, dx = offsets[sector]
            pos = mag[clamp(i + dy, H - 1)][clamp(j + dx, W - 1)]
            neg = mag[clamp(i - dy, H - 1)][clamp(j - dx, W - 1)]
            m = mag[i][j]
            if m > neg and m >= pos:
                nms[i][j] = m
    for j in range(W):
        nms[0][j] = 0.0
        nms[H - 1][j] = 0.0
    for i in range(H):
        nms[i][0] = 0.0
        nms[i][W - 1] = 0.0

    edges = [[False] * W for _ in range(H)]
    stack = []
    for i in range(H):
        for j in range(W):
            if nms[i][j] >= high:
                edges[i][j] = True
                stack.append((i, j))
    while stack:
        i, j = stack.pop()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                ii, jj = i + dy, j + dx
                if 0 <= ii < H and 0 <= jj < W and not edges[ii][jj] \
                        and nms[ii][jj] >= low:
                    edges[ii][jj] = True
                    stack.append((ii, jj))
    return edges
