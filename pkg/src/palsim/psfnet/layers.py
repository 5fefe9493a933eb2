"""NumPy building blocks for the forward pass (channels-last, single image)."""

from __future__ import annotations

import numpy as np
from scipy import special


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """'Same' convolution with zero padding. x: (H, W, Cin), w: (kh, kw, Cin, Cout)."""
    kh, kw, cin, cout = w.shape
    if x.shape[-1] != cin:
        raise ValueError(f"expected {cin} input channels, got {x.shape[-1]}")
    h, wd = x.shape[:2]
    if kh == 1 and kw == 1:
        out = x @ w[0, 0]
    else:
        ph, pw = kh // 2, kw // 2
        xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
        out = np.zeros((h, wd, cout))
        for i in range(kh):
            for j in range(kw):
                out += xp[i:i + h, j:j + wd] @ w[i, j]
    return out + b if b is not None else out


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + special.erf(x / np.sqrt(2.0)))


def relu(x):
    return np.maximum(x, 0.0)


def leaky_relu(x, slope: float = 0.01):
    return np.where(x >= 0, x, slope * x)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def pixel_unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    """(H, W, C) -> (H/r, W/r, C*r*r); output channel c*r*r + i*r + j."""
    h, w, c = x.shape
    if h % r or w % r:
        raise ValueError(f"{h}x{w} not divisible by {r}")
    return x.reshape(h // r, r, w // r, r, c).transpose(0, 2, 4, 1, 3).reshape(h // r, w // r, c * r * r)


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Inverse of :func:`pixel_unshuffle`."""
    h, w, cr = x.shape
    if cr % (r * r):
        raise ValueError(f"{cr} channels not divisible by {r * r}")
    c = cr // (r * r)
    return x.reshape(h, w, c, r, r).transpose(0, 3, 1, 4, 2).reshape(h * r, w * r, c)


def avg_pool(x: np.ndarray, k: int) -> np.ndarray:
    h, w, c = x.shape
    if h % k or w % k:
        raise ValueError(f"{h}x{w} not divisible by {k}")
    return x.reshape(h // k, k, w // k, k, c).mean(axis=(1, 3))


def max_pool(x: np.ndarray, k: int) -> np.ndarray:
    h, w, c = x.shape
    if h % k or w % k:
        raise ValueError(f"{h}x{w} not divisible by {k}")
    return x.reshape(h // k, k, w // k, k, c).max(axis=(1, 3))


def _interp_matrix(n_in: int, factor: int) -> np.ndarray:
    n_out = n_in * factor
    src = np.maximum((np.arange(n_out) + 0.5) / factor - 0.5, 0.0)
    i0 = np.minimum(np.floor(src).astype(int), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.arange(n_out), i0), 1.0 - f)
    np.add.at(m, (np.arange(n_out), i1), f)
    return m


def upsample_bilinear(x: np.ndarray, factor: int) -> np.ndarray:
    """Half-pixel-centred bilinear upsampling with edge clamping."""
    my = _interp_matrix(x.shape[0], factor)
    mx = _interp_matrix(x.shape[1], factor)
    out = np.tensordot(my, x, axes=(1, 0))
    return np.tensordot(mx, out, axes=(1, 1)).swapaxes(0, 1)


def apply_kernel_map(x: np.ndarray, kmap: np.ndarray, k: int) -> np.ndarray:
    """Per-pixel, per-channel k x k filtering with edge-replicated borders.

    ``kmap[y, x, c*k*k + a*k + b]`` weights ``x[y + a - k//2, x + b - k//2, c]``.
    """
    h, w, c = x.shape
    if kmap.shape != (h, w, c * k * k):
        raise ValueError(f"kernel map shape {kmap.shape} does not match {(h, w, c * k * k)}")
    r = k // 2
    xp = np.pad(x, ((r, r), (r, r), (0, 0)), mode="edge") if r else x
    km = kmap.reshape(h, w, c, k * k)
    out = np.zeros_like(x)
    for a in range(k):
        for b in range(k):
            out += km[..., a * k + b] * xp[a:a + h, b:b + w]
    return out


def pad_to_multiple(x: np.ndarray, m: int) -> np.ndarray:
    h, w = x.shape[:2]
    ph, pw = (-h) % m, (-w) % m
    if ph or pw:
        x = np.pad(x, ((0, ph), (0, pw), (0, 0)), mode="edge")
    return x


def window_partition(x: np.ndarray, w: int) -> np.ndarray:
    """(H, W, C) -> (nH*nW, w*w, C), windows in row-major order."""
    h, wd, c = x.shape
    return x.reshape(h // w, w, wd // w, w, c).transpose(0, 2, 1, 3, 4).reshape(-1, w * w, c)


def window_reverse(win: np.ndarray, w: int, h: int, wd: int) -> np.ndarray:
    c = win.shape[-1]
    return win.reshape(h // w, wd // w, w, w, c).transpose(0, 2, 1, 3, 4).reshape(h, wd, c)


def relative_position_index(w: int) -> np.ndarray:
    """(w*w, w*w) indices into a ((2w-1)^2, heads) bias table."""
    coords = np.stack(np.meshgrid(np.arange(w), np.arange(w), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (w - 1)
    return rel[0] * (2 * w - 1) + rel[1]


def split_heads(t: np.ndarray, heads: int) -> np.ndarray:
    """(nW, N, C) -> (nW, heads, N, C/heads)."""
    n_w, n, c = t.shape
    return t.reshape(n_w, n, heads, c // heads).transpose(0, 2, 1, 3)


def merge_heads(t: np.ndarray) -> np.ndarray:
    n_w, heads, n, d = t.shape
    return t.transpose(0, 2, 1, 3).reshape(n_w, n, heads * d)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, bias: np.ndarray | None = None):
    """Scaled dot-product attention over (nW, heads, N, d) tensors; returns (out, probs)."""
    logits = q @ k.swapaxes(-1, -2) / np.sqrt(q.shape[-1])
    if bias is not None:
        logits = logits + bias
    probs = softmax(logits, axis=-1)
    return probs @ v, probs


def bilinear_gather(feat: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample ``feat`` (H, W, C) at real positions clamped to the map bounds."""
    h, w = feat.shape[:2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    return ((1 - fy) * (1 - fx) * feat[y0, x0] + (1 - fy) * fx * feat[y0, x1]
            + fy * (1 - fx) * feat[y1, x0] + fy * fx * feat[y1, x1])
