"""Forward-only PSF-aware recovery transformer.

Layout: task processing (pixel-unshuffle for AC) -> 3x3 feature extraction
on [image, PSF map] -> PFM -> PRTB stack -> PFM -> conv + long skip ->
3x3 conv, pixel-shuffle upsampling, 3x3 output conv.

Weights are a flat ``dict`` of float arrays keyed by layer path.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import numpy as np

from palsim.psfnet import layers as L


@dataclass(frozen=True)
class PartConfig:
    n_prtb: int = 6
    n_pmab: int = 6
    channels: int = 180
    heads: int = 6
    window_size: int = 8
    k_prime: int = 5
    pfm_kernel: int = 3
    alpha: float = 0.01
    mode: str = "AC"
    unshuffle: int = 4
    sr_scale: int = 3
    ffn_ratio: int = 2
    ln_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "mode", self.mode.upper())
        if self.mode not in ("AC", "SRAC"):
            raise ValueError(f"mode must be AC or SRAC, got {self.mode}")
        if self.channels % 2:
            raise ValueError("channels must be even (channel split)")
        if self.channels % self.heads or (self.channels // 2) % self.heads:
            raise ValueError("channels/2 must be divisible by heads")
        if self.pfm_kernel % 2 == 0:
            raise ValueError("pfm_kernel must be odd")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if min(self.n_prtb, self.n_pmab, self.window_size, self.k_prime) < 1:
            raise ValueError("block counts, window size and k_prime must be positive")

    @property
    def upscale(self) -> int:
        return self.unshuffle if self.mode == "AC" else self.sr_scale

    @property
    def psf_channels(self) -> int:
        return self.k_prime**2 + 3

    @property
    def in_channels(self) -> int:
        img = 3 * self.unshuffle**2 if self.mode == "AC" else 3
        return img + self.psf_channels

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def toy(cls, **kw) -> "PartConfig":
        base = dict(n_prtb=1, n_pmab=2, channels=16, heads=2, window_size=4, k_prime=5)
        base.update(kw)
        return cls(**base)


# -- weights -------------------------------------------------------------------


def _pfm_spec(prefix: str, c: int, k: int):
    return [(f"{prefix}.res1.w", (1, 1, c, c), "w"), (f"{prefix}.res1.b", (c,), "zero"),
            (f"{prefix}.res2.w", (1, 1, c, c), "w"), (f"{prefix}.res2.b", (c,), "zero"),
            (f"{prefix}.out.w", (1, 1, c, c * k * k), "w"), (f"{prefix}.out.b", (c * k * k,), "zero")]


def _attn_spec(prefix: str, ch: int, w: int, heads: int, varied: bool, c_psf: int):
    spec = [(f"{prefix}.qkv.w", (ch, 3 * ch), "w"), (f"{prefix}.qkv.b", (3 * ch,), "zero"),
            (f"{prefix}.proj.w", (ch, ch), "w"), (f"{prefix}.proj.b", (ch,), "zero"),
            (f"{prefix}.rpb", ((2 * w - 1) ** 2, heads), "w")]
    if varied:
        spec += [(f"{prefix}.wintrans.w", (c_psf, 4 * heads), "w"), (f"{prefix}.wintrans.b", (4 * heads,), "zero")]
    return spec


def weight_spec(cfg: PartConfig) -> list:
    """Ordered (name, shape, init) entries for every parameter."""
    c, k = cfg.channels, cfg.pfm_kernel
    ch, hid = c // 2, c * cfg.ffn_ratio
    r = cfg.upscale
    spec = [("conv_first.w", (3, 3, cfg.in_channels, c), "w"), ("conv_first.b", (c,), "zero"),
            ("e_psf.w", (3, 3, cfg.psf_channels, c), "w"), ("e_psf.b", (c,), "zero")]
    spec += _pfm_spec("pfm_begin", c, k)
    for i in range(cfg.n_prtb):
        for j in range(cfg.n_pmab):
            p = f"prtb{i}.pmab{j}"
            spec += [(f"{p}.norm1.g", (c,), "one"), (f"{p}.norm1.b", (c,), "zero")]
            spec += _attn_spec(f"{p}.wmsa", ch, cfg.window_size, cfg.heads, False, c)
            spec += _attn_spec(f"{p}.pvsa", ch, cfg.window_size, cfg.heads, True, c)
            spec += _pfm_spec(f"{p}.pfm", c, 1)
            spec += [(f"{p}.norm2.g", (c,), "one"), (f"{p}.norm2.b", (c,), "zero"),
                     (f"{p}.fc1.w", (c, hid), "w"), (f"{p}.fc1.b", (hid,), "zero"),
                     (f"{p}.fc2.w", (hid, c), "w"), (f"{p}.fc2.b", (c,), "zero")]
        spec += [(f"prtb{i}.conv.w", (3, 3, c, c), "w"), (f"prtb{i}.conv.b", (c,), "zero")]
        spec += _pfm_spec(f"prtb{i}.pfm", c, k)
    spec += _pfm_spec("pfm_end", c, k)
    spec += [("conv_after_body.w", (3, 3, c, c), "w"), ("conv_after_body.b", (c,), "zero"),
             ("conv_before_up.w", (3, 3, c, c), "w"), ("conv_before_up.b", (c,), "zero"),
             ("conv_up.w", (3, 3, c, 3 * r * r), "w"), ("conv_up.b", (3 * r * r,), "zero"),
             ("conv_last.w", (3, 3, 3, 3), "w"), ("conv_last.b", (3,), "zero")]
    return spec


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    z = rng.standard_normal(shape)
    bad = np.abs(z) > 2.0
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > 2.0
    return z * std


def init_weights(cfg: PartConfig, seed: int) -> dict:
    """Truncated-normal (std 0.02, +-2 std) weights, zero biases, unit norms.

    Each tensor draws from its own stream keyed by (seed, layer name), and
    values are rounded to float32 so a saved file reloads bit-exactly.
    """
    weights = {}
    for name, shape, kind in weight_spec(cfg):
        if kind == "w":
            rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
            arr = _trunc_normal(rng, shape)
        elif kind == "one":
            arr = np.ones(shape)
        else:
            arr = np.zeros(shape)
        weights[name] = arr.astype(np.float32).astype(np.float64)
    return weights


# -- blocks --------------------------------------------------------------------


def psf_feature_extract(psf_map: np.ndarray, W: dict, prefix: str = "e_psf") -> np.ndarray:
    return L.conv2d(psf_map, W[f"{prefix}.w"], W[f"{prefix}.b"])


def predict_kernel_map(psf_feat: np.ndarray, W: dict, prefix: str) -> np.ndarray:
    """Kernel map at 1/8 resolution: 4x4 average pool, 2x2 max pool, residual 1x1 block."""
    z = L.max_pool(L.avg_pool(psf_feat, 4), 2)
    h = L.relu(L.conv2d(z, W[f"{prefix}.res1.w"], W[f"{prefix}.res1.b"]))
    z = z + L.conv2d(h, W[f"{prefix}.res2.w"], W[f"{prefix}.res2.b"])
    return L.conv2d(z, W[f"{prefix}.out.w"], W[f"{prefix}.out.b"])


def pfm_forward(x_img: np.ndarray, psf_feat: np.ndarray, W: dict, prefix: str, k: int) -> np.ndarray:
    """Filter image features with per-pixel kernels predicted from PSF features."""
    h, w = x_img.shape[:2]
    if psf_feat.shape[:2] != (h, w):
        raise ValueError("PSF features and image features differ in resolution")
    if h % 8 or w % 8:
        raise ValueError(f"PFM needs feature dims divisible by 8, got {h}x{w}")
    kmap = L.upsample_bilinear(predict_kernel_map(psf_feat, W, prefix), 8)
    return L.apply_kernel_map(x_img, kmap, k)


def _window_bias(W: dict, prefix: str, w: int) -> np.ndarray:
    idx = L.relative_position_index(w)
    return W[f"{prefix}.rpb"][idx].transpose(2, 0, 1)[None]


def _qkv(x: np.ndarray, W: dict, prefix: str):
    t = x @ W[f"{prefix}.qkv.w"] + W[f"{prefix}.qkv.b"]
    ch = x.shape[-1]
    return t[..., :ch], t[..., ch:2 * ch], t[..., 2 * ch:]


def wmsa_forward(x: np.ndarray, W: dict, prefix: str, w: int, heads: int, return_attn: bool = False):
    """Window multi-head self-attention with relative position bias."""
    h, wd = x.shape[:2]
    xp = L.pad_to_multiple(x, w)
    q, k, v = _qkv(xp, W, prefix)
    qw, kw, vw = (L.split_heads(L.window_partition(t, w), heads) for t in (q, k, v))
    out, probs = L.attention(qw, kw, vw, _window_bias(W, prefix, w))
    out = L.merge_heads(out) @ W[f"{prefix}.proj.w"] + W[f"{prefix}.proj.b"]
    out = L.window_reverse(out, w, *xp.shape[:2])[:h, :wd]
    return (out, probs) if return_attn else out


def window_transform(psf_feat: np.ndarray, W: dict, prefix: str, w: int, heads: int):
    """Per-window, per-head scale (sy, sx) and offset (oy, ox) in pixels."""
    pooled = L.window_partition(L.pad_to_multiple(psf_feat, w), w).mean(axis=1)
    t = (pooled @ W[f"{prefix}.wintrans.w"] + W[f"{prefix}.wintrans.b"]).reshape(-1, heads, 4)
    scale = 1.0 + t[..., :2]
    offset = t[..., 2:] * w
    return scale, offset


def sample_positions(shape: tuple, w: int, scale: np.ndarray, offset: np.ndarray):
    """Token coordinates of each transformed window: (nW, heads, w*w) for y and x."""
    hp, wp = shape
    rel = np.arange(w) - (w - 1) / 2.0
    ry, rx = np.meshgrid(rel, rel, indexing="ij")
    ry, rx = ry.ravel(), rx.ravel()
    wy, wx = np.meshgrid(np.arange(hp // w), np.arange(wp // w), indexing="ij")
    cy = (wy.ravel() * w + (w - 1) / 2.0)[:, None, None]
    cx = (wx.ravel() * w + (w - 1) / 2.0)[:, None, None]
    ys = cy + offset[..., 0:1] + scale[..., 0:1] * ry
    xs = cx + offset[..., 1:2] + scale[..., 1:2] * rx
    return ys, xs


def sample_tokens(feat: np.ndarray, ys: np.ndarray, xs: np.ndarray, heads: int) -> np.ndarray:
    """Bilinearly sample each head's channels at its window positions -> (nW, heads, N, d)."""
    hp, wp, ch = feat.shape
    d = ch // heads
    per_head = feat.reshape(hp, wp, heads, d)
    out = np.empty(ys.shape + (d,))
    for hd in range(heads):
        out[:, hd] = L.bilinear_gather(per_head[:, :, hd], ys[:, hd], xs[:, hd])
    return out


def pvsa_forward(x: np.ndarray, psf_feat: np.ndarray, W: dict, prefix: str, w: int, heads: int,
                 return_attn: bool = False, scale=None, offset=None):
    """Varied-size window attention: keys/values sampled from PSF-driven windows."""
    h, wd = x.shape[:2]
    if psf_feat.shape[:2] != (h, wd):
        raise ValueError("PSF features and image features differ in resolution")
    xp = L.pad_to_multiple(x, w)
    q, k, v = _qkv(xp, W, prefix)
    if scale is None or offset is None:
        scale, offset = window_transform(psf_feat, W, prefix, w, heads)
    ys, xs = sample_positions(xp.shape[:2], w, scale, offset)
    qw = L.split_heads(L.window_partition(q, w), heads)
    kw = sample_tokens(k, ys, xs, heads)
    vw = sample_tokens(v, ys, xs, heads)
    out, probs = L.attention(qw, kw, vw, _window_bias(W, prefix, w))
    out = L.merge_heads(out) @ W[f"{prefix}.proj.w"] + W[f"{prefix}.proj.b"]
    out = L.window_reverse(out, w, *xp.shape[:2])[:h, :wd]
    return (out, probs) if return_attn else out


def ffn(x: np.ndarray, W: dict, prefix: str, eps: float = 1e-5) -> np.ndarray:
    z = L.layer_norm(x, W[f"{prefix}.norm2.g"], W[f"{prefix}.norm2.b"], eps)
    return L.gelu(z @ W[f"{prefix}.fc1.w"] + W[f"{prefix}.fc1.b"]) @ W[f"{prefix}.fc2.w"] + W[f"{prefix}.fc2.b"]


def pmab_forward(x: np.ndarray, psf_feat: np.ndarray, W: dict, prefix: str, cfg: PartConfig,
                 attn_log: list | None = None) -> np.ndarray:
    """Mix-attention block: split W-MSA / P-VSA halves, parallel 1x1 PFM, FFN."""
    c = x.shape[-1]
    if c % 2:
        raise ValueError("channel count must be even")
    xn = L.layer_norm(x, W[f"{prefix}.norm1.g"], W[f"{prefix}.norm1.b"], cfg.ln_eps)
    a1, p1 = wmsa_forward(xn[..., : c // 2], W, f"{prefix}.wmsa", cfg.window_size, cfg.heads, True)
    a2, p2 = pvsa_forward(xn[..., c // 2:], psf_feat, W, f"{prefix}.pvsa", cfg.window_size, cfg.heads, True)
    if attn_log is not None:
        attn_log += [p1, p2]
    x_attn = np.concatenate([a1, a2], axis=-1)
    x_mix = x_attn + x
    if cfg.alpha:
        x_mix = x_mix + cfg.alpha * pfm_forward(x, psf_feat, W, f"{prefix}.pfm", 1)
    return x_mix + ffn(x_mix, W, prefix, cfg.ln_eps)


def prtb_forward(x, psf_feat, W, prefix, cfg: PartConfig, attn_log=None):
    h = x
    for j in range(cfg.n_pmab):
        h = pmab_forward(h, psf_feat, W, f"{prefix}.pmab{j}", cfg, attn_log)
    h = L.conv2d(h, W[f"{prefix}.conv.w"], W[f"{prefix}.conv.b"])
    return x + pfm_forward(h, psf_feat, W, f"{prefix}.pfm", cfg.pfm_kernel)


def part_forward(img: np.ndarray, psf_map: np.ndarray, cfg: PartConfig, W: dict,
                 trace: dict | None = None) -> np.ndarray:
    """Recover an image from an aberrated input and its aligned PSF map.

    ``img`` is (H, W, 3) in [0, 1]; ``psf_map`` must already be at the
    representation resolution (H/4 for AC, H for SR&AC).
    """
    if cfg.mode == "AC":
        x = L.pixel_unshuffle(img, cfg.unshuffle)
    else:
        x = img
    if psf_map.shape[:2] != x.shape[:2]:
        raise ValueError(f"PSF map {psf_map.shape[:2]} does not match the representation size {x.shape[:2]}")
    if psf_map.shape[2] != cfg.psf_channels:
        raise ValueError(f"PSF map has {psf_map.shape[2]} channels, expected {cfg.psf_channels}")
    if x.shape[0] % 8 or x.shape[1] % 8:
        raise ValueError(f"representation size {x.shape[:2]} must be divisible by 8")
    attn_log = trace.setdefault("attention", []) if trace is not None else None
    if trace is not None:
        trace["representation_shape"] = x.shape[:2]

    feat = L.conv2d(np.concatenate([x, psf_map], axis=-1), W["conv_first.w"], W["conv_first.b"])
    psf_feat = psf_feature_extract(psf_map, W)
    h = pfm_forward(feat, psf_feat, W, "pfm_begin", cfg.pfm_kernel)
    for i in range(cfg.n_prtb):
        h = prtb_forward(h, psf_feat, W, f"prtb{i}", cfg, attn_log)
    h = pfm_forward(h, psf_feat, W, "pfm_end", cfg.pfm_kernel)
    h = L.conv2d(h, W["conv_after_body.w"], W["conv_after_body.b"]) + feat

    h = L.leaky_relu(L.conv2d(h, W["conv_before_up.w"], W["conv_before_up.b"]))
    h = L.pixel_shuffle(L.conv2d(h, W["conv_up.w"], W["conv_up.b"]), cfg.upscale)
    out = L.conv2d(h, W["conv_last.w"], W["conv_last.b"])
    return np.clip(out, 0.0, 1.0)
