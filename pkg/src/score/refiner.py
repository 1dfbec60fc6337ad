"""Small differentiable refinement network with hand-written backprop.

A shallow stack of zero-padded 3x3x3 convolutions over the channel
stack [normalized image, K initial-mask channels, boundary prior], ReLU
between hidden layers, K sigmoid outputs.  With the residual switch on,
the pre-sigmoid logit adds alpha * logit(clamped initial mask) with a
learnable scalar alpha starting at 1, so the untrained network is an
identity refiner: thresholding its output reproduces the initial mask.

The initial mask is clamped to [skip_clamp, 1-skip_clamp] (default
0.25) before the logit, keeping the residual logits at +-1.1.  That
preserves the identity start (thresholding at 0.5 still reproduces the
initial mask exactly), keeps the sigmoid away from its saturated tail
where gradients vanish and finite-difference checks lose precision,
and keeps the logit barrier that corrections must overcome learnable
at small learning rates.

Everything is float64 by default and bit-deterministic given a seed;
float32 is available for larger runs.  An optional single down/up level
(unet_lite) adds a half-resolution branch after the first hidden layer.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._kernels import conv3d, conv3d_grad_w
from .errors import CacheError, CheckpointError, FormatError, IoError, NumericError, ShapeError


@dataclass(frozen=True)
class RefinerConfig:
    K: int = 1
    hidden: tuple[int, ...] = (8, 8)
    kernel: int = 3
    skip: bool = True
    skip_clamp: float = 0.25
    unet_lite: bool = False
    dtype: str = "float64"

    def __post_init__(self):
        if self.K < 1 or any(w < 1 for w in self.hidden) or not self.hidden:
            raise ValueError("K and hidden widths must be positive")
        if self.kernel != 3:
            raise ValueError("only 3x3x3 kernels are supported")
        if not 0 < self.skip_clamp < 0.5:
            raise ValueError("skip_clamp must be in (0, 0.5)")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @property
    def in_channels(self) -> int:
        return self.K + 2

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must be in [0, 1)")


@dataclass
class RefinerParams:
    """Named weight tensors plus Adam moments.  version changes on every
    optimizer step so stale forward caches can be detected."""

    cfg: RefinerConfig
    tensors: dict[str, np.ndarray]
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    version: int = 0

    def names(self):
        return sorted(self.tensors)

    def copy(self) -> "RefinerParams":
        return RefinerParams(
            cfg=self.cfg,
            tensors={k: t.copy() for k, t in self.tensors.items()},
            m={k: t.copy() for k, t in self.m.items()},
            v={k: t.copy() for k, t in self.v.items()},
            step=self.step,
            version=self.version,
        )


def _layer_shapes(cfg: RefinerConfig):
    """(name, (out_ch, in_ch)) for every conv layer, in forward order."""
    widths = [cfg.in_channels, *cfg.hidden]
    layers = [(f"conv{i}", (widths[i + 1], widths[i])) for i in range(len(cfg.hidden))]
    if cfg.unet_lite:
        layers.append(("down", (cfg.hidden[0], cfg.hidden[0])))
    layers.append(("out", (cfg.K, cfg.hidden[-1])))
    return layers


def init_params(cfg: RefinerConfig, seed: int = 0) -> RefinerParams:
    """He-style uniform init scaled by fan-in; biases zero; alpha 1."""
    rng = np.random.default_rng(seed)
    dt = cfg.np_dtype
    tensors: dict[str, np.ndarray] = {}
    for name, (n_out, n_in) in _layer_shapes(cfg):
        fan_in = n_in * 27
        bound = np.sqrt(6.0 / fan_in)
        tensors[f"{name}.w"] = rng.uniform(-bound, bound, size=(n_out, n_in, 3, 3, 3)).astype(dt)
        tensors[f"{name}.b"] = np.zeros(n_out, dtype=dt)
    tensors["alpha"] = np.ones((), dtype=dt)
    params = RefinerParams(cfg=cfg, tensors=tensors)
    params.m = {k: np.zeros_like(t) for k, t in tensors.items()}
    params.v = {k: np.zeros_like(t) for k, t in tensors.items()}
    return params


def normalize_intensity(data) -> np.ndarray:
    """Zero mean, unit variance per volume (the network's image input)."""
    d = np.asarray(data, dtype=np.float64)
    std = d.std()
    if std == 0:
        return np.zeros_like(d)
    return (d - d.mean()) / std


def _conv(x, w, b, dt):
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (1, 1)))
    out = np.empty((w.shape[0],) + x.shape[1:], dtype=dt)
    conv3d(xp, w, b, out)
    return out, xp


def _conv_back(xp, w, dout, dt):
    """Gradients of a conv layer: (dx, dw, db).  xp is the padded input."""
    dw = np.empty_like(w)
    db = np.empty(w.shape[0], dtype=dt)
    conv3d_grad_w(xp, dout, dw, db)
    # dx is a full correlation with the flipped, channel-transposed kernel
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4))
    dpad = np.pad(dout, ((0, 0), (1, 1), (1, 1), (1, 1)))
    dx = np.empty((w.shape[1],) + dout.shape[1:], dtype=dt)
    conv3d(dpad, w_flip, np.zeros(w.shape[1], dtype=dt), dx)
    return dx, dw, db


def _avgpool2(x):
    """2x average pooling with zero padding to even dims."""
    c, nx, ny, nz = x.shape
    px, py, pz = nx % 2, ny % 2, nz % 2
    if px or py or pz:
        x = np.pad(x, ((0, 0), (0, px), (0, py), (0, pz)))
    v = x.reshape(c, x.shape[1] // 2, 2, x.shape[2] // 2, 2, x.shape[3] // 2, 2)
    return v.mean(axis=(2, 4, 6))


def _avgpool2_back(dout, orig_shape):
    d = np.repeat(np.repeat(np.repeat(dout, 2, axis=1), 2, axis=2), 2, axis=3) / 8.0
    return d[:, : orig_shape[1], : orig_shape[2], : orig_shape[3]]


def _upsample2(x, target_shape):
    u = np.repeat(np.repeat(np.repeat(x, 2, axis=1), 2, axis=2), 2, axis=3)
    return u[:, : target_shape[1], : target_shape[2], : target_shape[3]]


def _upsample2_back(dout, low_shape):
    c = dout.shape[0]
    px = 2 * low_shape[1] - dout.shape[1]
    py = 2 * low_shape[2] - dout.shape[2]
    pz = 2 * low_shape[3] - dout.shape[3]
    d = np.pad(dout, ((0, 0), (0, px), (0, py), (0, pz)))
    v = d.reshape(c, low_shape[1], 2, low_shape[2], 2, low_shape[3], 2)
    return v.sum(axis=(2, 4, 6))


@dataclass
class ForwardCache:
    version: int
    x_pads: dict[str, np.ndarray]
    relu_masks: dict[str, np.ndarray]
    skip_logit: np.ndarray | None
    y: np.ndarray
    shapes: dict[str, tuple]


def forward(params: RefinerParams, image, init_masks, prior):
    """Per-region probabilities plus the cache needed for backward.

    image: (nx,ny,nz) normalized intensities; init_masks: (K,nx,ny,nz)
    binary; prior: (nx,ny,nz) in [0,1].  Returns (y, cache) with y of
    shape (K,nx,ny,nz), strictly inside (0,1).
    """
    cfg = params.cfg
    dt = cfg.np_dtype
    img = np.asarray(image, dtype=dt)
    masks = np.asarray(init_masks)
    p = np.asarray(prior, dtype=dt)
    if img.ndim != 3:
        raise ShapeError(f"image must be 3D, got {img.shape}")
    if masks.shape != (cfg.K,) + img.shape:
        raise ShapeError(f"init masks must be {(cfg.K,) + img.shape}, got {masks.shape}")
    if p.shape != img.shape:
        raise ShapeError(f"prior must be {img.shape}, got {p.shape}")

    x = np.concatenate([img[None], masks.astype(dt), p[None]], axis=0)
    x_pads: dict[str, np.ndarray] = {}
    relu_masks: dict[str, np.ndarray] = {}
    shapes: dict[str, tuple] = {}

    h = x
    for i in range(len(cfg.hidden)):
        name = f"conv{i}"
        z, xp = _conv(h, params.tensors[f"{name}.w"], params.tensors[f"{name}.b"], dt)
        x_pads[name] = xp
        h = np.maximum(z, 0)
        relu_masks[name] = z > 0
        if i == 0 and cfg.unet_lite:
            shapes["h1"] = h.shape
            low = _avgpool2(h)
            shapes["low"] = low.shape
            zd, xpd = _conv(low, params.tensors["down.w"], params.tensors["down.b"], dt)
            x_pads["down"] = xpd
            hd = np.maximum(zd, 0)
            relu_masks["down"] = zd > 0
            h = h + _upsample2(hd, h.shape)

    logits, xp_out = _conv(h, params.tensors["out.w"], params.tensors["out.b"], dt)
    x_pads["out"] = xp_out

    skip_logit = None
    if cfg.skip:
        c = cfg.skip_clamp
        sc = np.clip(masks.astype(np.float64), c, 1.0 - c)
        skip_logit = np.log(sc / (1.0 - sc)).astype(dt)
        logits = logits + params.tensors["alpha"] * skip_logit

    y = expit(logits.astype(np.float64))
    cache = ForwardCache(
        version=params.version, x_pads=x_pads, relu_masks=relu_masks,
        skip_logit=skip_logit, y=y, shapes=shapes,
    )
    return y, cache


def backward(params: RefinerParams, cache: ForwardCache, dldy) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for every tensor (and alpha)."""
    if cache.version != params.version:
        raise CacheError("forward cache is stale: parameters changed since forward")
    cfg = params.cfg
    dt = cfg.np_dtype
    y = cache.y
    dlogit = (np.asarray(dldy, dtype=np.float64) * y * (1.0 - y)).astype(dt)

    grads: dict[str, np.ndarray] = {}
    if cfg.skip:
        grads["alpha"] = np.asarray(
            np.sum(dlogit.astype(np.float64) * cache.skip_logit.astype(np.float64)), dtype=dt
        )
    else:
        grads["alpha"] = np.zeros((), dtype=dt)

    d, dw, db = _conv_back(cache.x_pads["out"], params.tensors["out.w"], dlogit, dt)
    grads["out.w"], grads["out.b"] = dw, db

    for i in reversed(range(len(cfg.hidden))):
        name = f"conv{i}"
        if i == 0 and cfg.unet_lite:
            # h_final = h1 + upsample(relu(conv_down(avgpool(h1))))
            d_hd = _upsample2_back(d, cache.shapes["low"])
            d_hd = d_hd * cache.relu_masks["down"]
            d_low, dwd, dbd = _conv_back(cache.x_pads["down"], params.tensors["down.w"], d_hd, dt)
            grads["down.w"], grads["down.b"] = dwd, dbd
            d = d + _avgpool2_back(d_low, cache.shapes["h1"])
        d = d * cache.relu_masks[name]
        d, dw, db = _conv_back(cache.x_pads[name], params.tensors[f"{name}.w"], d, dt)
        grads[f"{name}.w"], grads[f"{name}.b"] = dw, db

    return grads


def adam_step(params: RefinerParams, grads: dict[str, np.ndarray],
              cfg: AdamConfig = AdamConfig()) -> RefinerParams:
    """Standard bias-corrected Adam update, in place."""
    for name in params.names():
        g = np.asarray(grads[name], dtype=np.float64)
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
    params.step += 1
    t = params.step
    b1, b2 = cfg.beta1, cfg.beta2
    for name in params.names():
        g = np.asarray(grads[name], dtype=params.tensors[name].dtype)
        m = params.m[name]
        v = params.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        params.tensors[name] -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    params.version += 1
    return params


# --- checkpoint IO ---------------------------------------------------------

CKPT_MAGIC = b"SCKP"
CKPT_VERSION = 1
_DTYPE_CODES = {"<f8": 0, "<f4": 1, "<i8": 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def _blob_bytes(name: str, arr: np.ndarray) -> bytes:
    a = np.asarray(arr)
    if a.ndim and not a.flags.c_contiguous:
        a = np.ascontiguousarray(a)  # note: would promote 0-d to 1-d, hence the guard
    code = _DTYPE_CODES[a.dtype.newbyteorder("<").str]
    nb = name.encode("utf-8")
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<BB", code, a.ndim)
    head += b"".join(struct.pack("<I", s) for s in a.shape)
    return head + a.astype(a.dtype.newbyteorder("<")).tobytes()


def save_checkpoint(params: RefinerParams, path, extra: dict | None = None) -> None:
    """Named-blob container; round-trips bit-exactly."""
    cfg_doc = {
        "refiner": {
            "K": params.cfg.K, "hidden": list(params.cfg.hidden),
            "kernel": params.cfg.kernel, "skip": params.cfg.skip,
            "skip_clamp": params.cfg.skip_clamp, "unet_lite": params.cfg.unet_lite,
            "dtype": params.cfg.dtype,
        },
        "extra": extra or {},
    }
    cfg_json = json.dumps(cfg_doc, sort_keys=True).encode("utf-8")
    blobs = []
    for name in params.names():
        blobs.append(_blob_bytes(f"param.{name}", params.tensors[name]))
        blobs.append(_blob_bytes(f"adam.m.{name}", params.m[name]))
        blobs.append(_blob_bytes(f"adam.v.{name}", params.v[name]))
    blobs.append(_blob_bytes("adam.t", np.asarray(params.step, dtype=np.int64)))
    try:
        with open(path, "wb") as fh:
            fh.write(CKPT_MAGIC)
            fh.write(struct.pack("<HI", CKPT_VERSION, len(cfg_json)))
            fh.write(cfg_json)
            fh.write(struct.pack("<I", len(blobs)))
            for b in blobs:
                fh.write(b)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_checkpoint(path) -> tuple[RefinerParams, dict]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if raw[:4] != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {raw[:4]!r}")
    ver, cfg_len = struct.unpack_from("<HI", raw, 4)
    if ver != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {ver}")
    pos = 10
    cfg_doc = json.loads(raw[pos:pos + cfg_len].decode("utf-8"))
    pos += cfg_len
    (n_blobs,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    blobs: dict[str, np.ndarray] = {}
    for _ in range(n_blobs):
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        code, ndim = struct.unpack_from("<BB", raw, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", raw, pos) if ndim else ()
        pos += 4 * ndim
        dtype = np.dtype(_CODE_DTYPES[code])
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).reshape(shape)
        pos += count * dtype.itemsize
        blobs[name] = arr.copy()
    if pos != len(raw):
        raise FormatError("trailing bytes after the last blob")

    rc = cfg_doc["refiner"]
    cfg = RefinerConfig(
        K=rc["K"], hidden=tuple(rc["hidden"]), kernel=rc["kernel"], skip=rc["skip"],
        skip_clamp=rc["skip_clamp"], unet_lite=rc["unet_lite"], dtype=rc["dtype"],
    )
    tensors = {n[len("param."):]: a for n, a in blobs.items() if n.startswith("param.")}
    expected = {name for name, _ in _layer_shapes(cfg)}
    for name in expected:
        if f"{name}.w" not in tensors:
            raise CheckpointError(f"checkpoint missing tensor {name}.w")
    params = RefinerParams(
        cfg=cfg,
        tensors=tensors,
        m={n[len("adam.m."):]: a for n, a in blobs.items() if n.startswith("adam.m.")},
        v={n[len("adam.v."):]: a for n, a in blobs.items() if n.startswith("adam.v.")},
        step=int(blobs["adam.t"]),
    )
    return params, cfg_doc.get("extra", {})
