"""Compact CNN with an insertable DCT-domain block, in plain numpy.

The backbone is a stack of blocks ``conv3x3 -> per-channel affine -> ReLU``
with 2x2 max-pooling on the first three blocks.  The DCT block can follow any
block but the last: it transforms each channel with the 2-D orthonormal DCT,
multiplies by a learnable frequency mask, applies a soft (or hard) threshold
with a learnable per-channel level, and transforms back.  A global average
pool, concatenation with six static covariates, a linear layer and a sigmoid
give the probability.

Every layer caches what its backward pass needs; :meth:`Model.loss_and_grad`
runs the forward pass and then walks the layers in reverse, which is all the
reverse-mode machinery this network needs.
"""

import logging
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import formats
from .errors import (
    InvalidCheckpointError,
    InvalidInputError,
    InvalidParameterError,
    NumericError,
    TrainingError,
)
from .spectral import dct_matrix

log = logging.getLogger(__name__)

DEFAULT_CHANNELS = (16, 24, 40, 80, 112, 160, 192)
LOSS_EPS = 1e-7
PROB_EPS = 1e-15


@dataclass(frozen=True)
class ModelConfig:
    num_blocks: int = 7
    dct_depth: int = None
    channels_per_block: tuple = DEFAULT_CHANNELS
    pool_blocks: int = 3
    static_dim: int = 6
    threshold_mode: str = "soft"
    input_shape: tuple = (24, 48)
    in_channels: int = 1
    tau_init: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels_per_block", tuple(int(c) for c in self.channels_per_block))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if len(self.channels_per_block) != self.num_blocks:
            raise InvalidParameterError(
                f"channels_per_block has {len(self.channels_per_block)} entries, "
                f"num_blocks is {self.num_blocks}"
            )
        if self.dct_depth is not None and not 1 <= self.dct_depth < self.num_blocks:
            raise InvalidParameterError(
                f"dct_depth must be in [1, {self.num_blocks - 1}] or None, got {self.dct_depth}"
            )
        if self.threshold_mode not in ("soft", "hard"):
            raise InvalidParameterError(f"threshold_mode must be soft or hard, got {self.threshold_mode!r}")
        if self.tau_init < 0:
            raise InvalidParameterError("tau_init must be >= 0")
        if min(self.input_shape) < 1 or len(self.input_shape) != 2:
            raise InvalidParameterError(f"bad input_shape {self.input_shape}")

    def to_dict(self):
        d = asdict(self)
        d["channels_per_block"] = list(self.channels_per_block)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def spatial_shapes(self):
        """Spatial size after each block (1-based list index 0 = after block 1)."""
        h, w = self.input_shape
        out = []
        for b in range(self.num_blocks):
            if b < self.pool_blocks:
                h, w = _pooled(h), _pooled(w)
            out.append((h, w))
        return out

    def param_layout(self):
        """Ordered ``(name, shape)`` list; the flat vector follows this order."""
        layout = []
        cin = self.in_channels
        shapes = self.spatial_shapes()
        for b, cout in enumerate(self.channels_per_block, start=1):
            layout += [
                (f"block{b}.conv", (cout, cin, 3, 3)),
                (f"block{b}.gamma", (cout,)),
                (f"block{b}.beta", (cout,)),
            ]
            if self.dct_depth == b:
                h, w = shapes[b - 1]
                layout += [("dct.scale", (cout, h, w)), ("dct.tau", (cout,))]
            cin = cout
        layout += [("fc.weight", (cin + self.static_dim,)), ("fc.bias", (1,))]
        return layout

    def param_count(self):
        return int(sum(np.prod(s) for _, s in self.param_layout()))


def _pooled(n):
    return n // 2 if n >= 2 else n


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# --------------------------------------------------------------------------
# Layer kernels: forward returns (output, cache), backward consumes the cache.
# --------------------------------------------------------------------------

def conv3x3_forward(x, w):
    b, c, h, wd = x.shape
    o = w.shape[0]
    if w.shape[1] != c:
        raise InvalidInputError(f"conv expects {w.shape[1]} input channels, got {c}")
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * wd, c * 9)
    out = (cols @ w.reshape(o, c * 9).T).reshape(b, h, wd, o).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, x.shape)


def conv3x3_backward(dout, w, cache):
    cols, (b, c, h, wd) = cache
    o = w.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (d2.T @ cols).reshape(w.shape)
    dcols = (d2 @ w.reshape(o, c * 9)).reshape(b, h, wd, c, 3, 3)
    dxp = np.zeros((b, c, h + 2, wd + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + h, j:j + wd] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw


def maxpool_forward(x):
    b, c, h, w = x.shape
    kh, kw = (2 if h >= 2 else 1), (2 if w >= 2 else 1)
    ho, wo = h // kh, w // kw
    xr = x[:, :, :ho * kh, :wo * kw].reshape(b, c, ho, kh, wo, kw)
    xr = xr.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, kh * kw)
    idx = np.argmax(xr, axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape, kh, kw)


def maxpool_backward(dout, cache):
    idx, (b, c, h, w), kh, kw = cache
    ho, wo = dout.shape[2:]
    d = np.zeros((b, c, ho, wo, kh * kw))
    np.put_along_axis(d, idx[..., None], dout[..., None], axis=-1)
    d = d.reshape(b, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho * kh, wo * kw)
    dx = np.zeros((b, c, h, w))
    dx[:, :, :ho * kh, :wo * kw] = d
    return dx


def dct_block_forward(x, scale, tau, mode="soft"):
    """Per-channel DCT -> frequency scaling -> threshold -> inverse DCT.

    ``x`` has shape (B, C, H, W) or (C, H, W); ``scale`` is (C, H, W) and
    ``tau`` is (C,).
    """
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    h, w = x.shape[2:]
    if scale.shape != x.shape[1:]:
        raise InvalidInputError(f"scale shape {scale.shape} does not match input {x.shape[1:]}")
    ch, cw = dct_matrix(h), dct_matrix(w)
    X = ch @ x @ cw.T
    Y = scale * X
    t = np.asarray(tau, dtype=np.float64)[None, :, None, None]
    keep = np.abs(Y) > t
    if mode == "soft":
        Z = np.where(keep, Y - np.sign(Y) * t, 0.0)
    else:
        Z = np.where(keep, Y, 0.0)
    out = ch.T @ Z @ cw
    if not np.all(np.isfinite(out)):
        raise NumericError("dct block")
    cache = (X, Y, keep, scale, mode)
    return (out[0] if squeeze else out), cache


def dct_block_backward(dout, cache):
    X, Y, keep, scale, mode = cache
    h, w = X.shape[2:]
    ch, cw = dct_matrix(h), dct_matrix(w)
    dZ = ch @ dout @ cw.T
    dY = dZ * keep
    if mode == "soft":
        # subgradient 0 at the kink |Y| == tau
        dtau = -np.sum(np.sign(Y) * dY, axis=(0, 2, 3))
    else:
        dtau = np.zeros(X.shape[1])
    dscale = np.sum(dY * X, axis=0)
    dx = ch.T @ (dY * scale) @ cw
    return dx, dscale, dtau


def conv_block_forward(x, conv, gamma, beta, pool):
    """3x3 same conv -> per-channel affine -> ReLU -> optional 2x2 max-pool."""
    y, conv_cache = conv3x3_forward(x, conv)
    a = gamma[None, :, None, None] * y + beta[None, :, None, None]
    r = np.maximum(a, 0.0)
    pool_cache = None
    if pool:
        r, pool_cache = maxpool_forward(r)
    return r, (conv_cache, y, a, pool_cache)


def conv_block_backward(dout, conv, gamma, cache):
    conv_cache, y, a, pool_cache = cache
    if pool_cache is not None:
        dout = maxpool_backward(dout, pool_cache)
    da = dout * (a > 0)
    dgamma = np.sum(da * y, axis=(0, 2, 3))
    dbeta = np.sum(da, axis=(0, 2, 3))
    dy = da * gamma[None, :, None, None]
    dx, dconv = conv3x3_backward(dy, conv, conv_cache)
    return dx, dconv, dgamma, dbeta


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------

class Model:
    """Parameters live in one flat float64 vector; ``self.p`` holds named views."""

    def __init__(self, config, params=None):
        self.config = config
        self.layout = config.param_layout()
        n = config.param_count()
        if params is None:
            self.params = self._init_params()
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (n,):
                raise InvalidCheckpointError(f"config needs {n} parameters, got {params.shape}")
            self.params = params.copy()
        self.p = self._views(self.params)

    def _views(self, flat):
        views, off = {}, 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            views[name] = flat[off:off + size].reshape(shape)
            off += size
        return views

    def offsets(self):
        out, off = {}, 0
        for name, shape in self.layout:
            out[name] = (off, int(np.prod(shape)))
            off += out[name][1]
        return out

    def _init_params(self):
        flat = np.zeros(self.config.param_count())
        views = self._views(flat)
        for name, shape in self.layout:
            # per-name streams keep shared layers identical across dct_depth choices
            rng = np.random.default_rng([self.config.seed, zlib.crc32(name.encode())])
            if name.endswith(".conv"):
                fan_in = shape[1] * 9
                views[name][...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
            elif name.endswith(".gamma") or name == "dct.scale":
                views[name][...] = 1.0
            elif name == "dct.tau":
                views[name][...] = self.config.tau_init
            elif name == "fc.weight":
                views[name][...] = rng.normal(0.0, np.sqrt(1.0 / shape[0]), shape)
        return flat

    # -- forward / backward ------------------------------------------------

    def _forward(self, x, static):
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        static = np.asarray(static, dtype=np.float64).reshape(x.shape[0], -1)
        if x.shape[1:] != (cfg.in_channels, *cfg.input_shape):
            raise InvalidInputError(
                f"expected input (N, {cfg.in_channels}, {cfg.input_shape[0]}, {cfg.input_shape[1]}), got {x.shape}"
            )
        if static.shape[1] != cfg.static_dim:
            raise InvalidInputError(f"expected {cfg.static_dim} static values, got {static.shape[1]}")
        caches = []
        h = x
        for b in range(1, cfg.num_blocks + 1):
            h, c = conv_block_forward(
                h, self.p[f"block{b}.conv"], self.p[f"block{b}.gamma"], self.p[f"block{b}.beta"],
                pool=b <= cfg.pool_blocks,
            )
            caches.append(("block", b, c))
            if cfg.dct_depth == b:
                h, c = dct_block_forward(h, self.p["dct.scale"], self.p["dct.tau"], cfg.threshold_mode)
                caches.append(("dct", b, c))
            if not np.all(np.isfinite(h)):
                raise NumericError(f"block{b}")
        gap = h.mean(axis=(2, 3))
        z = np.concatenate([gap, static], axis=1)
        logit = z @ self.p["fc.weight"] + self.p["fc.bias"][0]
        prob = _sigmoid(logit)
        return prob, (caches, h.shape, z, logit)

    def forward(self, x, static):
        """Probabilities for a batch (or a single (C, H, W) image)."""
        prob, _ = self._forward(x, static)
        return np.clip(prob, PROB_EPS, 1.0 - PROB_EPS)

    def loss_and_grad(self, x, static, labels, weights=None):
        """Class-weighted binary cross-entropy and its gradient w.r.t. ``self.params``."""
        prob, (caches, hshape, z, logit) = self._forward(x, static)
        y = np.asarray(labels, dtype=np.float64)
        n = y.size
        wts = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        pc = np.clip(prob, LOSS_EPS, 1.0 - LOSS_EPS)
        loss = float(np.sum(wts * -(y * np.log(pc) + (1 - y) * np.log(1 - pc))) / n)
        inside = (prob > LOSS_EPS) & (prob < 1.0 - LOSS_EPS)
        dlogit = wts * (prob - y) * inside / n

        grad = np.zeros_like(self.params)
        g = self._views(grad)
        g["fc.weight"][...] = z.T @ dlogit
        g["fc.bias"][0] = dlogit.sum()
        dz = dlogit[:, None] * self.p["fc.weight"][None, :]
        c_last = hshape[1]
        dh = np.broadcast_to(
            (dz[:, :c_last] / (hshape[2] * hshape[3]))[:, :, None, None], hshape
        ).copy()
        for kind, b, c in reversed(caches):
            if kind == "dct":
                dh, g["dct.scale"][...], g["dct.tau"][...] = dct_block_backward(dh, c)
            else:
                dh, dconv, dgamma, dbeta = conv_block_backward(
                    dh, self.p[f"block{b}.conv"], self.p[f"block{b}.gamma"], c
                )
                g[f"block{b}.conv"][...] = dconv
                g[f"block{b}.gamma"][...] = dgamma
                g[f"block{b}.beta"][...] = dbeta
        return loss, grad

    def loss(self, x, static, labels, weights=None):
        prob, _ = self._forward(x, static)
        y = np.asarray(labels, dtype=np.float64)
        wts = np.ones(y.size) if weights is None else np.asarray(weights, dtype=np.float64)
        pc = np.clip(prob, LOSS_EPS, 1.0 - LOSS_EPS)
        return float(np.sum(wts * -(y * np.log(pc) + (1 - y) * np.log(1 - pc))) / y.size)

    def dct_activations(self, x, static):
        """Thresholded DCT-domain coefficients of the DCT block (for inspection)."""
        if self.config.dct_depth is None:
            raise InvalidParameterError("model has no DCT block")
        _, (caches, *_rest) = self._forward(x, static)
        for kind, _, c in caches:
            if kind == "dct":
                X, Y, keep, scale, mode = c
                t = self.p["dct.tau"][None, :, None, None]
                return np.where(keep, Y - np.sign(Y) * t, 0.0) if mode == "soft" else np.where(keep, Y, 0.0)


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

@dataclass
class ModelCheckpoint:
    config: ModelConfig
    params: np.ndarray
    static_mean: np.ndarray
    static_std: np.ndarray
    metadata: dict = field(default_factory=dict)

    def model(self):
        return Model(self.config, self.params)

    def standardize_static(self, static):
        return (np.asarray(static, dtype=np.float64) - self.static_mean) / self.static_std

    def predict(self, images, static):
        """Probabilities for padded images and raw (unstandardized) static covariates."""
        return self.model().forward(images, self.standardize_static(static))

    def save(self, path):
        model = Model(self.config, self.params)
        header = {
            "config": self.config.to_dict(),
            "layers": [[name, list(shape), off] for (name, shape), (off, _) in zip(model.layout, model.offsets().values())],
            "static_mean": self.static_mean.tolist(),
            "static_std": self.static_std.tolist(),
            "metadata": self.metadata,
        }
        formats.write_checkpoint_bytes(path, header, self.params)

    @classmethod
    def load(cls, path):
        header, params = formats.read_checkpoint_bytes(path)
        try:
            config = ModelConfig.from_dict(header["config"])
        except (KeyError, TypeError, InvalidParameterError) as exc:
            raise InvalidCheckpointError(f"{path}: bad config: {exc}") from exc
        if params.size != config.param_count():
            raise InvalidCheckpointError(
                f"{path}: config needs {config.param_count()} parameters, file has {params.size}"
            )
        return cls(
            config=config,
            params=params,
            static_mean=np.asarray(header["static_mean"], dtype=np.float64),
            static_std=np.asarray(header["static_std"], dtype=np.float64),
            metadata=header.get("metadata", {}),
        )


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Hyper:
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 100
    patience: int = 15
    val_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0 or self.batch_size < 1 or self.epochs < 1:
            raise InvalidParameterError("lr, batch_size and epochs must be positive")
        if not 0 <= self.val_fraction < 1:
            raise InvalidParameterError("val_fraction must be in [0, 1)")


class Adam:
    def __init__(self, n, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def class_weights(labels):
    """Per-example weights inversely proportional to class frequency."""
    y = np.asarray(labels, dtype=int)
    n = y.size
    counts = np.bincount(y, minlength=2).astype(np.float64)
    per_class = np.where(counts > 0, n / (2.0 * np.maximum(counts, 1)), 0.0)
    return per_class[y]


def _static_stats(static):
    mean = static.mean(axis=0)
    std = static.std(axis=0)
    return mean, np.where(std < 1e-12, 1.0, std)


def train(images, static, labels, config, hyper=Hyper(), on_step=None):
    """Fit a model with Adam on class-weighted BCE.

    ``images`` is (N, C, H, W) already padded to ``config.input_shape``;
    ``static`` holds raw covariates (N, 6).  When ``hyper.val_fraction``
    leaves at least two validation examples, the last fraction of a seeded
    shuffle is held out and the parameters with the best validation AUC
    (validation loss if it has one class) are returned, stopping after
    ``patience`` epochs without improvement.
    """
    from .evaluation import roc_auc

    images = np.asarray(images, dtype=np.float64)
    static = np.asarray(static, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    n = labels.size
    if n == 0:
        raise InvalidInputError("empty training set")
    if not np.all(np.isin(labels, (0, 1))):
        raise InvalidInputError("labels must be 0 or 1")

    rng = np.random.default_rng([config.seed, 7919])
    order = rng.permutation(n)
    n_val = int(np.floor(hyper.val_fraction * n))
    if n_val < 2 or n - n_val < 1:
        n_val = 0
    tr, va = order[:n - n_val], order[n - n_val:]

    s_mean, s_std = _static_stats(static[tr])
    static_std = (static - s_mean) / s_std
    w_tr = class_weights(labels[tr])

    model = Model(config)
    opt = Adam(model.params.size, hyper.lr, hyper.beta1, hyper.beta2, hyper.adam_eps)
    tau = model.p.get("dct.tau")
    val_has_both = n_val > 0 and len(np.unique(labels[va])) == 2

    best = None
    best_score = -np.inf
    best_epoch = 0
    stale = 0
    step = 0
    epoch_losses = []
    for epoch in range(1, hyper.epochs + 1):
        perm = tr[rng.permutation(tr.size)]
        wmap = dict(zip(tr.tolist(), w_tr.tolist()))
        losses = []
        for start in range(0, perm.size, hyper.batch_size):
            idx = perm[start:start + hyper.batch_size]
            loss, grad = model.loss_and_grad(
                images[idx], static_std[idx], labels[idx], np.array([wmap[i] for i in idx])
            )
            step += 1
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingError(step)
            opt.step(model.params, grad)
            if tau is not None:
                np.maximum(tau, 0.0, out=tau)
            losses.append(loss)
            if on_step is not None:
                on_step(step, loss)
        epoch_losses.append(float(np.mean(losses)))

        if n_val:
            if val_has_both:
                score = roc_auc(model.forward(images[va], static_std[va]), labels[va])
            else:
                score = -model.loss(images[va], static_std[va], labels[va])
            if score > best_score:
                best_score, best, best_epoch, stale = score, model.params.copy(), epoch, 0
            else:
                stale += 1
                if stale >= hyper.patience:
                    break
        log.debug("epoch %d loss %.5f", epoch, epoch_losses[-1])

    params = best if best is not None else model.params.copy()
    metadata = {
        "epochs": len(epoch_losses),
        "best_epoch": best_epoch if best is not None else len(epoch_losses),
        "final_loss": epoch_losses[-1],
        "seed": config.seed,
        "n_train": int(tr.size),
        "n_val": int(n_val),
        "hyper": asdict(hyper),
    }
    if best is not None:
        metadata["val_score"] = float(best_score)
        metadata["val_metric"] = "auc" if val_has_both else "neg_loss"
    return ModelCheckpoint(config, params, s_mean, s_std, metadata)
