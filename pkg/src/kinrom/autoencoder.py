"""From-scratch 1D convolutional autoencoder in 64-bit floats.

The encoder applies four stride-2 convolutions (kernel 10, zero padding 4,
so each layer exactly halves the feature length), each followed by tanh,
then flattens and maps to the latent dimension with one dense layer.  The
decoder mirrors the encoder layer by layer: dense, then tanh before each
transposed convolution, with a linear final layer.  Transposed convolutions
are implemented as the exact adjoints of the forward convolutions, which
makes the analytic gradients checkable against finite differences to
near machine precision.

Inputs are snapshot states reshaped to (velocity channels, spatial length)
and scaled per (velocity, time) group to [-1, 1] using extrema taken over
space and training parameters; the same frozen constants are applied to
unseen data.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from typing import Sequence

import numba
import numpy as np

from .errors import FormatError, InvalidArgument, NumericalFailure, UnsupportedVersion

__all__ = [
    "AeArchitecture",
    "TrainConfig",
    "AutoencoderModel",
    "NormalizationConstants",
    "normalize_slice",
    "train",
    "loss_and_gradients",
    "latent_coordinates",
    "save_model",
    "load_model",
]

_KERNEL = 10
_STRIDE = 2
_PAD = 4
_HALVINGS = 4
_MAGIC = b"KAE1"
_VERSION = 1


# -- convolution primitives -------------------------------------------------
#
# Internally the network runs channels-last: activations are (batch, length,
# channels), so the im2col packing below is a single strided copy and every
# contraction is a plain matmul on contiguous 2D buffers.

@numba.njit(cache=True, nogil=True)
def _im2col(x_cl: np.ndarray, out_len: int) -> np.ndarray:
    """Pack strided windows of a channels-last batch into (B*out_len, C*K)."""
    b, length, c = x_cl.shape
    col = np.empty((b * out_len, c * _KERNEL))
    for bi in range(b):
        for i in range(out_len):
            row = bi * out_len + i
            base = _STRIDE * i - _PAD
            for ci in range(c):
                off = ci * _KERNEL
                for k in range(_KERNEL):
                    j = base + k
                    if 0 <= j < length:
                        col[row, off + k] = x_cl[bi, j, ci]
                    else:
                        col[row, off + k] = 0.0
    return col


@numba.njit(cache=True, nogil=True)
def _col2im(gcol: np.ndarray, b: int, in_len: int, c: int, out_len: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add windows back to (B, out_len, C)."""
    out = np.zeros((b, out_len, c))
    for bi in range(b):
        for i in range(in_len):
            row = bi * in_len + i
            base = _STRIDE * i - _PAD
            for ci in range(c):
                off = ci * _KERNEL
                for k in range(_KERNEL):
                    j = base + k
                    if 0 <= j < out_len:
                        out[bi, j, ci] += gcol[row, off + k]
    return out


def _gather(x: np.ndarray, w: np.ndarray, out_len: int) -> np.ndarray:
    """Strided correlation: y[b,o,i] = sum_{c,k} w[o,c,k] x_pad[b,c,s*i+k].

    Channels-first wrapper over the packed fast path; ``w`` is (O, C, K).
    """
    b = x.shape[0]
    col = _im2col(np.ascontiguousarray(x.transpose(0, 2, 1)), out_len)
    y2 = col @ w.reshape(w.shape[0], -1).T
    return y2.reshape(b, out_len, w.shape[0]).transpose(0, 2, 1)


def _scatter(y: np.ndarray, w: np.ndarray, out_len: int) -> np.ndarray:
    """Adjoint of :func:`_gather`: out[b,c,s*i+k-p] += w[o,c,k] y[b,o,i]."""
    b, o, in_len = y.shape
    c = w.shape[1]
    y2 = np.ascontiguousarray(y.transpose(0, 2, 1)).reshape(b * in_len, o)
    gcol = y2 @ w.reshape(o, -1)
    out = _col2im(gcol, b, in_len, c, out_len)
    return out.transpose(0, 2, 1)


def conv_output_length(length: int) -> int:
    return (length + 2 * _PAD - _KERNEL) // _STRIDE + 1


# -- architecture and model --------------------------------------------------

@dataclass(frozen=True)
class AeArchitecture:
    """Channel ladder of the four encoder convolutions and the latent size."""

    channels: tuple[int, int, int, int]
    latent: int

    def __post_init__(self):
        if len(self.channels) != _HALVINGS or any(c < 1 for c in self.channels):
            raise InvalidArgument("need four positive output-channel counts")
        if self.latent < 1:
            raise InvalidArgument("latent dimension must be at least 1")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-3
    schedule: str = "plateau"  # plateau | step | constant
    plateau_patience: int = 5
    plateau_decay: float = 0.25
    step_size: int = 100
    step_decay: float = 0.8
    step_floor_after: int = 1000
    step_floor_lr: float = 1e-5
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.schedule not in ("plateau", "step", "constant"):
            raise InvalidArgument(f"unknown schedule {self.schedule!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgument("epochs and batch_size must be positive")

    def lr_for_epoch(self, epoch: int) -> float | None:
        """Learning rate for stateless schedules; None for plateau."""
        if self.schedule == "constant":
            return self.learning_rate
        if self.schedule == "step":
            if epoch >= self.step_floor_after:
                return self.step_floor_lr
            return self.learning_rate * self.step_decay ** (epoch // self.step_size)
        return None


@dataclass(frozen=True)
class AutoencoderModel:
    """Weights of one trained (or freshly initialized) autoencoder.

    ``params`` holds, in declaration order: the four encoder conv (w, b)
    pairs, the encoder dense (w, b), the decoder dense (w, b), and the four
    decoder transposed-conv (w, b) pairs.  Conv weights are (out, in, K);
    transposed-conv weights are (in, out, K).
    """

    n_channels: int
    n_length: int
    arch: AeArchitecture
    params: tuple[np.ndarray, ...]
    seed: int = 0
    training_record: dict = field(default_factory=dict)

    def __post_init__(self):
        frozen = []
        for p in self.params:
            p = np.ascontiguousarray(p, dtype=np.float64)
            p.setflags(write=False)
            frozen.append(p)
        object.__setattr__(self, "params", tuple(frozen))

    @property
    def bottleneck_length(self) -> int:
        return self.n_length // (2**_HALVINGS)

    @classmethod
    def initialize(
        cls, n_channels: int, n_length: int, arch: AeArchitecture, seed: int = 0
    ) -> "AutoencoderModel":
        if n_length % (2**_HALVINGS) != 0 or n_length < 2**_HALVINGS:
            raise InvalidArgument(
                f"feature length {n_length} must be divisible by {2 ** _HALVINGS}"
            )
        rng = np.random.default_rng(seed)
        params: list[np.ndarray] = []

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        chans = (n_channels, *arch.channels)
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            params.append(uniform((c_out, c_in, _KERNEL), c_in * _KERNEL))
            params.append(np.zeros(c_out))
        flat = arch.channels[-1] * (n_length // 2**_HALVINGS)
        params.append(uniform((arch.latent, flat), flat))
        params.append(np.zeros(arch.latent))
        params.append(uniform((flat, arch.latent), arch.latent))
        params.append(np.zeros(flat))
        rev = (*arch.channels[::-1], n_channels)
        for c_in, c_out in zip(rev[:-1], rev[1:]):
            params.append(uniform((c_in, c_out, _KERNEL), c_in * _KERNEL))
            params.append(np.zeros(c_out))
        return cls(n_channels, n_length, arch, tuple(params), seed)

    # Forward passes.  ``_forward`` keeps intermediate activations so the
    # exact gradient can be assembled in reverse order.

    def _as_batch(self, samples: np.ndarray) -> tuple[np.ndarray, bool]:
        arr = np.asarray(samples, dtype=np.float64)
        single = arr.ndim == 2
        batch = arr[None] if single else arr
        if batch.ndim != 3 or batch.shape[1:] != (self.n_channels, self.n_length):
            raise InvalidArgument(
                f"expected samples of shape ({self.n_channels}, {self.n_length})"
            )
        return batch, single

    def _forward(self, x: np.ndarray, keep: bool):
        """Forward pass on channels-first input (batch, C, L)."""
        h = np.ascontiguousarray(x.transpose(0, 2, 1))
        z, y_cl, cache = self._forward_cl(h, keep)
        return z, np.ascontiguousarray(y_cl.transpose(0, 2, 1)), cache

    def _forward_cl(self, h: np.ndarray, keep: bool):
        """Channels-last forward pass; returns latents, the channels-last
        reconstruction, and (optionally) the activations for backprop.

        The dense layers act on the length-major flattening of the final
        (batch, length, channels) conv activation.
        """
        cache = {"enc_col": [], "enc_tanh": [], "dec_tanh": []} if keep else None
        b = h.shape[0]
        length = self.n_length
        w_i = 0
        p = self.params
        for _ in range(_HALVINGS):
            length //= 2
            w = p[w_i]
            col = _im2col(h, length)
            if keep:
                cache["enc_col"].append(col)
            y2 = col @ w.reshape(w.shape[0], -1).T + p[w_i + 1]
            h = np.tanh(y2.reshape(b, length, w.shape[0]))
            if keep:
                cache["enc_tanh"].append(h)
            w_i += 2
        flat = h.reshape(b, -1)
        if keep:
            cache["enc_flat"] = flat
        z = flat @ p[w_i].T + p[w_i + 1]
        w_i += 2

        y = z @ p[w_i].T + p[w_i + 1]
        w_i += 2
        h = y.reshape(b, self.bottleneck_length, self.arch.channels[-1])
        for i in range(_HALVINGS):
            t = np.tanh(h)
            if keep:
                cache["dec_tanh"].append(t)
            wt = p[w_i]
            c_in, c_out = wt.shape[0], wt.shape[1]
            li = t.shape[1]
            gcol = t.reshape(b * li, c_in) @ wt.reshape(c_in, -1)
            h = _col2im(gcol, b, li, c_out, 2 * li) + p[w_i + 1]
            w_i += 2
        return z, h, cache

    def encode(self, samples: np.ndarray) -> np.ndarray:
        """Latent representation; accepts one sample (C, L) or a batch.

        Batches are evaluated one sample at a time through the canonical
        single-sample path, so batched and individual encodings are
        bit-identical regardless of batch size.
        """
        batch, single = self._as_batch(samples)
        out = np.empty((batch.shape[0], self.arch.latent))
        for i in range(batch.shape[0]):
            z, _, _ = self._forward(batch[i : i + 1], keep=False)
            out[i] = z[0]
        return out[0] if single else out

    def _decode_one(self, z: np.ndarray) -> np.ndarray:
        p = self.params
        w_i = 2 * _HALVINGS + 2
        y = z @ p[w_i].T + p[w_i + 1]
        h = y.reshape(1, self.bottleneck_length, self.arch.channels[-1])
        w_i += 2
        for _ in range(_HALVINGS):
            t = np.tanh(h)
            wt = p[w_i]
            li = t.shape[1]
            gcol = t.reshape(li, wt.shape[0]) @ wt.reshape(wt.shape[0], -1)
            h = _col2im(gcol, 1, li, wt.shape[1], 2 * li) + p[w_i + 1]
            w_i += 2
        return np.ascontiguousarray(h[0].T)

    def decode(self, latents: np.ndarray) -> np.ndarray:
        """Reconstruction from latent coordinates; mirrors :meth:`encode`."""
        z = np.asarray(latents, dtype=np.float64)
        single = z.ndim == 1
        if single:
            z = z[None]
        if z.ndim != 2 or z.shape[1] != self.arch.latent:
            raise InvalidArgument(f"latent dimension must be {self.arch.latent}")
        out = np.empty((z.shape[0], self.n_channels, self.n_length))
        for i in range(z.shape[0]):
            out[i] = self._decode_one(z[i : i + 1])
        return out[0] if single else out

    def reconstruct(self, samples: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(samples))


def loss_and_gradients(model: AutoencoderModel, batch: np.ndarray):
    """Mean-squared reconstruction loss over the batch and exact gradients.

    The loss is (1/B) sum_b ||x_b - y_b||^2; gradients are returned in the
    same order as ``model.params``.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 3:
        raise InvalidArgument("batch must be 3D (samples, channels, length)")
    return _loss_and_grads_cl(model, np.ascontiguousarray(x.transpose(0, 2, 1)))


def _loss_and_grads_cl(model: AutoencoderModel, x_cl: np.ndarray):
    """Loss and gradients on a channels-last batch (the training hot path)."""
    b = x_cl.shape[0]
    p = model.params
    z, y_cl, cache = model._forward_cl(x_cl, keep=True)
    diff = y_cl - x_cl
    loss = float(np.sum(diff * diff) / b)

    grads = [np.zeros_like(arr) for arr in p]
    gy = (2.0 / b) * diff

    # Decoder transposed convolutions, in reverse.
    w_i = len(p) - 2
    for i in range(_HALVINGS - 1, -1, -1):
        t = cache["dec_tanh"][i]
        wt = p[w_i]
        c_in = wt.shape[0]
        li = t.shape[1]
        grads[w_i + 1][:] = gy.sum(axis=(0, 1))
        col_gy = _im2col(gy, li)
        x2 = t.reshape(b * li, c_in)
        grads[w_i][:] = (x2.T @ col_gy).reshape(wt.shape)
        gt = (col_gy @ wt.reshape(c_in, -1).T).reshape(b, li, c_in)
        gy = gt * (1.0 - t * t)
        w_i -= 2

    # Decoder dense.
    flat_g = gy.reshape(b, -1)
    grads[w_i][:] = flat_g.T @ z
    grads[w_i + 1][:] = flat_g.sum(axis=0)
    gz = flat_g @ p[w_i]
    w_i -= 2

    # Encoder dense.
    enc_flat = cache["enc_flat"]
    grads[w_i][:] = gz.T @ enc_flat
    grads[w_i + 1][:] = gz.sum(axis=0)
    gh = (gz @ p[w_i]).reshape(cache["enc_tanh"][-1].shape)
    w_i -= 2

    # Encoder convolutions, in reverse, reusing the packed forward windows.
    for i in range(_HALVINGS - 1, -1, -1):
        t = cache["enc_tanh"][i]
        gh = gh * (1.0 - t * t)
        w = p[w_i]
        lo = t.shape[1]
        gy2 = gh.reshape(b * lo, w.shape[0])
        grads[w_i][:] = (gy2.T @ cache["enc_col"][i]).reshape(w.shape)
        grads[w_i + 1][:] = gh.sum(axis=(0, 1))
        if i > 0:
            c_in = w.shape[1]
            gh = _col2im(gy2 @ w.reshape(w.shape[0], -1), b, lo, c_in, 2 * lo)
        w_i -= 2

    return loss, grads


def train(
    model: AutoencoderModel, samples: np.ndarray, cfg: TrainConfig
) -> tuple[AutoencoderModel, list[float]]:
    """Adam training on normalized samples; returns a new model and the
    per-epoch loss history."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (model.n_channels, model.n_length):
        raise InvalidArgument("samples must match the model input shape")
    n = x.shape[0]
    rng = np.random.default_rng(cfg.seed)
    x_cl = np.ascontiguousarray(x.transpose(0, 2, 1))

    work = replace(model, params=tuple(p.copy() for p in model.params))
    params = [p.copy() for p in model.params]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]

    history: list[float] = []
    lr = cfg.learning_rate
    best = np.inf
    stall = 0
    t = 0
    for epoch in range(cfg.epochs):
        fixed = cfg.lr_for_epoch(epoch)
        if fixed is not None:
            lr = fixed
        order = rng.permutation(n)
        total_sq = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch = x_cl[idx]
            work = replace(work, params=tuple(params))
            loss, grads = _loss_and_grads_cl(work, batch)
            total_sq += loss * idx.size
            t += 1
            bc1 = 1.0 - cfg.beta1**t
            bc2 = 1.0 - cfg.beta2**t
            for i, g in enumerate(grads):
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * params[i]
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (g * g)
                step = lr * (m[i] / bc1) / (np.sqrt(v[i] / bc2) + cfg.eps)
                params[i] = params[i] - step
        epoch_loss = total_sq / n
        if not np.isfinite(epoch_loss):
            raise NumericalFailure(
                f"training loss became non-finite at epoch {epoch}", iteration=epoch
            )
        history.append(epoch_loss)
        if cfg.schedule == "plateau":
            if epoch_loss < best:
                best = epoch_loss
                stall = 0
            else:
                stall += 1
                if stall >= cfg.plateau_patience:
                    lr *= cfg.plateau_decay
                    stall = 0

    record = {
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "schedule": cfg.schedule,
        "learning_rate": cfg.learning_rate,
        "final_learning_rate": lr,
        "weight_decay": cfg.weight_decay,
        "seed": cfg.seed,
        "final_loss": history[-1],
    }
    return (
        replace(model, params=tuple(params), training_record=record),
        history,
    )


# -- normalization ------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationConstants:
    """Per (velocity, time) extrema used for the [-1, 1] scaling.

    Computed from training data only and stored alongside the model; the
    identical transformation is applied to unseen inputs.
    """

    w_min: np.ndarray  # (n_v, n_times)
    w_max: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        for name in ("w_min", "w_max", "times"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.w_min.shape != self.w_max.shape:
            raise InvalidArgument("extrema arrays must have matching shapes")

    def time_index(self, t: float) -> int:
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=1e-12, atol=1e-12))
        if hits.size != 1:
            raise InvalidArgument(f"time {t} is not one of the stored sample times")
        return int(hits[0])

    def normalize(self, state: np.ndarray, time_index: int) -> np.ndarray:
        """Map one (n_v, n_x) state into [-1, 1] with the stored extrema."""
        lo = self.w_min[:, time_index][:, None]
        hi = self.w_max[:, time_index][:, None]
        span = hi - lo
        out = np.zeros_like(state)
        ok = (span > 0.0)[:, 0]
        out[ok] = 2.0 * (state[ok] - lo[ok]) / span[ok] - 1.0
        return out

    def denormalize(self, scaled: np.ndarray, time_index: int) -> np.ndarray:
        lo = self.w_min[:, time_index][:, None]
        hi = self.w_max[:, time_index][:, None]
        span = hi - lo
        out = np.empty_like(scaled)
        ok = (span > 0.0)[:, 0]
        out[ok] = (scaled[ok] + 1.0) / 2.0 * span[ok] + lo[ok]
        out[~ok] = lo[~ok]
        return out


def normalize_slice(
    raw_columns: np.ndarray,
    times: Sequence[float],
    n_velocities: int,
    n_space: int,
) -> tuple[np.ndarray, NormalizationConstants]:
    """Scale raw snapshot columns to [-1, 1] per (velocity, time) group.

    ``raw_columns`` is (n_h, n_t * n_p) in parameter-major, time-minor
    column order with velocity-major rows.  Extrema are taken over space
    and parameters, one pair per velocity/time combination.  Returns the
    normalized samples (one per column, shape (n_v, n_x)) in column order.
    """
    raw = np.asarray(raw_columns, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    n_t = times.size
    if raw.ndim != 2 or raw.shape[0] != n_velocities * n_space or n_t == 0:
        raise InvalidArgument("raw column block does not match the stated layout")
    if raw.shape[1] % n_t:
        raise InvalidArgument("column count is not a multiple of the time count")
    n_p = raw.shape[1] // n_t

    tensor = raw.reshape(n_velocities, n_space, n_p, n_t)
    w_min = tensor.min(axis=(1, 2))
    w_max = tensor.max(axis=(1, 2))
    consts = NormalizationConstants(w_min, w_max, times)

    span = (w_max - w_min)[:, None, None, :]
    lo = w_min[:, None, None, :]
    scaled = np.zeros_like(tensor)
    ok = span > 0.0
    scaled = np.where(ok, 2.0 * (tensor - lo) / np.where(ok, span, 1.0) - 1.0, 0.0)
    # Column c = p * n_t + i  ->  sample index c, shape (n_v, n_x).
    samples = scaled.transpose(2, 3, 0, 1).reshape(n_p * n_t, n_velocities, n_space)
    return np.ascontiguousarray(samples), consts


def latent_coordinates(model: AutoencoderModel, samples: np.ndarray) -> np.ndarray:
    """Encode normalized samples; returns (latent, n_samples) column-aligned
    with the snapshot ordering they came from."""
    z = model.encode(np.asarray(samples, dtype=np.float64))
    return np.ascontiguousarray(z.T)


# -- persistence --------------------------------------------------------------

def save_model(path, model: AutoencoderModel, constants: NormalizationConstants) -> None:
    desc = {
        "n_channels": model.n_channels,
        "n_length": model.n_length,
        "channels": list(model.arch.channels),
        "latent": model.arch.latent,
        "seed": model.seed,
        "training_record": model.training_record,
        "param_shapes": [list(p.shape) for p in model.params],
        "norm_times": constants.times.tolist(),
        "norm_shape": list(constants.w_min.shape),
    }
    blob = json.dumps(desc).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in model.params:
            fh.write(p.astype("<f8").tobytes())
        fh.write(constants.w_min.astype("<f8").tobytes())
        fh.write(constants.w_max.astype("<f8").tobytes())


def load_model(path) -> tuple[AutoencoderModel, NormalizationConstants]:
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[:4] != _MAGIC:
        raise FormatError(f"bad magic {payload[:4]!r}, expected {_MAGIC!r}", offset=0)
    (version,) = struct.unpack_from("<I", payload, 4)
    if version != _VERSION:
        raise UnsupportedVersion(f"model format version {version} not supported", offset=4)
    (desc_len,) = struct.unpack_from("<Q", payload, 8)
    off = 16
    desc = json.loads(payload[off : off + desc_len].decode("utf-8"))
    off += desc_len
    params = []
    for shape in desc["param_shapes"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=off)
        params.append(arr.reshape(shape).copy())
        off += 8 * count
    norm_shape = tuple(desc["norm_shape"])
    count = int(np.prod(norm_shape))
    w_min = np.frombuffer(payload, dtype="<f8", count=count, offset=off).reshape(norm_shape).copy()
    off += 8 * count
    w_max = np.frombuffer(payload, dtype="<f8", count=count, offset=off).reshape(norm_shape).copy()
    model = AutoencoderModel(
        desc["n_channels"],
        desc["n_length"],
        AeArchitecture(tuple(desc["channels"]), desc["latent"]),
        tuple(params),
        seed=desc["seed"],
        training_record=desc.get("training_record", {}),
    )
    constants = NormalizationConstants(w_min, w_max, np.array(desc["norm_times"]))
    return model, constants
