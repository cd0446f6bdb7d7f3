"""Dense tensors and reverse-mode differentiation.

Values are immutable numpy-backed arrays. Feature maps use row-major
[C, H, W] layout (an optional leading batch axis is accepted by the
spatial ops); convolution kernels are [C_out, C_in, kh, kw]. Every
differentiable op can record onto the thread's active GradientTape;
``backward`` replays the tape in reverse to accumulate gradients.

Convolutions ship two implementations: a plain-loop reference and a
vectorized im2col path. Both compute the same function; the loop path
exists so the fast path can be checked against something legible.
"""

from __future__ import annotations

import struct
import threading
from typing import BinaryIO, Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_DTYPE = np.float64

__all__ = [
    "Tensor",
    "GradientTape",
    "DimensionError",
    "ContractError",
    "backward",
    "record_operation",
    "add",
    "mul",
    "scale",
    "scale_channels",
    "take_batch",
    "elementwise",
    "sigmoid",
    "tanh",
    "relu",
    "swish",
    "softmax",
    "dense",
    "dropout",
    "reduce_sum",
    "reduce_mean",
    "conv2d",
    "depthwise_conv2d",
    "global_average_pool",
    "stack_frames",
    "save_tensor",
    "load_tensor",
    "write_tensor_block",
    "read_tensor_block",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible; the message names the axes."""


class ContractError(ValueError):
    """An operation was invoked outside its stated contract."""


class Tensor:
    """Immutable dense array of finite real values.

    ``data`` is a read-only numpy array; operations return fresh
    tensors and never mutate inputs. NaN or Inf anywhere is an error
    state and is rejected at construction.
    """

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        arr = np.array(data, dtype=self._pick_dtype(data, dtype))
        _check_finite(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @staticmethod
    def _pick_dtype(data, dtype):
        if dtype is not None:
            return np.dtype(dtype)
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            return data.dtype
        return DEFAULT_DTYPE

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # Internal fast path: takes ownership of a freshly computed array.
        out = object.__new__(cls)
        _check_finite(arr)
        arr.setflags(write=False)
        object.__setattr__(out, "data", arr)
        return out

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data)

    def astype(self, dtype) -> "Tensor":
        return Tensor._wrap(self.data.astype(dtype))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    # Small amount of sugar so model code stays readable.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def _check_finite(arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise ContractError("tensor contains NaN or Inf")


def zeros(shape, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor._wrap(np.zeros(shape, dtype=dtype))


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value if dtype is None or value.dtype == np.dtype(dtype) else value.astype(dtype)
    return Tensor(value, dtype=dtype)


# ---------------------------------------------------------------------------
# Gradient tape


_TAPE_STATE = threading.local()


def _active_tape() -> "GradientTape | None":
    return getattr(_TAPE_STATE, "tape", None)


class GradientTape:
    """Records the op graph of a computation for reverse-mode replay.

    One tape per thread at a time; a tape is confined to the thread
    that entered it. Watched tensors are the ones ``backward`` reports
    gradients for; unused watched tensors get exact zeros.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._watched: dict[int, Tensor] = {}

    def __enter__(self) -> "GradientTape":
        if _active_tape() is not None:
            raise ContractError("a GradientTape is already active on this thread")
        _TAPE_STATE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STATE.tape = None
        return False

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            if not isinstance(t, Tensor):
                raise ContractError(f"can only watch Tensors, got {type(t).__name__}")
            self._watched[id(t)] = t

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> None:
        self._records.append((out, inputs, vjp))


def record_operation(out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    """Attach a custom op to the active tape (no-op when none is active).

    ``vjp(grad_out) -> tuple`` must return one cotangent array (or None)
    per entry of ``inputs``.
    """
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, vjp)
    return out


def backward(tape: GradientTape, loss: Tensor) -> dict[Tensor, Tensor]:
    """Replay ``tape`` from scalar ``loss``; returns {watched: gradient}.

    Gradients carry the shape and dtype of their parameter. Watched
    tensors the loss never touched map to exact zeros.
    """
    if loss.shape != ():
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
    for out, inputs, vjp in reversed(tape._records):
        g_out = grads.get(id(out))
        if g_out is None:
            continue
        cotangents = vjp(g_out)
        for inp, g in zip(inputs, cotangents):
            if g is None:
                continue
            prev = grads.get(id(inp))
            grads[id(inp)] = g if prev is None else prev + g
    result: dict[Tensor, Tensor] = {}
    for param in tape._watched.values():
        g = grads.get(id(param))
        if g is None:
            g = np.zeros_like(param.data)
        result[param] = Tensor._wrap(np.ascontiguousarray(g, dtype=param.data.dtype))
    return result


# ---------------------------------------------------------------------------
# Elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: operand shapes differ, {a.shape} vs {b.shape}")
    out = Tensor._wrap(a.data + b.data)
    return record_operation(out, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product of same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"mul: operand shapes differ, {a.shape} vs {b.shape}")
    out = Tensor._wrap(a.data * b.data)
    return record_operation(out, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    out = Tensor._wrap(x.data * factor)
    return record_operation(out, (x,), lambda g: (g * factor,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Piecewise form keeps exp() arguments non-positive: no overflow.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_ELEMENTWISE: dict[str, tuple[Callable, Callable]] = {
    # name -> (forward, derivative given (x, fx))
    "sigmoid": (_sigmoid, lambda x, fx: fx * (1.0 - fx)),
    "tanh": (np.tanh, lambda x, fx: 1.0 - fx * fx),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x, fx: (x > 0).astype(x.dtype)),
    "swish": (
        lambda x: x * _sigmoid(x),
        lambda x, fx: (lambda s: s * (1.0 + x * (1.0 - s)))(_sigmoid(x)),
    ),
}


def elementwise(op: str, x: Tensor) -> Tensor:
    try:
        fwd, deriv = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}, expected one of {sorted(_ELEMENTWISE)}") from None
    fx = fwd(x.data)
    out = Tensor._wrap(fx)
    return record_operation(out, (x,), lambda g: (g * deriv(x.data, fx),))


def sigmoid(x: Tensor) -> Tensor:
    return elementwise("sigmoid", x)


def tanh(x: Tensor) -> Tensor:
    return elementwise("tanh", x)


def relu(x: Tensor) -> Tensor:
    return elementwise("relu", x)


def swish(x: Tensor) -> Tensor:
    return elementwise("swish", x)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis of a 1-D or 2-D tensor.

    Max-subtraction keeps exp() bounded, so extreme logits underflow to
    0.0 rather than producing NaN/Inf.
    """
    if x.ndim not in (1, 2):
        raise DimensionError(f"softmax expects a 1-D or 2-D tensor, got shape {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor._wrap(y)

    def vjp(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner),)

    return record_operation(out, (x,), vjp)


def dense(weight: Tensor, x: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map: weight [K, M] applied to x [M] (or batched [N, M])."""
    if weight.ndim != 2:
        raise DimensionError(f"dense: weight must be 2-D [K, M], got shape {weight.shape}")
    if x.ndim not in (1, 2):
        raise DimensionError(f"dense: input must be 1-D or 2-D, got shape {x.shape}")
    k, m = weight.shape
    if x.shape[-1] != m:
        raise DimensionError(
            f"dense: input feature axis has {x.shape[-1]} entries but weight axis 1 expects {m}"
        )
    if bias is not None and bias.shape != (k,):
        raise DimensionError(f"dense: bias shape {bias.shape} != ({k},)")
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data
    out = Tensor._wrap(y)

    def vjp(g):
        dx = g @ weight.data
        if x.ndim == 1:
            dw = np.outer(g, x.data)
            db = g if bias is not None else None
        else:
            dw = g.T @ x.data
            db = g.sum(axis=0) if bias is not None else None
        if bias is None:
            return (dw, dx)
        return (dw, dx, db)

    inputs = (weight, x) if bias is None else (weight, x, bias)
    return record_operation(out, inputs, vjp)


def scale_channels(x: Tensor, s: Tensor) -> Tensor:
    """Multiply each channel of [C,H,W] (or [N,C,H,W]) by a scalar gate."""
    if x.ndim == 3:
        if s.shape != (x.shape[0],):
            raise DimensionError(
                f"scale_channels: gate shape {s.shape} does not match channel axis 0 of {x.shape}"
            )
        sb = s.data[:, None, None]
    elif x.ndim == 4:
        if s.shape != x.shape[:2]:
            raise DimensionError(
                f"scale_channels: gate shape {s.shape} does not match axes (0,1) of {x.shape}"
            )
        sb = s.data[:, :, None, None]
    else:
        raise DimensionError(f"scale_channels expects a 3-D or 4-D feature map, got {x.shape}")
    out = Tensor._wrap(x.data * sb)

    def vjp(g):
        dx = g * sb
        ds = (g * x.data).sum(axis=(-2, -1))
        return (dx, ds)

    return record_operation(out, (x, s), vjp)


def take_batch(x: Tensor, index: int) -> Tensor:
    """Select entry ``index`` along the leading axis (differentiable)."""
    n = x.shape[0]
    if not 0 <= index < n:
        raise ContractError(f"take_batch: index {index} out of range for leading axis {n}")
    out = Tensor._wrap(x.data[index].copy())

    def vjp(g):
        dx = np.zeros_like(x.data)
        dx[index] = g
        return (dx,)

    return record_operation(out, (x,), vjp)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; training-only, caller owns the mask RNG stream."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    out = Tensor._wrap(x.data * keep)
    return record_operation(out, (x,), lambda g: (g * keep,))


def reduce_sum(x: Tensor) -> Tensor:
    out = Tensor._wrap(np.asarray(x.data.sum()))
    return record_operation(out, (x,), lambda g: (np.broadcast_to(g, x.shape).astype(x.data.dtype, copy=False),))


def reduce_mean(x: Tensor) -> Tensor:
    n = x.size
    out = Tensor._wrap(np.asarray(x.data.mean()))
    return record_operation(out, (x,), lambda g: (np.broadcast_to(g / n, x.shape).astype(x.data.dtype, copy=False),))


def stack_frames(frames: Sequence[Tensor]) -> Tensor:
    """Stack same-shape data tensors along a new leading axis (no grad)."""
    if not frames:
        raise ContractError("stack_frames: empty sequence")
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DimensionError(f"stack_frames: frames disagree on shape: {sorted(shapes)}")
    return Tensor._wrap(np.stack([f.data for f in frames]))


# ---------------------------------------------------------------------------
# Spatial ops


def _pad_amounts(size: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Returns (pad_before, pad_after, out_size) for one spatial axis."""
    if padding == "same":
        out = -(-size // stride)  # ceil
        total = max((out - 1) * stride + k - size, 0)
        before = total // 2
        return before, total - before, out
    if padding == "valid":
        if size < k:
            raise DimensionError(f"conv: spatial extent {size} smaller than kernel {k} with valid padding")
        return 0, 0, (size - k) // stride + 1
    raise ContractError(f"padding must be 'same' or 'valid', got {padding!r}")


def _as_batched(x: Tensor, what: str) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise DimensionError(f"{what}: input must be [C,H,W] or [N,C,H,W], got shape {x.shape}")


def _conv_geometry(xb: np.ndarray, kh: int, kw: int, stride: int, padding: str):
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    _, _, h, w = xb.shape
    pt, pb, ho = _pad_amounts(h, kh, stride, padding)
    pl, pr, wo = _pad_amounts(w, kw, stride, padding)
    xp = np.pad(xb, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    return xp, (pt, pb, pl, pr), (ho, wo)


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # Strided view [N, C, Ho, Wo, kh, kw]; no copy.
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: str = "valid",
    impl: str = "fast",
) -> Tensor:
    """2-D cross-correlation of [C,H,W] (or [N,C,H,W]) with [C_out,C_in,kh,kw]."""
    xb, squeeze = _as_batched(x, "conv2d")
    if kernel.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be 4-D [C_out,C_in,kh,kw], got shape {kernel.shape}")
    c_out, c_in, kh, kw = kernel.shape
    if xb.shape[1] != c_in:
        raise DimensionError(
            f"conv2d: input channel axis has {xb.shape[1]} channels but kernel axis 1 expects {c_in}"
        )
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({c_out},)")

    xp, pads, (ho, wo) = _conv_geometry(xb, kh, kw, stride, padding)
    if impl == "fast":
        win = _windows(xp, kh, kw, stride)
        n = xb.shape[0]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c_in * kh * kw)
        y = cols @ kernel.data.reshape(c_out, -1).T
        y = y.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)
    elif impl == "naive":
        y = _conv2d_naive(xp, kernel.data, stride, ho, wo)
    else:
        raise ContractError(f"impl must be 'fast' or 'naive', got {impl!r}")
    if bias is not None:
        y = y + bias.data[None, :, None, None]
    y = np.ascontiguousarray(y)
    out = Tensor._wrap(y[0] if squeeze else y)

    def vjp(g):
        gb = g[None] if squeeze else g
        win_v = _windows(xp, kh, kw, stride)
        dk = np.einsum("noij,ncijuv->ocuv", gb, win_v, optimize=True)
        # Scatter-add grad back through the padded input, one kernel tap at a time.
        gk = np.tensordot(gb, kernel.data, axes=([1], [0]))  # [N, Ho, Wo, C_in, kh, kw]
        dxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                dxp[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += gk[
                    :, :, :, :, u, v
                ].transpose(0, 3, 1, 2)
        pt, pb, pl, pr = pads
        dx = dxp[:, :, pt : dxp.shape[2] - pb, pl : dxp.shape[3] - pr]
        dx = dx[0] if squeeze else dx
        if bias is None:
            return (np.ascontiguousarray(dx), dk)
        db = gb.sum(axis=(0, 2, 3))
        return (np.ascontiguousarray(dx), dk, db)

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return record_operation(out, inputs, vjp)


def _conv2d_naive(xp: np.ndarray, k: np.ndarray, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c_in, _, _ = xp.shape
    c_out, _, kh, kw = k.shape
    y = np.zeros((n, c_out, ho, wo), dtype=xp.dtype)
    for b in range(n):
        for o in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(c_in):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[b, c, i * stride + u, j * stride + v] * k[o, c, u, v]
                    y[b, o, i, j] = acc
    return y


def depthwise_conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: str = "valid",
    impl: str = "fast",
) -> Tensor:
    """Per-channel convolution with kernel [C, 1, kh, kw]; channels never mix."""
    xb, squeeze = _as_batched(x, "depthwise_conv2d")
    if kernel.ndim != 4 or kernel.shape[1] != 1:
        raise DimensionError(
            f"depthwise_conv2d: kernel must be [C,1,kh,kw], got shape {kernel.shape}"
        )
    c, _, kh, kw = kernel.shape
    if xb.shape[1] != c:
        raise DimensionError(
            f"depthwise_conv2d: input channel axis has {xb.shape[1]} channels but kernel axis 0 expects {c}"
        )
    if bias is not None and bias.shape != (c,):
        raise DimensionError(f"depthwise_conv2d: bias shape {bias.shape} != ({c},)")

    xp, pads, (ho, wo) = _conv_geometry(xb, kh, kw, stride, padding)
    if impl == "fast":
        win = _windows(xp, kh, kw, stride)
        y = np.einsum("ncijuv,cuv->ncij", win, kernel.data[:, 0], optimize=True)
    elif impl == "naive":
        y = _depthwise_naive(xp, kernel.data, stride, ho, wo)
    else:
        raise ContractError(f"impl must be 'fast' or 'naive', got {impl!r}")
    if bias is not None:
        y = y + bias.data[None, :, None, None]
    y = np.ascontiguousarray(y)
    out = Tensor._wrap(y[0] if squeeze else y)

    def vjp(g):
        gb = g[None] if squeeze else g
        win_v = _windows(xp, kh, kw, stride)
        dk = np.einsum("ncij,ncijuv->cuv", gb, win_v, optimize=True)[:, None]
        dxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                dxp[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += (
                    gb * kernel.data[None, :, 0, u, v, None, None]
                )
        pt, pb, pl, pr = pads
        dx = dxp[:, :, pt : dxp.shape[2] - pb, pl : dxp.shape[3] - pr]
        dx = dx[0] if squeeze else dx
        if bias is None:
            return (np.ascontiguousarray(dx), dk)
        return (np.ascontiguousarray(dx), dk, gb.sum(axis=(0, 2, 3)))

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return record_operation(out, inputs, vjp)


def _depthwise_naive(xp: np.ndarray, k: np.ndarray, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c, _, _ = xp.shape
    _, _, kh, kw = k.shape
    y = np.zeros((n, c, ho, wo), dtype=xp.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for u in range(kh):
                        for v in range(kw):
                            acc += xp[b, ch, i * stride + u, j * stride + v] * k[ch, 0, u, v]
                    y[b, ch, i, j] = acc
    return y


def global_average_pool(x: Tensor) -> Tensor:
    """[C,H,W] -> [C] (or [N,C,H,W] -> [N,C]): mean over the spatial axes."""
    if x.ndim not in (3, 4):
        raise DimensionError(f"global_average_pool expects 3-D or 4-D input, got shape {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    out = Tensor._wrap(x.data.mean(axis=(-2, -1)))

    def vjp(g):
        return (np.broadcast_to(g[..., None, None], x.shape) / (h * w),)

    return record_operation(out, (x,), vjp)


# ---------------------------------------------------------------------------
# Snapshot format: magic "MRT1", u32 rank, u64 extents, little-endian f64
# row-major payload. Shared by golden-file tests and model checkpoints.

SNAPSHOT_MAGIC = b"MRT1"


def write_tensor_block(fh: BinaryIO, tensor: Tensor) -> None:
    fh.write(SNAPSHOT_MAGIC)
    fh.write(struct.pack("<I", tensor.ndim))
    fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
    fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def read_tensor_block(fh: BinaryIO) -> Tensor:
    magic = fh.read(4)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad tensor snapshot magic {magic!r}, expected {SNAPSHOT_MAGIC!r}")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4))
    if rank > 32:
        raise ValueError(f"implausible snapshot rank {rank}")
    shape = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank)) if rank else ()
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    payload = _read_exact(fh, 8 * count)
    data = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    return Tensor._wrap(data)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated tensor snapshot: wanted {n} bytes, got {len(buf)}")
    return buf


def save_tensor(tensor: Tensor, path) -> None:
    with open(path, "wb") as fh:
        write_tensor_block(fh, tensor)


def load_tensor(path) -> Tensor:
    with open(path, "rb") as fh:
        t = read_tensor_block(fh)
        if fh.read(1):
            raise ValueError("trailing bytes after tensor snapshot")
    return t
