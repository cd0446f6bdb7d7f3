"""MBConv backbone + ConvLSTM classifier over rasterized skeleton frames.

One frame at a time: stem conv -> seven (by default) mobile inverted
bottleneck stages with squeeze-excitation -> spatial feature map. Over
time: a single ConvLSTM layer scans the per-frame maps; the final
hidden state is pooled, projected to class logits and softmaxed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np

from skelwatch import tensor as T
from skelwatch.tensor import Tensor

STEM_STRIDE = 2
STEM_KERNEL = 3
GATE_KERNEL = 3  # ConvLSTM gate convolutions are 3x3, "same" padded

CHECKPOINT_MAGIC = b"ENCL1"


class ConfigError(ValueError):
    """Model configuration violates a structural constraint."""


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class MbConvSpec:
    """Shape contract for one mobile inverted bottleneck stage."""

    in_channels: int
    out_channels: int
    expansion_ratio: int = 6
    kernel_size: int = 3
    stride: int = 1
    se_reduction: int = 4
    has_residual: bool = None  # type: ignore[assignment]  # None -> derived

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be positive")
        if self.expansion_ratio < 1:
            raise ConfigError("expansion_ratio must be a positive int")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.stride not in (1, 2):
            raise ConfigError(f"stride must be 1 or 2, got {self.stride}")
        if self.has_residual is None:
            object.__setattr__(
                self, "has_residual", self.stride == 1 and self.in_channels == self.out_channels
            )
        elif self.has_residual and (self.stride != 1 or self.in_channels != self.out_channels):
            raise ConfigError("residual requires stride 1 and in_channels == out_channels")
        if self.expanded_channels % self.se_reduction != 0:
            raise ConfigError(
                f"se_reduction {self.se_reduction} must divide expanded channels {self.expanded_channels}"
            )

    @property
    def expanded_channels(self) -> int:
        return self.in_channels * self.expansion_ratio

    @property
    def squeezed_channels(self) -> int:
        return self.expanded_channels // self.se_reduction


def _default_stages() -> tuple[MbConvSpec, ...]:
    # B0-style seven-stage table at quarter width: kernels [3,3,5,3,5,5,3],
    # expansions [1,6,...], strides [1,2,2,2,1,2,1].
    table = [
        (8, 4, 1, 3, 1),
        (4, 6, 6, 3, 2),
        (6, 10, 6, 5, 2),
        (10, 20, 6, 3, 2),
        (20, 28, 6, 5, 1),
        (28, 48, 6, 5, 2),
        (48, 80, 6, 3, 1),
    ]
    return tuple(
        MbConvSpec(in_channels=i, out_channels=o, expansion_ratio=e, kernel_size=k, stride=s)
        for i, o, e, k, s in table
    )


@dataclass(frozen=True)
class ModelConfig:
    input_grid: int = 64
    stage_specs: tuple[MbConvSpec, ...] = field(default_factory=_default_stages)
    hidden_channels: int = 32
    num_classes: int = 12
    dropout_rate: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "stage_specs", tuple(self.stage_specs))
        if not self.stage_specs:
            raise ConfigError("at least one MBConv stage is required")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0,1), got {self.dropout_rate}")
        if self.hidden_channels < 1:
            raise ConfigError("hidden_channels must be positive")
        for prev, cur in zip(self.stage_specs, self.stage_specs[1:]):
            if prev.out_channels != cur.in_channels:
                raise ConfigError(
                    f"stage chaining broken: {prev.out_channels} out vs {cur.in_channels} in"
                )
        if self.input_grid % self.total_stride != 0:
            raise ConfigError(
                f"input_grid {self.input_grid} not divisible by total stride {self.total_stride}"
            )
        if self.feature_side < 1:
            raise ConfigError("feature map collapses below 1x1; reduce strides or grow the grid")

    @property
    def stem_channels(self) -> int:
        return self.stage_specs[0].in_channels

    @property
    def feature_channels(self) -> int:
        return self.stage_specs[-1].out_channels

    @property
    def total_stride(self) -> int:
        n_stride2 = sum(1 for s in self.stage_specs if s.stride == 2)
        return STEM_STRIDE * (2**n_stride2)

    @property
    def feature_side(self) -> int:
        return self.input_grid // self.total_stride


def default_config() -> ModelConfig:
    return ModelConfig()


def compact_config(input_grid: int = 32, num_classes: int = 12, dropout_rate: float = 0.2) -> ModelConfig:
    """Small three-stage variant for desk-scale training experiments."""
    stages = (
        MbConvSpec(in_channels=6, out_channels=8, expansion_ratio=1, kernel_size=3, stride=1, se_reduction=2),
        MbConvSpec(in_channels=8, out_channels=16, expansion_ratio=4, kernel_size=3, stride=2),
        MbConvSpec(in_channels=16, out_channels=24, expansion_ratio=4, kernel_size=3, stride=2),
    )
    return ModelConfig(
        input_grid=input_grid,
        stage_specs=stages,
        hidden_channels=16,
        num_classes=num_classes,
        dropout_rate=dropout_rate,
    )


# ---------------------------------------------------------------------------
# Parameters


@dataclass
class ConvParams:
    kernel: Tensor
    bias: Tensor


@dataclass
class DenseParams:
    weight: Tensor
    bias: Tensor


@dataclass
class SeParams:
    squeeze: DenseParams
    excite: DenseParams


@dataclass
class MbConvParams:
    expand: ConvParams | None
    depthwise: ConvParams
    se: SeParams
    project: ConvParams


@dataclass
class ConvLstmParams:
    """Per-gate kernels and biases for Eqs. (2)-(6) style gate updates."""

    w_x_f: Tensor
    w_x_i: Tensor
    w_x_c: Tensor
    w_x_o: Tensor
    w_h_f: Tensor
    w_h_i: Tensor
    w_h_c: Tensor
    w_h_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor
    hidden_channels: int


@dataclass
class HeadParams:
    fc: DenseParams


@dataclass
class ModelParams:
    stem: ConvParams
    stages: list[MbConvParams]
    convlstm: ConvLstmParams
    head: HeadParams

    def named(self) -> dict[str, Tensor]:
        """Stable name -> tensor mapping (insertion order is definition order)."""
        out: dict[str, Tensor] = {"stem.kernel": self.stem.kernel, "stem.bias": self.stem.bias}
        for i, st in enumerate(self.stages):
            pre = f"stage{i}"
            if st.expand is not None:
                out[f"{pre}.expand.kernel"] = st.expand.kernel
                out[f"{pre}.expand.bias"] = st.expand.bias
            out[f"{pre}.depthwise.kernel"] = st.depthwise.kernel
            out[f"{pre}.depthwise.bias"] = st.depthwise.bias
            out[f"{pre}.se.squeeze.weight"] = st.se.squeeze.weight
            out[f"{pre}.se.squeeze.bias"] = st.se.squeeze.bias
            out[f"{pre}.se.excite.weight"] = st.se.excite.weight
            out[f"{pre}.se.excite.bias"] = st.se.excite.bias
            out[f"{pre}.project.kernel"] = st.project.kernel
            out[f"{pre}.project.bias"] = st.project.bias
        lstm = self.convlstm
        for gate in "fico":
            out[f"convlstm.w_x_{gate}"] = getattr(lstm, f"w_x_{gate}")
        for gate in "fico":
            out[f"convlstm.w_h_{gate}"] = getattr(lstm, f"w_h_{gate}")
        for gate in "fico":
            out[f"convlstm.b_{gate}"] = getattr(lstm, f"b_{gate}")
        out["head.fc.weight"] = self.head.fc.weight
        out["head.fc.bias"] = self.head.fc.bias
        return out

    def load_named(self, mapping: dict[str, Tensor]) -> None:
        """Replace parameter tensors in place from a complete name mapping."""
        current = self.named()
        missing = sorted(set(current) - set(mapping))
        extra = sorted(set(mapping) - set(current))
        if missing or extra:
            raise ConfigError(f"parameter names do not match: missing={missing} extra={extra}")
        for name, new in mapping.items():
            if new.shape != current[name].shape:
                raise ConfigError(
                    f"parameter {name!r} has shape {new.shape}, expected {current[name].shape}"
                )
            self._assign(name, new)

    def _assign(self, name: str, value: Tensor) -> None:
        parts = name.split(".")
        if parts[0] == "stem":
            setattr(self.stem, parts[1], value)
        elif parts[0].startswith("stage"):
            stage = self.stages[int(parts[0][5:])]
            if parts[1] == "se":
                setattr(getattr(stage.se, parts[2]), parts[3], value)
            else:
                setattr(getattr(stage, parts[1]), parts[2], value)
        elif parts[0] == "convlstm":
            setattr(self.convlstm, parts[1], value)
        elif parts[0] == "head":
            setattr(self.head.fc, parts[2], value)
        else:
            raise ConfigError(f"unknown parameter name {name!r}")

    def watch(self, tape: T.GradientTape) -> None:
        tape.watch(*self.named().values())

    def astype(self, dtype) -> None:
        self.load_named({k: v.astype(dtype) for k, v in self.named().items()})


@dataclass(frozen=True)
class ConvLstmState:
    h: Tensor
    c: Tensor

    def __post_init__(self):
        if self.h.shape != self.c.shape:
            raise T.DimensionError(f"H and C shapes differ: {self.h.shape} vs {self.c.shape}")

    @classmethod
    def zeros(cls, hidden_channels: int, side_h: int, side_w: int, dtype=np.float64) -> "ConvLstmState":
        return cls(T.zeros((hidden_channels, side_h, side_w), dtype), T.zeros((hidden_channels, side_h, side_w), dtype))


# ---------------------------------------------------------------------------
# Initialization


def _fan_in_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype, gain: float
) -> Tensor:
    # gain is the std amplification a layer applies to an uncorrelated signal:
    # uniform(-b, b) has variance b^2/3, so var(out) = fan_in * b^2/3 = gain^2.
    bound = gain * np.sqrt(3.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), dtype=dtype)


# There is no normalization layer, so kernel scale alone sets the signal level.
# Near startup swish(x) ~ x/2 and the squeeze-excite gate sits at sigmoid(0) = 1/2,
# each halving small activations; gain 2 on backbone kernels cancels that and keeps
# the per-stage feature scale near unity instead of decaying geometrically.
_BACKBONE_GAIN = 2.0
# Sub-unit gain keeps recurrent-gate and dense pre-activations in the linear range.
_GATE_GAIN = 1.0 / np.sqrt(3.0)


def init_parameters(config: ModelConfig, seed: int, dtype=np.float64) -> ModelParams:
    """Fan-in-scaled uniform kernels, zero biases, forget-gate bias +1."""
    rng = np.random.default_rng(seed)

    def conv(c_out, c_in, k):
        return ConvParams(
            kernel=_fan_in_uniform(rng, (c_out, c_in, k, k), c_in * k * k, dtype, _BACKBONE_GAIN),
            bias=T.zeros(c_out, dtype),
        )

    def dense_p(n_out, n_in):
        return DenseParams(
            weight=_fan_in_uniform(rng, (n_out, n_in), n_in, dtype, _GATE_GAIN),
            bias=T.zeros(n_out, dtype),
        )

    stem = conv(config.stem_channels, 1, STEM_KERNEL)
    stages = []
    for spec in config.stage_specs:
        expand = None
        if spec.expansion_ratio > 1:
            expand = conv(spec.expanded_channels, spec.in_channels, 1)
        depthwise = ConvParams(
            kernel=_fan_in_uniform(
                rng,
                (spec.expanded_channels, 1, spec.kernel_size, spec.kernel_size),
                spec.kernel_size * spec.kernel_size,
                dtype,
                _BACKBONE_GAIN,
            ),
            bias=T.zeros(spec.expanded_channels, dtype),
        )
        se = SeParams(
            squeeze=dense_p(spec.squeezed_channels, spec.expanded_channels),
            excite=dense_p(spec.expanded_channels, spec.squeezed_channels),
        )
        project = conv(spec.out_channels, spec.expanded_channels, 1)
        stages.append(MbConvParams(expand=expand, depthwise=depthwise, se=se, project=project))

    hid, feat = config.hidden_channels, config.feature_channels
    k = GATE_KERNEL

    def gate_kernel(c_in):
        return _fan_in_uniform(rng, (hid, c_in, k, k), c_in * k * k, dtype, _GATE_GAIN)

    lstm = ConvLstmParams(
        w_x_f=gate_kernel(feat),
        w_x_i=gate_kernel(feat),
        w_x_c=gate_kernel(feat),
        w_x_o=gate_kernel(feat),
        w_h_f=gate_kernel(hid),
        w_h_i=gate_kernel(hid),
        w_h_c=gate_kernel(hid),
        w_h_o=gate_kernel(hid),
        b_f=Tensor(np.ones(hid), dtype=dtype),
        b_i=T.zeros(hid, dtype),
        b_c=T.zeros(hid, dtype),
        b_o=T.zeros(hid, dtype),
        hidden_channels=hid,
    )
    head = HeadParams(fc=dense_p(config.num_classes, hid))
    return ModelParams(stem=stem, stages=stages, convlstm=lstm, head=head)


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Expected checkpoint contents for a config (used for strict loading)."""
    return {name: t.shape for name, t in init_parameters(config, seed=0).named().items()}


# ---------------------------------------------------------------------------
# Forward


def se_recalibrate(features: Tensor, squeeze: DenseParams, excite: DenseParams) -> Tensor:
    """Channel gates s = sigmoid(FC2(relu(FC1(GAP)))), applied multiplicatively."""
    pooled = T.global_average_pool(features)
    hidden = T.relu(T.dense(squeeze.weight, pooled, squeeze.bias))
    gates = T.sigmoid(T.dense(excite.weight, hidden, excite.bias))
    return T.scale_channels(features, gates)


def mbconv_forward(x: Tensor, spec: MbConvSpec, params: MbConvParams) -> Tensor:
    if x.shape[-3] != spec.in_channels:
        raise ConfigError(
            f"mbconv input has {x.shape[-3]} channels, spec expects {spec.in_channels}"
        )
    h = x
    if spec.expansion_ratio > 1:
        if params.expand is None:
            raise ConfigError("spec expands but params carry no expansion conv")
        h = T.swish(T.conv2d(h, params.expand.kernel, params.expand.bias, stride=1, padding="same"))
    h = T.swish(
        T.depthwise_conv2d(
            h, params.depthwise.kernel, params.depthwise.bias, stride=spec.stride, padding="same"
        )
    )
    h = se_recalibrate(h, params.se.squeeze, params.se.excite)
    h = T.conv2d(h, params.project.kernel, params.project.bias, stride=1, padding="same")
    if spec.has_residual:
        h = T.add(h, x)
    return h


def backbone_forward(frame: Tensor, config: ModelConfig, params: ModelParams) -> Tensor:
    """Stem + MBConv stages. Accepts [1,G,G] or a batched [N,1,G,G]."""
    g = config.input_grid
    if frame.shape[-3:] != (1, g, g):
        raise T.DimensionError(
            f"backbone expects [1,{g},{g}] frames (optionally batched), got {frame.shape}"
        )
    h = T.swish(T.conv2d(frame, params.stem.kernel, params.stem.bias, stride=STEM_STRIDE, padding="same"))
    for spec, stage_params in zip(config.stage_specs, params.stages):
        h = mbconv_forward(h, spec, stage_params)
    return h


def convlstm_step(x_t: Tensor, state: ConvLstmState, params: ConvLstmParams) -> ConvLstmState:
    """One gate update; all convolutions are "same" padded so H,W persist."""
    if x_t.shape[-2:] != state.h.shape[-2:]:
        raise T.DimensionError(
            f"input spatial {x_t.shape[-2:]} does not match state spatial {state.h.shape[-2:]}"
        )

    def gate(w_x, w_h, b, squash):
        pre = T.add(
            T.conv2d(x_t, w_x, b, stride=1, padding="same"),
            T.conv2d(state.h, w_h, None, stride=1, padding="same"),
        )
        return squash(pre)

    f = gate(params.w_x_f, params.w_h_f, params.b_f, T.sigmoid)
    i = gate(params.w_x_i, params.w_h_i, params.b_i, T.sigmoid)
    c_cand = gate(params.w_x_c, params.w_h_c, params.b_c, T.tanh)
    o = gate(params.w_x_o, params.w_h_o, params.b_o, T.sigmoid)
    c_new = T.add(T.mul(f, state.c), T.mul(i, c_cand))
    h_new = T.mul(o, T.tanh(c_new))
    return ConvLstmState(h_new, c_new)


def sequence_logits(
    frames: Sequence[Tensor],
    config: ModelConfig,
    params: ModelParams,
    dropout_rng: np.random.Generator | None = None,
) -> Tensor:
    """Class logits for a frame sequence (dropout only when an RNG is given)."""
    if len(frames) == 0:
        raise T.ContractError("classify needs at least one frame")
    stacked = T.stack_frames(list(frames))  # [T,1,G,G]
    feats = backbone_forward(stacked, config, params)  # [T,C,h,w]
    side_h, side_w = feats.shape[-2], feats.shape[-1]
    state = ConvLstmState.zeros(config.hidden_channels, side_h, side_w, dtype=feats.dtype)
    for step in range(feats.shape[0]):
        state = convlstm_step(T.take_batch(feats, step), state, params.convlstm)
    pooled = T.global_average_pool(state.h)
    logits = T.dense(params.head.fc.weight, pooled, params.head.fc.bias)
    if dropout_rng is not None and config.dropout_rate > 0.0:
        logits = T.dropout(logits, config.dropout_rate, dropout_rng)
    return logits


def classify_sequence(
    frames: Sequence[Tensor],
    config: ModelConfig,
    params: ModelParams,
    dropout_rng: np.random.Generator | None = None,
) -> Tensor:
    """Posterior over activity classes for one skeleton-frame sequence."""
    return T.softmax(sequence_logits(frames, config, params, dropout_rng=dropout_rng))


@dataclass
class Model:
    """Config + parameters bundle with the conveniences call sites want."""

    config: ModelConfig
    params: ModelParams

    @classmethod
    def init(cls, config: ModelConfig, seed: int, dtype=np.float64) -> "Model":
        return cls(config=config, params=init_parameters(config, seed, dtype=dtype))

    def classify(self, frames: Sequence[Tensor]) -> Tensor:
        return classify_sequence(frames, self.config, self.params)

    def save(self, path) -> None:
        save_checkpoint(path, self.config, self.params)

    @classmethod
    def load(cls, path) -> "Model":
        config, params = load_checkpoint(path)
        return cls(config=config, params=params)


# ---------------------------------------------------------------------------
# Checkpoint container: magic "ENCL1", canonical key/value text header with
# the config, then each named parameter as a tensor snapshot block.


def _config_to_lines(config: ModelConfig) -> str:
    kv: dict[str, str] = {
        "input_grid": str(config.input_grid),
        "hidden_channels": str(config.hidden_channels),
        "num_classes": str(config.num_classes),
        "dropout_rate": repr(config.dropout_rate),
        "num_stages": str(len(config.stage_specs)),
    }
    for i, spec in enumerate(config.stage_specs):
        kv[f"stage{i}.in_channels"] = str(spec.in_channels)
        kv[f"stage{i}.out_channels"] = str(spec.out_channels)
        kv[f"stage{i}.expansion_ratio"] = str(spec.expansion_ratio)
        kv[f"stage{i}.kernel_size"] = str(spec.kernel_size)
        kv[f"stage{i}.stride"] = str(spec.stride)
        kv[f"stage{i}.se_reduction"] = str(spec.se_reduction)
        kv[f"stage{i}.has_residual"] = "true" if spec.has_residual else "false"
    return "".join(f"{k}={kv[k]}\n" for k in sorted(kv))


def _config_from_lines(text: str) -> ModelConfig:
    kv: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"checkpoint header line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        kv[key] = value
    try:
        n = int(kv.pop("num_stages"))
        stages = []
        for i in range(n):
            stages.append(
                MbConvSpec(
                    in_channels=int(kv.pop(f"stage{i}.in_channels")),
                    out_channels=int(kv.pop(f"stage{i}.out_channels")),
                    expansion_ratio=int(kv.pop(f"stage{i}.expansion_ratio")),
                    kernel_size=int(kv.pop(f"stage{i}.kernel_size")),
                    stride=int(kv.pop(f"stage{i}.stride")),
                    se_reduction=int(kv.pop(f"stage{i}.se_reduction")),
                    has_residual=kv.pop(f"stage{i}.has_residual") == "true",
                )
            )
        config = ModelConfig(
            input_grid=int(kv.pop("input_grid")),
            stage_specs=tuple(stages),
            hidden_channels=int(kv.pop("hidden_channels")),
            num_classes=int(kv.pop("num_classes")),
            dropout_rate=float(kv.pop("dropout_rate")),
        )
    except KeyError as exc:
        raise ValueError(f"checkpoint header is missing key {exc.args[0]!r}") from None
    if kv:
        raise ValueError(f"checkpoint header has unknown keys: {sorted(kv)}")
    return config


def save_checkpoint(path, config: ModelConfig, params: ModelParams) -> None:
    named = params.named()
    header = _config_to_lines(config).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(named)))
        for name in sorted(named):
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            T.write_tensor_block(fh, named[name])


def load_checkpoint(path) -> tuple[ModelConfig, ModelParams]:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (header_len,) = struct.unpack("<I", _read_exact(fh, 4))
        config = _config_from_lines(_read_exact(fh, header_len).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors: dict[str, Tensor] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            tensors[name] = T.read_tensor_block(fh)
        if fh.read(1):
            raise ValueError("trailing bytes after checkpoint blocks")

    expected = parameter_shapes(config)
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected))
    if missing or extra:
        raise ValueError(f"checkpoint parameters do not match config: missing={missing} extra={extra}")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise ValueError(
                f"checkpoint tensor {name!r} has shape {tensors[name].shape}, config implies {shape}"
            )
    params = init_parameters(config, seed=0)
    params.load_named(tensors)
    return config, params


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated checkpoint: wanted {n} bytes, got {len(buf)}")
    return buf
