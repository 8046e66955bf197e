"""
Lifter model module for PoseLift
Residual fully-connected network mapping normalized 2D joints to normalized 3D joints,
its variant presets, and the JSON checkpoint format
"""

import base64
import binascii
import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import CheckpointError, ConfigError, NumericalError, ShapeError, config_error
from .nncore import (
    BatchNormLayer,
    DropoutLayer,
    Layer,
    LayerMode,
    LinearLayer,
    Param,
    ReLULayer,
    Sequential,
    SwishActivation,
    Tensor,
    as_tensor,
    new_rng,
    unique_params,
)
from .pose_data import NormStats

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ActivationKind(str, Enum):
    RELU = "relu"
    SWISH = "swish"


class Variant(str, Enum):
    ORIGINAL = "original"
    V1 = "v1"
    V2 = "v2"
    V3 = "v3"


# V3 shares V2's architecture and differs only in its training loss
VARIANT_PRESETS: Dict[Variant, Dict[str, Any]] = {
    Variant.ORIGINAL: {"extra_layer": False, "activation": ActivationKind.RELU},
    Variant.V1: {"extra_layer": True, "activation": ActivationKind.RELU},
    Variant.V2: {"extra_layer": True, "activation": ActivationKind.SWISH},
    Variant.V3: {"extra_layer": True, "activation": ActivationKind.SWISH},
}


class LifterConfig(BaseModel):
    """Architecture description; input width is 2J and output width 3J"""

    model_config = ConfigDict(frozen=True)

    num_joints: int = Field(16, ge=1)
    linear_size: int = Field(1024, ge=1)
    num_blocks: int = Field(2, ge=1)
    extra_layer: bool = False
    activation: ActivationKind = ActivationKind.RELU
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)
    variant_label: Variant = Variant.ORIGINAL
    shared_beta: bool = True
    bn_momentum: float = Field(0.1, gt=0.0, lt=1.0)
    bn_epsilon: float = Field(1e-5, gt=0.0)

    @property
    def input_dim(self) -> int:
        return 2 * self.num_joints

    @property
    def output_dim(self) -> int:
        return 3 * self.num_joints

    @classmethod
    def for_variant(cls, variant, **overrides) -> "LifterConfig":
        try:
            variant = Variant(variant)
            return cls(**{**VARIANT_PRESETS[variant], "variant_label": variant, **overrides})
        except ValidationError as e:
            raise config_error(e, "lifter config") from None
        except ValueError:
            raise ConfigError(f"unknown variant '{variant}', expected one of {[v.value for v in Variant]}") from None


class ResidualBlock(Layer):
    """inner(x) + x"""

    def __init__(self, inner: Sequential, name: str = "block"):
        self.name = name
        self.inner = inner

    def forward(self, x: Tensor, mode: LayerMode) -> Tensor:
        return x + self.inner.forward(x, mode)

    def backward(self, grad_out: Tensor) -> Tensor:
        return grad_out + self.inner.backward(grad_out)

    def parameters(self) -> List[Param]:
        return self.inner.parameters()

    def buffers(self) -> Dict[str, Tensor]:
        return self.inner.buffers()

    def activation_pattern(self) -> List[np.ndarray]:
        return self.inner.activation_pattern()


class Lifter(Layer):
    """Input stage, optional extra stage, residual blocks, output projection.

    Each stage is linear -> batch norm -> activation -> dropout. Weights are initialized
    from one PCG64 stream in stack order (input, extra, blocks, output); the dropout
    layers draw their masks from the same stream afterwards.
    """

    def __init__(self, config: LifterConfig, seed: int = 0):
        self.name = "lifter"
        self.config = config
        self.seed = seed
        self.rng = new_rng(seed)
        self.mode = LayerMode.TRAIN
        self.shared_beta = Param("swish.beta", np.ones((1, 1))) if self._uses_swish() and config.shared_beta else None

        size = config.linear_size
        layers: List[Layer] = [self._stage(config.input_dim, size, "input")]
        if config.extra_layer:
            layers.append(self._stage(size, size, "extra"))
        for b in range(config.num_blocks):
            inner = Sequential([self._stage(size, size, f"block{b}.stage{s}") for s in range(2)], name=f"block{b}")
            layers.append(ResidualBlock(inner, name=f"block{b}"))
        layers.append(LinearLayer(size, config.output_dim, self.rng, name="output.linear"))
        self.net = Sequential(layers, name="lifter")

        self._batchnorms = [l for l in self._walk(self.net) if isinstance(l, BatchNormLayer)]
        self._dropouts = [l for l in self._walk(self.net) if isinstance(l, DropoutLayer)]
        names = [p.name for p in self.parameters()]
        if len(set(names)) != len(names):
            raise ConfigError("parameter names are not unique")

    def _uses_swish(self) -> bool:
        return self.config.activation is ActivationKind.SWISH

    def _stage(self, n_in: int, n_out: int, prefix: str) -> Sequential:
        c = self.config
        if self._uses_swish():
            act: Layer = SwishActivation(self.shared_beta, name=f"{prefix}.swish")
        else:
            act = ReLULayer(name=f"{prefix}.relu")
        return Sequential(
            [
                LinearLayer(n_in, n_out, self.rng, name=f"{prefix}.linear"),
                BatchNormLayer(n_out, momentum=c.bn_momentum, epsilon=c.bn_epsilon, name=f"{prefix}.bn"),
                act,
                DropoutLayer(c.dropout_rate, self.rng, name=f"{prefix}.dropout"),
            ],
            name=prefix,
        )

    @classmethod
    def _walk(cls, layer: Layer):
        if isinstance(layer, Sequential):
            for child in layer.layers:
                yield from cls._walk(child)
        elif isinstance(layer, ResidualBlock):
            yield from cls._walk(layer.inner)
        else:
            yield layer

    def set_mode(self, mode: LayerMode):
        self.mode = LayerMode(mode)

    def forward(self, x: Tensor, mode: Optional[LayerMode] = None) -> Tensor:
        x = as_tensor(x, "lifter input")
        if x.shape[1] != self.config.input_dim:
            raise ShapeError(f"lifter expects input (batch, {self.config.input_dim}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NumericalError("lifter input contains non-finite values")
        return self.net.forward(x, self.mode if mode is None else mode)

    def backward(self, grad_out: Tensor) -> Tensor:
        if grad_out.shape[1] != self.config.output_dim:
            raise ShapeError(f"lifter gradient must be (batch, {self.config.output_dim}), got {grad_out.shape}")
        return self.net.backward(grad_out)

    def parameters(self) -> List[Param]:
        return unique_params(self.net.parameters())

    def buffers(self) -> Dict[str, Tensor]:
        return self.net.buffers()

    def load_buffers(self, buffers: Dict[str, Tensor]):
        for bn in self._batchnorms:
            bn.load_buffers(buffers)

    def activation_pattern(self) -> List[np.ndarray]:
        return self.net.activation_pattern()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def freeze_dropout(self):
        for d in self._dropouts:
            d.freeze()

    def unfreeze_dropout(self):
        for d in self._dropouts:
            d.unfreeze()

    def __repr__(self) -> str:
        c = self.config
        return (
            f"Lifter(variant={c.variant_label.value}, size={c.linear_size}, blocks={c.num_blocks}, "
            f"activation={c.activation.value}, params={self.parameter_count():,})"
        )


def build(config: LifterConfig, seed: int = 0) -> Lifter:
    model = Lifter(config, seed)
    logger.info(f"Built {config.variant_label.value} lifter with {model.parameter_count():,} parameters (seed {seed})")
    return model


class TensorRecord(BaseModel):
    name: str
    shape: List[int]
    data_b64: str


class CheckpointEnvelope(BaseModel):
    format_version: int
    config: LifterConfig
    norm_stats: Optional[Dict[str, Any]] = None
    params: List[TensorRecord]
    buffers: List[TensorRecord] = Field(default_factory=list)
    meta: Dict[str, Any] = Field(default_factory=dict)


@dataclass
class Checkpoint:
    model: Lifter
    config: LifterConfig
    norm_stats: Optional[NormStats]
    meta: Dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def _encode(name: str, value: np.ndarray) -> TensorRecord:
    data = np.ascontiguousarray(value, dtype="<f8").tobytes()
    return TensorRecord(name=name, shape=list(value.shape), data_b64=base64.b64encode(data).decode("ascii"))


def _decode(record: TensorRecord, path) -> np.ndarray:
    try:
        raw = base64.b64decode(record.data_b64, validate=True)
    except (binascii.Error, ValueError):
        raise CheckpointError(f"{path}: tensor {record.name} has a corrupt payload") from None
    expected = int(np.prod(record.shape)) * 8
    if len(raw) != expected:
        raise CheckpointError(f"{path}: tensor {record.name} holds {len(raw)} bytes, shape {record.shape} needs {expected}")
    return np.frombuffer(raw, dtype="<f8").reshape(record.shape).astype(np.float64)


def save_checkpoint(model: Lifter, path, norm_stats: Optional[NormStats] = None, meta: Optional[Dict[str, Any]] = None) -> Path:
    """Write the JSON envelope atomically; tensors are base64 little-endian float64, row-major"""
    path = Path(path)
    envelope = CheckpointEnvelope(
        format_version=FORMAT_VERSION,
        config=model.config,
        norm_stats=norm_stats.to_dict() if norm_stats is not None else None,
        params=[_encode(p.name, p.value) for p in model.parameters()],
        buffers=[_encode(k, v) for k, v in model.buffers().items()],
        meta=meta or {},
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(envelope.model_dump_json(), encoding="utf-8")
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from None
    logger.info(f"Saved checkpoint {path}")
    return path


def load_checkpoint(path) -> Checkpoint:
    """Rebuild the model from a checkpoint; it comes back in Eval mode"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt checkpoint ({e})") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: corrupt checkpoint (expected a JSON object)")

    version = doc.get("format_version")
    if not isinstance(version, int) or isinstance(version, bool):
        raise CheckpointError(f"{path}: missing or invalid format_version")
    if version < 1 or version > FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format_version {version} (this build reads version {FORMAT_VERSION})")

    try:
        envelope = CheckpointEnvelope.model_validate(doc)
    except ValidationError as e:
        raise CheckpointError(f"{path}: invalid checkpoint envelope: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}") from None

    model = Lifter(envelope.config, seed=0)
    params = model.parameters()
    if len(envelope.params) != len(params):
        raise CheckpointError(f"{path}: checkpoint has {len(envelope.params)} parameter tensors, its config expects {len(params)}")
    for record, p in zip(envelope.params, params):
        if record.name != p.name:
            raise CheckpointError(f"{path}: expected parameter {p.name}, found {record.name}")
        if tuple(record.shape) != p.value.shape:
            raise CheckpointError(f"{path}: parameter {p.name} has shape {tuple(record.shape)}, config expects {p.value.shape}")
        p.value[...] = _decode(record, path)

    expected_buffers = model.buffers()
    found = {r.name: r for r in envelope.buffers}
    if set(found) != set(expected_buffers):
        raise CheckpointError(f"{path}: running statistics do not match the config ({len(found)} found, {len(expected_buffers)} expected)")
    loaded = {}
    for name, current in expected_buffers.items():
        if tuple(found[name].shape) != current.shape:
            raise CheckpointError(f"{path}: buffer {name} has shape {tuple(found[name].shape)}, config expects {current.shape}")
        loaded[name] = _decode(found[name], path)
    model.load_buffers(loaded)

    stats = None
    if envelope.norm_stats is not None:
        try:
            stats = NormStats.from_dict(envelope.norm_stats)
        except (KeyError, ValueError, NumericalError) as e:
            raise CheckpointError(f"{path}: invalid normalization statistics ({e})") from None
    model.set_mode(LayerMode.EVAL)
    logger.info(f"Loaded checkpoint {path}: {model!r}")
    return Checkpoint(model=model, config=envelope.config, norm_stats=stats, meta=envelope.meta, format_version=version)
