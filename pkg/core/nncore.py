"""
Neural network core module for PoseLift
Dense float64 tensors, the layer kinds of the lifting network with hand-derived backward
passes, and a central-difference gradient checker
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

# Rank-2 float64 ndarray, row-major
Tensor = np.ndarray


def new_rng(seed: int) -> np.random.Generator:
    """PCG64 generator, the only source of randomness in the package"""
    return np.random.Generator(np.random.PCG64(seed))


def as_tensor(x, name: str = "tensor") -> Tensor:
    """Coerce to a C-contiguous rank-2 float64 array"""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be rank-2 (rows, cols), got shape {arr.shape}")
    return arr


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with an explicit shape check.

    Products go through numpy's BLAS-backed matmul. For a fixed numpy build and thread
    count the accumulation order is fixed, so results are bit-reproducible run to run.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-log(1 + e^-z)) never overflows
    return np.exp(-np.logaddexp(0.0, -z))


def relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, 0.0)


def swish(x: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """f(x) = x * sigmoid(beta * x)"""
    return x * sigmoid(beta * x)


class LayerMode(Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(eq=False)
class Param:
    """Learnable tensor with its accumulated gradient"""
    name: str
    value: Tensor
    grad: Optional[Tensor] = None

    def __post_init__(self):
        self.value = as_tensor(self.value, self.name)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ShapeError(f"{self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}")

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self):
        self.grad.fill(0.0)


class Layer:
    """Common protocol for layers and whole models.

    Backward passes accumulate into Param.grad, so shared parameters receive the sum of
    every use; callers zero gradients before each step.
    """

    name = "layer"

    def forward(self, x: Tensor, mode: LayerMode) -> Tensor:
        raise NotImplementedError

    def backward(self, grad_out: Tensor) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> List[Param]:
        return []

    def buffers(self) -> Dict[str, Tensor]:
        """Non-learnable state that must survive a checkpoint"""
        return {}

    def activation_pattern(self) -> List[np.ndarray]:
        """Masks of piecewise-linear units from the last forward pass"""
        return []


class LinearLayer(Layer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, name: str = "linear"):
        if in_features < 1 or out_features < 1:
            raise ConfigError(f"{name}: feature counts must be positive, got {in_features}x{out_features}")
        self.name = name
        # uniform Kaiming-style bound, biases zero
        bound = np.sqrt(6.0 / in_features)
        self.W = Param(f"{name}.W", rng.uniform(-bound, bound, size=(in_features, out_features)))
        self.b = Param(f"{name}.b", np.zeros((1, out_features)))
        self._x: Optional[Tensor] = None

    @property
    def in_features(self) -> int:
        return self.W.value.shape[0]

    @property
    def out_features(self) -> int:
        return self.W.value.shape[1]

    def forward(self, x: Tensor, mode: LayerMode) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"{self.name}: expected input (batch, {self.in_features}), got {x.shape}")
        self._x = x
        return matmul(x, self.W.value) + self.b.value

    def backward(self, grad_out: Tensor) -> Tensor:
        self.W.grad += matmul(self._x.T, grad_out)
        self.b.grad += grad_out.sum(axis=0, keepdims=True)
        return matmul(grad_out, self.W.value.T)

    def parameters(self) -> List[Param]:
        return [self.W, self.b]


class BatchNormLayer(Layer):
    """Per-feature batch normalization followed by a learnable affine map"""

    def __init__(self, num_features: int, momentum: float = 0.1, epsilon: float = 1e-5, name: str = "bn"):
        if not 0.0 < momentum < 1.0:
            raise ConfigError(f"{name}: momentum must be in (0, 1), got {momentum}")
        if epsilon <= 0.0:
            raise ConfigError(f"{name}: epsilon must be positive, got {epsilon}")
        self.name = name
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = Param(f"{name}.gamma", np.ones((1, num_features)))
        self.beta_shift = Param(f"{name}.beta_shift", np.zeros((1, num_features)))
        self.running_mean = np.zeros((1, num_features))
        self.running_var = np.ones((1, num_features))
        self._x_hat: Optional[Tensor] = None
        self._inv_std: Optional[Tensor] = None
        self._mode = LayerMode.EVAL

    def forward(self, x: Tensor, mode: LayerMode) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.gamma.value.shape[1]:
            raise ShapeError(f"{self.name}: expected input (batch, {self.gamma.value.shape[1]}), got {x.shape}")
        if mode is LayerMode.TRAIN:
            if x.shape[0] < 2:
                raise ShapeError(f"{self.name}: Train mode needs a batch of at least 2, batch statistics are undefined for {x.shape[0]}")
            mean = x.mean(axis=0, keepdims=True)
            var = x.var(axis=0, keepdims=True)
            self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean = self.running_mean
            var = self.running_var
        self._inv_std = 1.0 / np.sqrt(var + self.epsilon)
        self._x_hat = (x - mean) * self._inv_std
        self._mode = mode
        return self.gamma.value * self._x_hat + self.beta_shift.value

    def backward(self, grad_out: Tensor) -> Tensor:
        x_hat = self._x_hat
        self.beta_shift.grad += grad_out.sum(axis=0, keepdims=True)
        self.gamma.grad += (grad_out * x_hat).sum(axis=0, keepdims=True)
        d_xhat = grad_out * self.gamma.value
        if self._mode is LayerMode.EVAL:
            return d_xhat * self._inv_std
        n = grad_out.shape[0]
        return (self._inv_std / n) * (
            n * d_xhat
            - d_xhat.sum(axis=0, keepdims=True)
            - x_hat * (d_xhat * x_hat).sum(axis=0, keepdims=True)
        )

    def parameters(self) -> List[Param]:
        return [self.gamma, self.beta_shift]

    def buffers(self) -> Dict[str, Tensor]:
        return {f"{self.name}.running_mean": self.running_mean, f"{self.name}.running_var": self.running_var}

    def load_buffers(self, buffers: Dict[str, Tensor]):
        self.running_mean = as_tensor(buffers[f"{self.name}.running_mean"]).copy()
        self.running_var = as_tensor(buffers[f"{self.name}.running_var"]).copy()


class DropoutLayer(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-rate) at train time"""

    def __init__(self, rate: float, rng: np.random.Generator, name: str = "dropout"):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"{name}: rate must be in [0, 1), got {rate}")
        self.name = name
        self.rate = rate
        self.rng = rng
        self.frozen = False
        self._mask: Optional[Tensor] = None
        self._applied = False

    def freeze(self):
        """Reuse the cached mask on later Train-mode passes (gradient checking)"""
        self.frozen = True

    def unfreeze(self):
        self.frozen = False

    def forward(self, x: Tensor, mode: LayerMode) -> Tensor:
        if mode is LayerMode.EVAL or self.rate == 0.0:
            self._applied = False
            return x
        reuse = self.frozen and self._mask is not None and self._mask.shape == x.shape
        if not reuse:
            keep = self.rng.random(x.shape) >= self.rate
            self._mask = keep / (1.0 - self.rate)
        self._applied = True
        return x * self._mask

    def backward(self, grad_out: Tensor) -> Tensor:
        if not self._applied:
            return grad_out
        return grad_out * self._mask


class ReLULayer(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name
        self._mask: Optional[np.ndarray] = None

    def forward(self, x: Tensor, mode: LayerMode) -> Tensor:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: Tensor) -> Tensor:
        return grad_out * self._mask

    def activation_pattern(self) -> List[np.ndarray]:
        return [] if self._mask is None else [self._mask]


class SwishActivation(Layer):
    """x * sigmoid(beta * x) with a learnable scalar beta.

    Passing the same beta Param to several instances shares it; its gradient is then the
    sum over every site and every element of the batch.
    """

    def __init__(self, beta: Optional[Param] = None, name: str = "swish"):
        self.name = name
        self.beta = beta if beta is not None else Param(f"{name}.beta", np.ones((1, 1)))
        if self.beta.value.shape != (1, 1):
            raise ShapeError(f"{self.name}: beta must be a (1, 1) scalar, got {self.beta.value.shape}")
        self._x: Optional[Tensor] = None
        self._s: Optional[Tensor] = None

    def forward(self, x: Tensor, mode: LayerMode) -> Tensor:
        b = self.beta.value[0, 0]
        self._x = x
        self._s = sigmoid(b * x)
        return x * self._s

    def backward(self, grad_out: Tensor) -> Tensor:
        b = self.beta.value[0, 0]
        x, s = self._x, self._s
        ds = s * (1.0 - s)
        self.beta.grad[0, 0] += np.sum(grad_out * x * x * ds)
        return grad_out * (s + b * x * ds)

    def parameters(self) -> List[Param]:
        return [self.beta]


class Sequential(Layer):
    """Ordered chain of layers"""

    def __init__(self, layers: Sequence[Layer], name: str = "seq"):
        self.name = name
        self.layers = list(layers)

    def forward(self, x: Tensor, mode: LayerMode) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x, mode)
        return x

    def backward(self, grad_out: Tensor) -> Tensor:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def parameters(self) -> List[Param]:
        return unique_params(p for layer in self.layers for p in layer.parameters())

    def buffers(self) -> Dict[str, Tensor]:
        merged: Dict[str, Tensor] = {}
        for layer in self.layers:
            merged.update(layer.buffers())
        return merged

    def activation_pattern(self) -> List[np.ndarray]:
        return [m for layer in self.layers for m in layer.activation_pattern()]


def unique_params(params) -> List[Param]:
    """Deduplicate by identity, keeping first-seen order"""
    seen = set()
    out = []
    for p in params:
        if id(p) not in seen:
            seen.add(id(p))
            out.append(p)
    return out


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_entry: str
    checked: int
    skipped: int


def _patterns_equal(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(u, v) for u, v in zip(a, b))


def run_grad_check(
    target: Layer,
    x: Tensor,
    eps: float = 1e-5,
    mode: LayerMode = LayerMode.TRAIN,
    projection: Optional[Tensor] = None,
    seed: int = 0,
    skip_kinks: bool = False,
) -> GradCheckReport:
    """Compare analytic gradients against central differences of sum(output * R).

    R is a fixed seeded Gaussian projection unless given (pass ones for a plain sum).
    Every parameter element and every input element is perturbed by +-eps. With
    skip_kinks, entries whose perturbation flips any ReLU mask are skipped. Running
    statistics are restored afterwards. Dropout layers must be frozen or have rate 0.
    """
    if eps <= 0:
        raise ConfigError(f"grad_check: eps must be positive, got {eps}")
    x = as_tensor(x, "grad_check input").copy()
    params = unique_params(target.parameters())
    for p in params:
        if not np.all(np.isfinite(p.value)):
            raise NumericalError(f"grad_check: parameter {p.name} is not finite")
    if not np.all(np.isfinite(x)):
        raise NumericalError("grad_check: input is not finite")

    saved_buffers = {k: v.copy() for k, v in target.buffers().items()}

    for p in params:
        p.zero_grad()
    out = target.forward(x, mode)
    if not np.all(np.isfinite(out)):
        raise NumericalError("grad_check: non-finite output at the unperturbed point")
    R = new_rng(seed).standard_normal(out.shape) if projection is None else as_tensor(projection, "projection")
    if R.shape != out.shape:
        raise ShapeError(f"grad_check: projection shape {R.shape} != output shape {out.shape}")
    grad_x = target.backward(R)
    base_pattern = [m.copy() for m in target.activation_pattern()]
    analytic = [(p.name, p.value, p.grad.copy()) for p in params]
    analytic.append(("input", x, grad_x))

    worst, worst_entry, checked, skipped = 0.0, "", 0, 0
    for name, value, grad in analytic:
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + eps
            y_plus = target.forward(x, mode)
            flipped = skip_kinks and not _patterns_equal(base_pattern, target.activation_pattern())
            value[idx] = orig - eps
            y_minus = target.forward(x, mode)
            flipped = flipped or (skip_kinks and not _patterns_equal(base_pattern, target.activation_pattern()))
            value[idx] = orig
            if not (np.all(np.isfinite(y_plus)) and np.all(np.isfinite(y_minus))):
                raise NumericalError(f"grad_check: non-finite loss perturbing {name}{list(idx)}")
            if flipped:
                skipped += 1
                continue
            numeric = float(np.sum((y_plus - y_minus) * R)) / (2.0 * eps)
            a = float(grad[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            checked += 1
            if rel > worst:
                worst, worst_entry = rel, f"{name}{list(idx)}"

    for key, saved in saved_buffers.items():
        np.copyto(target.buffers()[key], saved)
    for p in params:
        p.zero_grad()
    if skipped:
        logger.info(f"grad_check skipped {skipped} entries that crossed a ReLU kink")
    return GradCheckReport(max_relative_error=worst, worst_entry=worst_entry, checked=checked, skipped=skipped)


def grad_check(target: Layer, x: Tensor, eps: float = 1e-5, **kwargs) -> float:
    """Worst relative error between analytic and central-difference gradients"""
    return run_grad_check(target, x, eps=eps, **kwargs).max_relative_error
