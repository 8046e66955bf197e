"""
Verification suite for PoseLift
Gradient checks for every layer kind and the whole lifter, plus metric and loss oracles.
Backs the `verify` command; each check reports PASS or FAIL with a short detail.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .lifter_model import LifterConfig, Variant, build
from .metrics import JointWeights, default_joint_weights, l1, mpjpe, mse, weighted_mpjpe, wmse
from .nncore import (
    BatchNormLayer,
    DropoutLayer,
    LayerMode,
    LinearLayer,
    ReLULayer,
    SwishActivation,
    new_rng,
    relu,
    run_grad_check,
    swish,
)

logger = logging.getLogger(__name__)

GRAD_TOL = 1e-4
LOSS_GRAD_TOL = 1e-5
ORACLE_TOL = 1e-12
SWISH_RELU_GAP = 0.004
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
CHECK_MODEL_SIZE = 8


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} {self.detail}"


def _grad_result(name: str, runs: Sequence) -> CheckResult:
    worst = max(runs, key=lambda r: r.max_relative_error)
    skipped = sum(r.skipped for r in runs)
    detail = f"max rel err {worst.max_relative_error:.2e} over {len(runs)} seed(s)"
    if worst.worst_entry:
        detail += f" (worst {worst.worst_entry})"
    if skipped:
        detail += f", {skipped} kink entries skipped"
    return CheckResult(name, worst.max_relative_error < GRAD_TOL, detail)


def check_linear(seeds: Sequence[int]) -> CheckResult:
    runs = []
    for seed in seeds:
        rng = new_rng(seed)
        layer = LinearLayer(8, 5, rng, name="linear")
        runs.append(run_grad_check(layer, rng.standard_normal((4, 8)), seed=seed))
    return _grad_result("linear", runs)


def check_batchnorm(seeds: Sequence[int]) -> CheckResult:
    runs = []
    for seed in seeds:
        rng = new_rng(seed)
        layer = BatchNormLayer(6, name="bn")
        layer.gamma.value[...] = rng.uniform(0.5, 1.5, size=layer.gamma.value.shape)
        layer.beta_shift.value[...] = rng.standard_normal(layer.beta_shift.value.shape)
        x = rng.standard_normal((16, 6)) * 2.0 + 0.5
        runs.append(run_grad_check(layer, x, mode=LayerMode.TRAIN, seed=seed))
    return _grad_result("batchnorm", runs)


def check_dropout(seeds: Sequence[int]) -> CheckResult:
    runs = []
    for seed in seeds:
        rng = new_rng(seed)
        layer = DropoutLayer(0.5, rng, name="dropout")
        layer.freeze()
        runs.append(run_grad_check(layer, rng.standard_normal((8, 6)), mode=LayerMode.TRAIN, seed=seed))
    return _grad_result("dropout", runs)


def check_relu(seeds: Sequence[int]) -> CheckResult:
    runs = []
    for seed in seeds:
        rng = new_rng(seed)
        # keep inputs at least 0.1 away from the kink
        x = rng.standard_normal((6, 7))
        x = np.sign(x) * (0.1 + np.abs(x))
        runs.append(run_grad_check(ReLULayer(), x, seed=seed))
    return _grad_result("relu", runs)


def check_swish(seeds: Sequence[int]) -> CheckResult:
    runs = []
    for seed in seeds:
        rng = new_rng(seed)
        act = SwishActivation(name="swish")
        act.beta.value[0, 0] = rng.uniform(0.5, 2.0)
        runs.append(run_grad_check(act, rng.standard_normal((6, 7)) * 2.0, seed=seed))
    return _grad_result("swish", runs)


def check_lifter(variant: Variant, seeds: Sequence[int], name: str = "") -> CheckResult:
    """Whole-model check in Eval mode after a Train-mode pass has set the running statistics"""
    runs = []
    for seed in seeds:
        config = LifterConfig.for_variant(variant, linear_size=CHECK_MODEL_SIZE, dropout_rate=0.0)
        model = build(config, seed)
        rng = new_rng(seed + 1000)
        model.forward(rng.standard_normal((16, config.input_dim)), LayerMode.TRAIN)
        x = rng.standard_normal((4, config.input_dim))
        skip = config.activation.value == "relu"
        runs.append(run_grad_check(model, x, mode=LayerMode.EVAL, seed=seed, skip_kinks=skip))
    return _grad_result(name or f"lifter-{Variant(variant).value}", runs)


def _loss_fd_error(fn: Callable, pred: np.ndarray, target: np.ndarray, eps: float = 1e-5) -> float:
    _, grad = fn(pred, target)
    worst = 0.0
    for idx in np.ndindex(pred.shape):
        orig = pred[idx]
        pred[idx] = orig + eps
        up, _ = fn(pred, target)
        pred[idx] = orig - eps
        down, _ = fn(pred, target)
        pred[idx] = orig
        numeric = (up - down) / (2.0 * eps)
        worst = max(worst, abs(grad[idx] - numeric) / max(abs(grad[idx]), abs(numeric), 1e-6))
    return worst


def check_loss_gradients() -> CheckResult:
    rng = new_rng(7)
    weights = default_joint_weights()
    pred, target = rng.standard_normal((3, 48)), rng.standard_normal((3, 48))
    errors = {
        "mse": _loss_fd_error(mse, pred, target),
        "wmse": _loss_fd_error(lambda p, t: wmse(p, t, weights), pred, target),
    }
    # l1 is checked away from zero residuals
    offset = np.where(pred >= target, 0.5, -0.5)
    errors["l1"] = _loss_fd_error(l1, pred + offset, target)
    worst = max(errors, key=errors.get)
    return CheckResult("loss-gradients", errors[worst] < LOSS_GRAD_TOL, f"max rel err {errors[worst]:.2e} ({worst})")


def check_mse_oracle() -> CheckResult:
    rng = new_rng(11)
    pred, target = rng.standard_normal((5, 48)), rng.standard_normal((5, 48))
    total = 0.0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            total += (pred[i, j] - target[i, j]) ** 2
    oracle = total / pred.size
    value, _ = mse(pred, target)
    err = abs(value - oracle)
    return CheckResult("mse-oracle", err < ORACLE_TOL, f"|diff| {err:.1e}")


def check_wmse_uniform() -> CheckResult:
    rng = new_rng(12)
    uniform = JointWeights(np.full(16, 2.5), default_joint_weights().joint_names, "uniform")
    for batch in range(100):
        pred, target = rng.standard_normal((8, 48)), rng.standard_normal((8, 48))
        v1, g1 = mse(pred, target)
        v2, g2 = wmse(pred, target, uniform)
        if v1 != v2 or not np.array_equal(g1, g2):
            return CheckResult("wmse-uniform", False, f"differs from mse on batch {batch}")
    return CheckResult("wmse-uniform", True, "bit-identical to mse on 100 batches")


def _mpjpe_loop(pred: np.ndarray, gt: np.ndarray, w: np.ndarray) -> float:
    per_sample = []
    for b in range(pred.shape[0]):
        num, den = 0.0, 0.0
        for j in range(pred.shape[1]):
            d = np.sqrt(sum((pred[b, j, c] - gt[b, j, c]) ** 2 for c in range(3)))
            num += w[j] * d
            den += w[j]
        per_sample.append(num / den)
    return sum(per_sample) / len(per_sample)


def check_mpjpe_oracle() -> CheckResult:
    rng = new_rng(13)
    weights = default_joint_weights()
    pred = rng.standard_normal((1000, 16, 3))
    gt = rng.standard_normal((1000, 16, 3))
    err = abs(mpjpe(pred, gt) - _mpjpe_loop(pred, gt, np.ones(16)))
    werr = abs(weighted_mpjpe(pred, gt, weights) - _mpjpe_loop(pred, gt, weights.weights))

    gt_small = np.zeros((1, 16, 3))
    pred_small = gt_small.copy()
    pred_small[0, 3] = (3.0, 4.0, 0.0)
    exact = mpjpe(pred_small, gt_small) == 5.0 / 16.0
    passed = err < ORACLE_TOL and werr < ORACLE_TOL and exact
    return CheckResult("mpjpe-oracle", passed, f"|diff| {err:.1e}, weighted |diff| {werr:.1e}, 3-4-5 case exact={exact}")


def check_swish_relu_limit() -> CheckResult:
    x = np.linspace(-10.0, 10.0, 200001)
    gap = float(np.max(np.abs(swish(x, 100.0) - relu(x))))
    return CheckResult("swish-relu-limit", gap < SWISH_RELU_GAP, f"sup gap {gap:.5f} at beta 100")


def _guarded(name: str, fn: Callable[[], CheckResult]) -> CheckResult:
    try:
        return fn()
    except Exception as e:  # a crashing check is a failed check
        logger.error(f"check {name} raised {type(e).__name__}: {e}")
        return CheckResult(name, False, f"raised {type(e).__name__}: {e}")


def run_checks(full: bool = False, seeds: Sequence[int] = DEFAULT_SEEDS) -> List[CheckResult]:
    checks: List[Tuple[str, Callable[[], CheckResult]]] = [
        ("linear", lambda: check_linear(seeds)),
        ("batchnorm", lambda: check_batchnorm(seeds)),
        ("dropout", lambda: check_dropout(seeds)),
        ("relu", lambda: check_relu(seeds)),
        ("swish", lambda: check_swish(seeds)),
        ("lifter-v2", lambda: check_lifter(Variant.V2, seeds[:1])),
        ("loss-gradients", check_loss_gradients),
        ("mse-oracle", check_mse_oracle),
        ("wmse-uniform", check_wmse_uniform),
        ("mpjpe-oracle", check_mpjpe_oracle),
        ("swish-relu-limit", check_swish_relu_limit),
    ]
    if full:
        checks += [(f"lifter-{v.value}-all-seeds", lambda v=v: check_lifter(v, seeds, f"lifter-{v.value}-all-seeds")) for v in Variant]
    results = []
    for name, fn in checks:
        result = _guarded(name, fn)
        logger.info(result.line())
        results.append(result)
    return results
