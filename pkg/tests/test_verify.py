"""
Tests for the built-in verification checks
"""

import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.lifter_model import Variant
from core.verify import (
    DEFAULT_SEEDS,
    check_lifter,
    check_loss_gradients,
    check_mpjpe_oracle,
    check_swish_relu_limit,
    check_wmse_uniform,
    run_checks,
)


@pytest.mark.parametrize("variant", list(Variant))
def test_whole_model_gradients_every_variant(variant):
    """Each variant passes the whole-model gradient check over five seeds"""
    result = check_lifter(variant, DEFAULT_SEEDS)
    assert result.passed, result.line()


def test_loss_gradients_pass():
    """MSE, WMSE and L1 gradients agree with central differences"""
    result = check_loss_gradients()
    assert result.passed, result.line()


def test_metric_oracles_pass():
    """MPJPE oracle, uniform WMSE and the swish limit all hold"""
    for check in (check_mpjpe_oracle, check_wmse_uniform, check_swish_relu_limit):
        result = check()
        assert result.passed, result.line()


@pytest.mark.slow
def test_full_run_adds_whole_model_checks():
    """The full run checks every variant on top of the default list"""
    default = run_checks()
    full = run_checks(full=True)
    assert all(r.passed for r in full), [r.line() for r in full if not r.passed]
    extra = {r.name for r in full} - {r.name for r in default}
    assert extra == {f"lifter-{v.value}-all-seeds" for v in Variant}
