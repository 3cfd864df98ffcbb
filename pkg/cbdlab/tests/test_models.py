"""
Tests for experiment configuration models and report records.

Covers:
- Section ranges and cross-field validators of ExperimentConfig
- InequalityCheck tolerances and ratios
"""

import math

import pytest

from cbdlab.models.experiment import (
    SUITE_NAMES,
    CommutatorSection,
    ExperimentConfig,
    ExponentsSection,
    SuiteSection,
    WeightKind,
    WeightSpec,
)
from cbdlab.models.reports import InequalityCheck


@pytest.mark.unit
class TestExperimentConfig:
    """Defaults and validators."""

    def test_defaults(self):
        config = ExperimentConfig()
        assert config.grid.d == 1
        assert config.suite.names == list(SUITE_NAMES)
        assert config.weights == []

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig.model_validate({"grid": {"L": 4, "depth": 4}})

    def test_vector_budget(self):
        assert ExperimentConfig.model_validate({"values": {"n": 3}, "domination": {"epsilon": 0.1}})
        with pytest.raises(ValueError, match="n \\* epsilon"):
            ExperimentConfig.model_validate({"values": {"n": 3}, "domination": {"epsilon": 0.2}})

    def test_weight_kind_parsed_from_string(self):
        config = ExperimentConfig.model_validate({"weights": [{"kind": "bloom_rotated", "alpha": 0.2}]})
        assert config.weights[0].kind == WeightKind.BLOOM_ROTATED

    def test_scales_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            WeightSpec(kind=WeightKind.DIAGONAL, scales=[1.0, 0.0])

    def test_unknown_suite(self):
        with pytest.raises(ValueError, match="Unknown suites"):
            SuiteSection(names=["sandwich", "nonsense"])


@pytest.mark.unit
class TestExponentsSection:
    def test_defaults_are_admissible(self):
        section = ExponentsSection()
        assert 1.0 / section.s + 1.0 / section.t < 1.0

    @pytest.mark.parametrize("s, t", [(2.0, 2.0), (1.5, 3.0)])
    def test_relation_rejected(self, s, t):
        with pytest.raises(ValueError, match="1/s \\+ 1/t"):
            ExponentsSection(s=s, t=t)

    def test_lp_must_lie_between_dual_t_and_s(self):
        assert ExponentsSection(s=4.0, t=4.0, lp=2.0).lp == 2.0
        with pytest.raises(ValueError, match="lp must lie"):
            ExponentsSection(s=4.0, t=4.0, lp=1.2)

    def test_infinite_exponent_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            ExponentsSection(p=math.inf)


@pytest.mark.unit
class TestCommutatorSection:
    def test_power_range(self):
        assert CommutatorSection(alpha=0.6, beta=0.4).alpha == 0.6
        with pytest.raises(ValueError, match="alpha \\+ beta"):
            CommutatorSection(alpha=0.7, beta=0.4)

    def test_order_cap(self):
        with pytest.raises(ValueError):
            CommutatorSection(kind="iterated", k=21)


@pytest.mark.unit
class TestInequalityCheck:
    def test_tolerance(self):
        assert InequalityCheck.compare("x.y", "within", 1.0 + 1e-10, 1.0).passed
        assert not InequalityCheck.compare("x.y", "above", 1.001, 1.0).passed

    def test_ratio(self):
        check = InequalityCheck.compare("x.y", "half", 1.0, 2.0)
        assert check.ratio == pytest.approx(0.5)
        assert InequalityCheck.compare("x.y", "zero", 0.0, 0.0).ratio is None
        assert InequalityCheck.compare("x.y", "infinite", 1.0, math.inf).ratio is None

    def test_inexact_flag_in_row(self):
        check = InequalityCheck.compare("x.y", "lower", 1.0, 4.0, exact=False)
        assert not check.exact
        assert check.summary_row() == ["x.y", "1.0", "4.0", "0.25", "true"]
