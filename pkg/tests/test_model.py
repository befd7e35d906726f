import pytest
from hypothesis import given, settings, strategies as st

from repchain.model import (
    AllocationKind,
    ChainConfig,
    MemoryAllocation,
    ValidationError,
    constant_allocation,
    exponential_allocation,
    validate,
)


class TestValidate:
    def test_accepts_matching_config_and_levels(self):
        validate(ChainConfig(k=2, p=1.0, q=0.5), MemoryAllocation.reserved([1, 2]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError, match="dimension mismatch"):
            validate(ChainConfig(k=2, p=1.0, q=0.5), MemoryAllocation.reserved([1]))

    def test_q_zero_rejected(self):
        with pytest.raises(ValidationError, match=r"q outside \(0,1\]"):
            validate(ChainConfig(k=1, p=1.0, q=0.0))

    def test_q_above_one_rejected(self):
        with pytest.raises(ValidationError, match=r"q outside \(0,1\]"):
            validate(ChainConfig(k=1, p=1.0, q=1.0001))

    @pytest.mark.parametrize(
        "cfg",
        [
            ChainConfig(k=-1, p=1.0, q=0.5),
            ChainConfig(k=1, p=0.0, q=0.5),
            ChainConfig(k=1, p=1.0, q=0.5, d=-2.0),
            ChainConfig(k=1, p=1.0, q=0.5, c=0.0),
        ],
    )
    def test_non_positive_parameters_rejected(self, cfg):
        with pytest.raises(ValidationError):
            validate(cfg)

    def test_bad_pool_rejected(self):
        with pytest.raises(ValidationError):
            validate(ChainConfig(k=1, p=1.0, q=0.5), MemoryAllocation.cognitive(0))

    def test_bad_level_budget_rejected(self):
        with pytest.raises(ValidationError):
            validate(ChainConfig(k=2, p=1.0, q=0.5), MemoryAllocation.reserved([1, 0]))


class TestChainConfig:
    def test_link_and_node_counts(self):
        cfg = ChainConfig(k=3, p=1.0, q=0.5)
        assert cfg.num_links == 8
        assert cfg.num_nodes == 9

    def test_single_link_chain(self):
        cfg = ChainConfig(k=0, p=2.0, q=1.0)
        assert cfg.num_links == 1


class TestConstantAllocation:
    def test_levels_all_equal(self):
        alloc = constant_allocation(1, 3)
        assert alloc.kind is AllocationKind.RESERVED
        assert alloc.levels == (1, 1, 1)

    def test_single_level(self):
        assert constant_allocation(2, 1).levels == (2,)

    def test_longer_chain(self):
        assert constant_allocation(3, 4).levels == (3, 3, 3, 3)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValidationError):
            constant_allocation(0, 3)
        with pytest.raises(ValidationError):
            constant_allocation(1, 0)


class TestExponentialAllocation:
    def test_rounds_up(self):
        assert exponential_allocation(1.5, 1, 2).levels == (2, 3)

    def test_small_growth_still_rounds_up(self):
        assert exponential_allocation(1.1, 1, 1).levels == (2,)

    def test_deeper_start(self):
        assert exponential_allocation(1.5, 2, 3).levels == (3, 4, 6)

    def test_gamma_bounds(self):
        with pytest.raises(ValidationError):
            exponential_allocation(1.0, 1, 2)
        with pytest.raises(ValidationError):
            exponential_allocation(2.0, 1, 2)

    @given(
        gamma=st.floats(min_value=1.01, max_value=1.99),
        i0=st.integers(min_value=1, max_value=4),
        k=st.integers(min_value=1, max_value=8),
    )
    @settings(max_examples=60, deadline=None)
    def test_budgets_non_decreasing(self, gamma, i0, k):
        levels = exponential_allocation(gamma, i0, k).levels
        assert all(a <= b for a, b in zip(levels, levels[1:]))

    @given(k=st.integers(min_value=1, max_value=6))
    @settings(max_examples=20, deadline=None)
    def test_constructors_validate(self, k):
        cfg = ChainConfig(k=k, p=1.0, q=0.5)
        validate(cfg, constant_allocation(2, k))
        validate(cfg, exponential_allocation(1.5, 1, k))


class TestAllocationLabels:
    def test_round_trip(self):
        for alloc in (MemoryAllocation.reserved([1, 2, 4]), MemoryAllocation.cognitive(3)):
            assert MemoryAllocation.from_label(alloc.label()) == alloc

    def test_unknown_label(self):
        with pytest.raises(ValidationError):
            MemoryAllocation.from_label("bogus:1")
