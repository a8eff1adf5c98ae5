import numpy as np
import pytest
from hypothesis import given, strategies as st

from telefuse.errors import InvalidInputError
from telefuse.model import (
    GPU_MEM_CAPACITY_BYTES,
    JobClass,
    JobRecord,
    NodeSeries,
    RICategory,
    RIResult,
    TelemetrySample,
    classify_job,
    classify_ri,
)


class TestClassifyJob:
    @pytest.mark.parametrize(
        "nodes,expected",
        [
            (10, JobClass.SMALL),
            (24, JobClass.SMALL),
            (25, JobClass.MEDIUM),
            (99, JobClass.MEDIUM),
            (100, JobClass.LARGE),
            (496, JobClass.LARGE),
            (5, JobClass.UNCLASSIFIED),
            (9, JobClass.UNCLASSIFIED),
            (497, JobClass.UNCLASSIFIED),
            (1, JobClass.UNCLASSIFIED),
        ],
    )
    def test_ranges(self, nodes, expected):
        assert classify_job(nodes) is expected

    @pytest.mark.parametrize("bad", [0, -1, -100])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(InvalidInputError):
            classify_job(bad)

    @given(st.integers(min_value=1, max_value=10_000))
    def test_total_and_pure(self, nodes):
        assert classify_job(nodes) is classify_job(nodes)


class TestClassifyRI:
    @pytest.mark.parametrize(
        "value,expected",
        [
            (0.0, RICategory.CONSTANT),
            (0.2, RICategory.CONSTANT),  # boundary belongs to the lower category
            (0.200001, RICategory.PHASED),
            (0.6, RICategory.PHASED),
            (0.61, RICategory.STOCHASTIC),
            (1.0, RICategory.STOCHASTIC),
        ],
    )
    def test_boundaries(self, value, expected):
        assert classify_ri(value) is expected

    @pytest.mark.parametrize("bad", [-0.01, 1.01, float("nan"), -5.0])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(InvalidInputError):
            classify_ri(bad)

    @given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
    def test_total_over_unit_interval(self, value):
        assert classify_ri(value) in RICategory

    def test_riresult_factory(self):
        result = RIResult.from_value(0.3)
        assert result.value == 0.3
        assert result.category is RICategory.PHASED


class TestJobRecord:
    def test_runtime_and_class(self):
        job = JobRecord("J1", "u", "p", "small", 0, 100, 3700, 10)
        assert job.runtime_seconds == 3600
        assert job.job_class is JobClass.SMALL

    def test_negative_runtime_rejected(self):
        with pytest.raises(InvalidInputError, match="negative runtime"):
            JobRecord("J1", "u", "p", "q", 0, 100, 50, 10)

    def test_zero_nodes_rejected(self):
        with pytest.raises(InvalidInputError):
            JobRecord("J1", "u", "p", "q", 0, 0, 10, 0)


class TestTelemetrySample:
    def _sample(self, **kw):
        base = dict(
            timestamp=1000,
            host="n1",
            gpu_util=(50.0, 50.0, 50.0, 50.0),
            gpu_mem_util=(10.0, 10.0, 10.0, 10.0),
            gpu_mem_alloc=(0.0, 0.0, 0.0, 0.0),
            gpu_power=(100.0, 100.0, 100.0, 100.0),
        )
        base.update(kw)
        return TelemetrySample(**base)

    def test_node_aggregation_rules(self):
        s = self._sample()
        assert s.node_util == 50.0
        assert s.node_power == 400.0
        s = self._sample(gpu_util=(80.0, 20.0, 0.0, 0.0))
        assert s.node_util == 25.0

    def test_alloc_percent_of_node_capacity(self):
        quarter = GPU_MEM_CAPACITY_BYTES  # one full GPU = quarter of the node
        s = self._sample(gpu_mem_alloc=(quarter, 0.0, 0.0, 0.0))
        assert s.node_alloc_pct == pytest.approx(25.0)

    @pytest.mark.parametrize(
        "field,value",
        [
            ("gpu_util", (150.0, 0.0, 0.0, 0.0)),
            ("gpu_util", (-1.0, 0.0, 0.0, 0.0)),
            ("gpu_mem_util", (0.0, 101.0, 0.0, 0.0)),
            ("gpu_mem_alloc", (GPU_MEM_CAPACITY_BYTES + 1, 0.0, 0.0, 0.0)),
            ("gpu_mem_alloc", (-5.0, 0.0, 0.0, 0.0)),
            ("gpu_power", (-1.0, 0.0, 0.0, 0.0)),
            ("gpu_power", (float("nan"), 0.0, 0.0, 0.0)),
            ("gpu_power", (float("inf"), 0.0, 0.0, 0.0)),
        ],
    )
    def test_rejects_out_of_range(self, field, value):
        with pytest.raises(InvalidInputError):
            self._sample(**{field: value})

    def test_wrong_gpu_count_rejected(self):
        with pytest.raises(InvalidInputError):
            self._sample(gpu_util=(1.0, 2.0, 3.0))


class TestNodeSeries:
    def _series(self, ts):
        n = len(ts)
        return NodeSeries(
            job_id="J1",
            host="n1",
            timestamps=np.asarray(ts),
            node_util=np.zeros(n),
            node_mem_util=np.zeros(n),
            node_alloc_pct=np.zeros(n),
            node_power=np.zeros(n),
            gpu_util=np.zeros((n, 4)),
        )

    def test_strictly_increasing_required(self):
        self._series([1, 2, 3])
        with pytest.raises(InvalidInputError):
            self._series([1, 2, 2])
        with pytest.raises(InvalidInputError):
            self._series([3, 2, 1])

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            NodeSeries(
                job_id="J1",
                host="n1",
                timestamps=np.array([1, 2]),
                node_util=np.zeros(3),
                node_mem_util=np.zeros(2),
                node_alloc_pct=np.zeros(2),
                node_power=np.zeros(2),
                gpu_util=np.zeros((2, 4)),
            )

    def test_len(self):
        assert len(self._series([1, 2, 3])) == 3
