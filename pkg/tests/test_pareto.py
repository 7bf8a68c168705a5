import numpy as np
import pytest

from bwnas.errors import ValidationError
from bwnas.lut import BlockLut, LutEntry
from bwnas.pareto import nondominated_mask, pareto_front, parse_metrics, prune_luts


def pairwise_mask(points):
    """O(n^2) dominance oracle."""
    p = np.asarray(points, dtype=float)
    le = np.all(p[:, None, :] <= p[None, :, :], axis=2)
    lt = np.any(p[:, None, :] < p[None, :, :], axis=2)
    return ~np.any(le & lt, axis=0)


def entries(rows, bits=8):
    return [LutEntry(i, bits, float(r[0]), int(r[1]), None if len(r) < 3 else float(r[2]))
            for i, r in enumerate(rows)]


def test_hand_example():
    front = pareto_front(entries([(1, 10), (2, 5), (3, 7)]), "size")
    assert [(e.loss, e.size_bits) for e in front.entries] == [(1, 10), (2, 5)]


def test_ties_retained_and_empty():
    front = pareto_front(entries([(1, 5), (1, 5), (2, 2)]), "size")
    assert len(front) == 3
    assert len(pareto_front([], "size")) == 0


def test_three_d_example():
    rows = [(1, 10, 5), (2, 5, 9), (3, 7, 1), (3, 8, 2)]
    front = pareto_front(entries(rows), "size,latency")
    assert sorted(e.subnet_id for e in front.entries) == [0, 1, 2]


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("n", [1, 10, 500, 3000])
def test_matches_pairwise_oracle(rng, n, d):
    pts = rng.integers(0, 30, size=(n, d)).astype(float)
    np.testing.assert_array_equal(nondominated_mask(pts), pairwise_mask(pts))
    cont = rng.standard_normal((n, d))
    np.testing.assert_array_equal(nondominated_mask(cont), pairwise_mask(cont))


def test_large_two_d_against_oracle(rng):
    pts = np.column_stack([rng.standard_normal(10_000), rng.integers(0, 500, 10_000)])
    np.testing.assert_array_equal(nondominated_mask(pts), pairwise_mask(pts))


def test_front_properties(rng):
    rows = [(rng.random(), int(rng.integers(1, 1000)), rng.random()) for _ in range(400)]
    es = entries(rows)
    for metrics in ("size", "size,latency"):
        front = pareto_front(es, metrics)
        assert 0 < len(front) < len(es)
        kept = set(front.entries)
        for e in es:
            if e not in kept:
                assert any(f.loss <= e.loss and f.size_bits <= e.size_bits for f in kept)


def test_missing_metric_rejected():
    with pytest.raises(ValidationError):
        pareto_front(entries([(1, 2)]), "latency")
    with pytest.raises(ValidationError):
        parse_metrics("energy")


def test_merge_across_bitwidths():
    a = BlockLut(0, 4, tuple(entries([(5, 4), (9, 2)], bits=4)))
    b = BlockLut(0, 8, tuple(entries([(1, 8), (6, 6)], bits=8)))
    separate = prune_luts([a, b], "size")
    assert [len(f) for f in separate] == [2, 2]
    merged = prune_luts([a, b], "size", merge_bitwidths=True)
    assert all(f.merged for f in merged)
    assert [len(f) for f in merged] == [2, 1]
