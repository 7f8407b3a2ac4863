import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core.errors import (DimensionError, InvalidIndexError, InvalidModeError, ModelError,
                             UndefinedReferenceError)
from src.core.metrics import frobenius_norm, relative_error
from src.decomposition.lmlra import matricized_tucker
from src.tensor.base import (diag_tensor, fiber, fold, khatri_rao, khatri_rao_chain, kronecker,
                             mode_n_product, outer_rank1, tensor_slice, unfold)
from src.tensor.models import (BlockTerm, BlockTermTensor, KruskalTensor, TuckerTensor,
                               kruskal_from_matricized, matricized_kruskal, parameter_count,
                               reconstruct)
from src.dataset.synthetic import random_kruskal, random_tucker


def entries_1_to_8():
    t = np.zeros((2, 2, 2))
    for i, j, k in itertools.product(range(2), repeat=3):
        t[i, j, k] = (i + 1) + 2 * j + 4 * k
    return t


def unfold_by_definition(t, mode):
    """Column index sum_{k != n} i_k prod_{m < k, m != n} I_m, entry by entry."""
    rest = [k for k in range(t.ndim) if k != mode]
    m = np.zeros((t.shape[mode], int(np.prod([t.shape[k] for k in rest]))))
    for index in itertools.product(*[range(d) for d in t.shape]):
        col, stride = 0, 1
        for k in rest:
            col += index[k] * stride
            stride *= t.shape[k]
        m[index[mode], col] = t[index]
    return m


def random_small_tensors(rng, count, max_order=4):
    for _ in range(count):
        order = rng.integers(1, max_order + 1)
        yield rng.standard_normal(tuple(rng.integers(1, 7, size=order)))


def test_unfold_known_matrix():
    m = unfold(entries_1_to_8(), 0)
    assert_array_equal(m, [[1, 3, 5, 7], [2, 4, 6, 8]])
    assert_array_equal(fold(m, 0, (2, 2, 2)), entries_1_to_8())


def test_unfold_matches_index_map(rng):
    for t in random_small_tensors(rng, 100):
        for mode in range(t.ndim):
            assert_array_equal(unfold(t, mode), unfold_by_definition(t, mode))
            assert_array_equal(fold(unfold(t, mode), mode, t.shape), t)
            assert_allclose(frobenius_norm(unfold(t, mode)), frobenius_norm(t), rtol=1e-12)


def test_unfold_edge_cases():
    assert_array_equal(unfold(np.zeros((3, 4, 5)), 1), np.zeros((4, 15)))
    assert fold(np.array([[2.5]]), 0, (1, 1, 1)).shape == (1, 1, 1)
    with pytest.raises(InvalidModeError):
        unfold(np.zeros((2, 2, 2)), 3)
    with pytest.raises(InvalidModeError):
        unfold(np.zeros((2, 2, 2)), -1)
    with pytest.raises(DimensionError):
        fold(np.zeros((2, 3)), 0, (2, 2, 2))


def test_mode_n_product_matches_fibers(rng):
    for t in random_small_tensors(rng, 100, max_order=3):
        for mode in range(t.ndim):
            b = rng.standard_normal((3, t.shape[mode]))
            result = mode_n_product(t, b, mode)
            expected = np.moveaxis(np.tensordot(b, t, axes=(1, mode)), 0, mode)
            assert_allclose(result, expected, rtol=1e-12, atol=1e-12)
            assert_allclose(unfold(result, mode), b @ unfold(t, mode), rtol=1e-12, atol=1e-12)


def test_mode_n_product_examples(rng):
    t = rng.standard_normal((3, 4, 5))
    assert_allclose(mode_n_product(t, np.eye(4), 1), t)
    assert_array_equal(mode_n_product(np.ones((2, 2, 2)), [[1, 1]], 0), 2 * np.ones((1, 2, 2)))
    assert_array_equal(mode_n_product(t, np.zeros((3, 3)), 0), np.zeros((3, 4, 5)))
    with pytest.raises(DimensionError):
        mode_n_product(t, np.ones((2, 3)), 1)


def test_orthonormal_rows_do_not_increase_norm(rng):
    t = rng.standard_normal((6, 5, 4))
    q, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    assert frobenius_norm(mode_n_product(t, q.T, 1)) <= frobenius_norm(t) * (1 + 1e-12)


def test_khatri_rao():
    assert_array_equal(khatri_rao([[1], [2]], [[3], [4]]), [[3], [4], [6], [8]])
    a = np.arange(6.0).reshape(3, 2)
    assert_array_equal(khatri_rao(a, np.ones((1, 2))), a)
    a[:, 1] = 0
    assert_array_equal(khatri_rao(a, np.ones((4, 2)))[:, 1], np.zeros(12))
    with pytest.raises(DimensionError):
        khatri_rao(np.ones((2, 2)), np.ones((2, 3)))


def test_khatri_rao_columns_are_kronecker(rng):
    for _ in range(20):
        rank = rng.integers(1, 5)
        a = rng.standard_normal((rng.integers(1, 7), rank))
        b = rng.standard_normal((rng.integers(1, 7), rank))
        kr = khatri_rao(a, b)
        for r in range(rank):
            assert_array_equal(kr[:, r], np.kron(a[:, r], b[:, r]))


def test_khatri_rao_chain_order(rng):
    a, b, c = (rng.standard_normal((d, 2)) for d in (3, 4, 5))
    assert_array_equal(khatri_rao_chain([a, b, c], skip=0), khatri_rao(c, b))
    assert_array_equal(khatri_rao_chain([a, b, c], skip=1), khatri_rao(c, a))
    assert_array_equal(khatri_rao_chain([a, b, c]), khatri_rao(khatri_rao(c, b), a))


def test_kronecker():
    assert_array_equal(kronecker(np.eye(2), np.eye(3)), np.eye(6))
    assert_array_equal(kronecker([[1, 2]], [[3], [4]]), [[3, 6], [4, 8]])
    assert_array_equal(kronecker(np.ones((2, 2)), np.zeros((3, 1))), np.zeros((6, 2)))


def test_kronecker_vec_identity(rng):
    # (a kron b) vec(X) == vec(b X a^T) with column-major vec
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((2, 5))
    x = rng.standard_normal((5, 4))
    assert_allclose(kronecker(a, b) @ x.ravel(order='F'), (b @ x @ a.T).ravel(order='F'), rtol=1e-12)


def test_outer_rank1():
    t = outer_rank1([[1, 0], [1, 0], [1, 0]], 2.0)
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 0] = 2
    assert_array_equal(t, expected)
    assert_array_equal(outer_rank1([[1, 2], [3, 4], [5, 6]], 0.0), np.zeros((2, 2, 2)))
    t = outer_rank1([[1, 1], [1, 2], [1, 3]])
    assert t[1, 1, 1] == 6
    for i, j, k in itertools.product(range(2), repeat=3):
        assert t[i, j, k] == [1, 2][j] * [1, 3][k]


def test_reconstruct_examples(rng):
    v = [np.array([1.0, 0.0])] * 3
    kruskal = KruskalTensor([2.0], tuple(np.reshape(x, (2, 1)) for x in v))
    assert_array_equal(reconstruct(kruskal), outer_rank1(v, 2.0))

    core = rng.standard_normal((2, 3, 4))
    assert_allclose(reconstruct(TuckerTensor(core, (np.eye(2), np.eye(3), np.eye(4)))), core)

    a, b, c = (rng.standard_normal((d, 1)) for d in (3, 4, 5))
    term = BlockTerm(np.full((1, 1, 1), 1.5), (a, b, c))
    assert_allclose(reconstruct(BlockTermTensor((term,))), reconstruct(KruskalTensor([1.5], (a, b, c))),
                    rtol=1e-12)


def test_kruskal_matricized_form(rng):
    for case in range(120):
        order = 3 + case % 2
        shape = tuple(int(d) for d in rng.integers(1, 7, size=order))
        rank = int(rng.integers(1, 5))
        model = KruskalTensor(rng.standard_normal(rank), tuple(rng.standard_normal((d, rank)) for d in shape))
        full = reconstruct(model)
        for mode in range(order):
            assert_allclose(matricized_kruskal(model, mode), unfold(full, mode), rtol=1e-12, atol=1e-12)
            assert_allclose(kruskal_from_matricized(model, mode), full, rtol=1e-12, atol=1e-12)


def test_tucker_matricized_form(rng):
    for _ in range(120):
        shape = tuple(int(d) for d in rng.integers(1, 7, size=3))
        ranks = tuple(int(rng.integers(1, d + 1)) for d in shape)
        model = random_tucker(shape, ranks, rng)
        full = reconstruct(model)
        for mode in range(3):
            assert_allclose(matricized_tucker(model, mode), unfold(full, mode), rtol=1e-12, atol=1e-12)


def test_frobenius_and_relative_error():
    t = entries_1_to_8()
    assert frobenius_norm(np.zeros((2, 3))) == 0
    assert_allclose(frobenius_norm(np.ones((2, 2, 2))), np.sqrt(8))
    assert_allclose(frobenius_norm(t), np.sqrt(204))
    assert relative_error(t, t) == 0
    assert relative_error(t, np.zeros_like(t)) == 1
    approx = t.copy()
    approx[1, 1, 1] = 9
    assert_allclose(relative_error(t, approx), 1 / np.sqrt(204))
    with pytest.raises(UndefinedReferenceError):
        relative_error(np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(DimensionError):
        relative_error(t, np.zeros((2, 2)))


def test_fibers_and_slices():
    t = entries_1_to_8()
    assert_array_equal(fiber(t, 0, (0, 0)), [1, 2])
    assert_array_equal(tensor_slice(t, (0, 1), (0,)), [[1, 3], [2, 4]])
    assert_array_equal(fiber(np.full((1, 1, 1), 7.0), 2, (0, 0)), [7])
    with pytest.raises(InvalidIndexError):
        fiber(t, 0, (0, 2))
    with pytest.raises(InvalidIndexError):
        fiber(t, 0, (0,))


def test_diag_tensor(rng):
    assert_array_equal(diag_tensor([1.0], 3), np.ones((1, 1, 1)))
    d = diag_tensor([1.0, 2.0], 3)
    assert d[0, 0, 0] == 1 and d[1, 1, 1] == 2 and np.count_nonzero(d) == 2
    weights = rng.standard_normal(3)
    identity = KruskalTensor(weights, (np.eye(3),) * 3)
    assert_allclose(reconstruct(identity), diag_tensor(weights, 3))


def test_model_invariants(rng):
    with pytest.raises(ModelError):
        KruskalTensor(np.ones(2), (np.ones((3, 2)), np.ones((3, 3))))
    with pytest.raises(ModelError):
        TuckerTensor(np.ones((2, 2)), (np.ones((3, 2)), np.eye(2)))
    with pytest.raises(ModelError):
        TuckerTensor(np.ones((3, 1)), (np.eye(3)[:2], np.ones((2, 1))))
    term = BlockTerm(np.ones((2, 2, 2)), tuple(np.linalg.qr(rng.standard_normal((4, 2)))[0] for _ in range(3)))
    with pytest.raises(ModelError):
        BlockTermTensor((term,), structure='ll1')


def test_normalize_and_arrange(rng):
    model = random_kruskal((4, 5, 6), 3, rng, weights=np.array([1.0, 3.0, 2.0]))
    for f in model.factors:
        assert_allclose(np.linalg.norm(f, axis=0), 1.0)

    flipped = KruskalTensor(model.weights[[2, 0, 1]],
                            (-model.factors[0][:, [2, 0, 1]], -model.factors[1][:, [2, 0, 1]],
                             model.factors[2][:, [2, 0, 1]]))
    a, b = model.arrange(), flipped.arrange()
    assert_allclose(np.abs(a.weights), [3.0, 2.0, 1.0])
    assert_allclose(b.weights, a.weights)
    for fa, fb in zip(a.factors, b.factors):
        assert_allclose(fa, fb)
    assert_allclose(reconstruct(a), reconstruct(model), atol=1e-12)


def test_parameter_count(rng):
    assert parameter_count(random_kruskal((4, 5, 6), 3, rng)) == 3 + 3 * 15
    assert parameter_count(random_tucker((4, 5, 6), (2, 3, 2), rng)) == 12 + 8 + 15 + 12
    a, b, c = (np.linalg.qr(rng.standard_normal((d, 2)))[0] for d in (4, 5, 6))
    ll1 = BlockTermTensor((BlockTerm(np.eye(2), (a, b, c[:, :1])),), structure='ll1')
    assert parameter_count(ll1) == 8 + 10 + 6
    general = BlockTermTensor((BlockTerm(np.ones((2, 2, 2)), (a, b, c)),))
    assert parameter_count(general) == 8 + 8 + 10 + 12
