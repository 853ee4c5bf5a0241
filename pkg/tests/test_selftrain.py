"""Prototype refinement from an unlabeled pool."""

import numpy as np
import pytest

from protorestore.protocore import Prototype
from protorestore.selftrain import UnlabeledPool, refine_prototype


def pool_of(vecs, mode="external_pool"):
    return UnlabeledPool(np.asarray(vecs, dtype=np.float64), mode)


class TestUnlabeledPool:
    def test_mode_checked(self):
        with pytest.raises(ValueError):
            pool_of([[0.0]], mode="mystery")

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            UnlabeledPool(np.zeros(3), "external_pool")

    def test_without_drops_exactly_one_row(self):
        pool = pool_of([[0.0], [1.0], [2.0]], mode="leave_one_out_query")
        rest = pool.without(1)
        np.testing.assert_array_equal(rest.vectors[:, 0], [0.0, 2.0])
        assert rest.mode == pool.mode

    def test_without_bad_index(self):
        with pytest.raises(IndexError):
            pool_of([[0.0]]).without(5)


class TestRefinePrototype:
    def test_hand_worked_retrieval(self):
        # nearest of {(1,0),(4,0),(0,2)} to (0,0) is (1,0);
        # mean with the lone support point gives (0.5, 0)
        proto = Prototype(0, np.zeros(2), "raw")
        support = np.zeros((1, 2))
        pool = pool_of([[1.0, 0.0], [4.0, 0.0], [0.0, 2.0]])
        out = refine_prototype(proto, support, pool, gamma=1)
        np.testing.assert_allclose(out.vector, [0.5, 0.0])
        assert out.source == "refined"

    def test_gamma_zero_is_support_mean(self):
        proto = Prototype(3, np.array([7.0, 7.0]), "raw")
        support = np.array([[7.0, 7.0]])
        out = refine_prototype(proto, support, pool_of([[0.0, 0.0]]), gamma=0)
        np.testing.assert_array_equal(out.vector, proto.vector)

    def test_gamma_exceeding_pool_rejected(self):
        proto = Prototype(0, np.zeros(1), "raw")
        with pytest.raises(ValueError):
            refine_prototype(proto, np.zeros((1, 1)), pool_of([[1.0]]), gamma=2)

    def test_negative_gamma_rejected(self):
        proto = Prototype(0, np.zeros(1), "raw")
        with pytest.raises(ValueError):
            refine_prototype(proto, np.zeros((1, 1)), pool_of([[1.0]]), gamma=-1)

    def test_retrieval_matches_brute_force(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            dim = int(rng.integers(1, 6))
            proto_vec = rng.normal(size=dim)
            support = rng.normal(size=(int(rng.integers(1, 4)), dim))
            pool_vecs = rng.normal(size=(int(rng.integers(4, 12)), dim))
            gamma = int(rng.integers(1, 4))
            proto = Prototype(0, proto_vec, "raw")
            out = refine_prototype(proto, support, pool_of(pool_vecs), gamma)
            d = ((pool_vecs - proto_vec) ** 2).sum(axis=1)
            nearest = sorted(range(len(d)), key=lambda i: (d[i], i))[:gamma]
            want = np.vstack([support, pool_vecs[nearest]]).mean(axis=0)
            np.testing.assert_allclose(out.vector, want, atol=1e-12)

    def test_tie_breaks_to_lower_pool_index(self):
        proto = Prototype(0, np.zeros(1), "raw")
        support = np.array([[0.0]])
        pool = pool_of([[2.0], [-2.0], [1.0]])
        out = refine_prototype(proto, support, pool, gamma=2)
        # distances (4, 4, 1): picks index 2 then the tie at index 0
        np.testing.assert_allclose(out.vector, [1.0])
