import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointscat import opalg as OA
from pointscat.green import DomainError


def rand_complex(rng, shape, scale=1.0):
    return scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape))


def rand_projection(rng, n, rank):
    q, _ = np.linalg.qr(rand_complex(rng, (n, n)))
    basis = q[:, :rank]
    return basis @ basis.conj().T


class TestProjectedInversion:
    def test_matches_direct_inverse(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            n = rng.integers(2, 8)
            a = rand_complex(rng, (n, n)) + 2 * np.eye(n)
            s = rand_projection(rng, n, rng.integers(1, n))
            inv, report = OA.jn_invert(a, s)
            assert report is None
            assert np.linalg.norm(inv - np.linalg.inv(a)) < 1e-10

    def test_zero_projection_path(self):
        rng = np.random.default_rng(11)
        a = rand_complex(rng, (4, 4)) + 2 * np.eye(4)
        inv, report = OA.jn_invert(a, np.zeros((4, 4)))
        assert report is None
        assert np.linalg.norm(inv - np.linalg.inv(a)) < 1e-12

    def test_singular_input_detected(self):
        # rank-deficient A with A + S invertible: the reduced factor is
        # singular on range(S) and the verdict reports it
        rng = np.random.default_rng(12)
        n = 5
        q, _ = np.linalg.qr(rand_complex(rng, (n, n)))
        a = q[:, :n - 1] @ np.diag(rng.uniform(1, 2, n - 1)) @ q[:, :n - 1].conj().T
        s = np.outer(q[:, n - 1], q[:, n - 1].conj())
        inv, report = OA.jn_invert(a, s)
        assert inv is None
        assert report["verdict"] == "singular"

    def test_non_projection_rejected(self):
        rng = np.random.default_rng(13)
        a = np.eye(3, dtype=complex)
        with pytest.raises(DomainError):
            OA.jn_invert(a, 0.5 * np.eye(3))


class TestFiniteRankReduction:
    def test_residual_small_random(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            m, n = int(rng.integers(5, 30)), int(rng.integers(1, 5))
            lt = rand_complex(rng, (m, m), 0.5)
            b = rand_complex(rng, (m, n))
            gh = rand_complex(rng, (n, n), 0.3)
            ar = rand_complex(rng, (n, m))
            assert OA.reduction_residual(lt, b, gh, ar) < 1e-10

    def test_small_factor_shape(self):
        rng = np.random.default_rng(15)
        f = OA.deift_reduce(rand_complex(rng, (8, 8), 0.2),
                            rand_complex(rng, (8, 3)),
                            rand_complex(rng, (3, 3), 0.2),
                            rand_complex(rng, (3, 8)))
        assert f.shape == (3, 3)


class TestBlockInverse:
    def test_matches_bruteforce(self):
        rng = np.random.default_rng(16)
        for _ in range(20):
            n1, n2 = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            v = rand_complex(rng, (n2, n2)) + 2 * np.eye(n2)
            w = rand_complex(rng, (n1, n1), 0.4)
            x = rand_complex(rng, (n1, n2), 0.4)
            y = rand_complex(rng, (n2, n1), 0.4)
            z = rand_complex(rng, (n2, n2), 0.4)
            full = OA.block_inverse(v, z, upper_size=n1)
            oracle = OA.block_inverse_bruteforce(v, w, x, y, z)
            assert np.linalg.norm(full - oracle) < 1e-10

    def test_upper_blocks_do_not_enter(self):
        rng = np.random.default_rng(17)
        n1, n2 = 3, 4
        v = rand_complex(rng, (n2, n2)) + 2 * np.eye(n2)
        z = rand_complex(rng, (n2, n2), 0.3)
        ref = None
        for _ in range(3):
            w = rand_complex(rng, (n1, n1))
            x = rand_complex(rng, (n1, n2))
            y = rand_complex(rng, (n2, n1))
            oracle = OA.block_inverse_bruteforce(v, w, x, y, z)
            if ref is None:
                ref = oracle
            assert np.linalg.norm(oracle - ref) < 1e-11

    def test_zero_perturbation(self):
        rng = np.random.default_rng(18)
        v = rand_complex(rng, (4, 4)) + 2 * np.eye(4)
        out = OA.block_inverse(v, np.zeros((4, 4)))
        assert np.linalg.norm(out - v) < 1e-11

    def test_singular_v_raises(self):
        with pytest.raises(OA.SingularFactorError):
            OA.block_inverse(np.zeros((3, 3)), np.eye(3))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_identities_random_seeds(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    a = rand_complex(rng, (n, n)) + 2.5 * np.eye(n)
    s = rand_projection(rng, n, int(rng.integers(1, n)))
    inv, report = OA.jn_invert(a, s)
    assert report is None
    assert np.linalg.norm(a @ inv - np.eye(n)) < 1e-9
