import numpy as np
import pytest

from pointscat import green as G
from pointscat import krein as K
from pointscat.gamma import PointConfig
from pointscat.green import DomainError


@pytest.fixture
def packet():
    return G.WavePacket(G.BumpProfile(1.0, 2.0))


@pytest.fixture
def eval_pts():
    return np.array([[0.5, 0.2, 0.1], [1.5, -0.3, 0.7], [3.0, 1.0, -1.0]])


def box_grid(n, half_width):
    h = 2 * half_width / n
    xs = -half_width + h * (np.arange(n) + 0.5)
    x, y, z = np.meshgrid(xs, xs, xs, indexing="ij")
    nodes = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=-1)
    return nodes, np.full(len(nodes), h**3)


class TestApplyPointResolvent:
    def test_infinite_strength_is_free(self, packet, eval_pts):
        cfg = PointConfig(((0, 0, 0), (1.2, 0, 0)), (1e8, 1e8))
        out = K.apply_point_resolvent(cfg, 2j, packet, eval_pts)
        free = G.free_resolvent_packet(packet, 2j, eval_pts)
        assert np.abs(out - free).max() / np.abs(free).max() < 1e-6

    def test_single_center_rank_one(self, packet, eval_pts):
        # the correction is a single multiple of the kernel column
        cfg = PointConfig((0.0, 0.0, 0.0), -1.0 / (4 * np.pi))
        out = K.apply_point_resolvent(cfg, 2j, packet, eval_pts)
        free = G.free_resolvent_packet(packet, 2j, eval_pts)
        col = np.array([G.kernel_eval(2j, p) for p in eval_pts])
        ratios = (out - free) / col
        assert np.abs(ratios - ratios[0]).max() < 1e-12 * abs(ratios[0])

    def test_symmetry_on_imaginary_axis(self):
        nodes, w = box_grid(6, 2.0)
        cfg = PointConfig(((0.3, 0, 0), (-0.6, 0.4, 0)), (0.2, -0.1))
        rng = np.random.default_rng(20)
        u = rng.normal(size=len(nodes))
        v = rng.normal(size=len(nodes))
        ru = K.apply_point_resolvent(cfg, 1.5j, u, nodes, nodes, w)
        rv = K.apply_point_resolvent(cfg, 1.5j, v, nodes, nodes, w)
        assert abs(np.sum(w * ru * v) - np.sum(w * u * rv)) < 1e-13

    def test_real_kernel_on_imaginary_axis(self):
        nodes, w = box_grid(6, 2.0)
        cfg = PointConfig(((0.3, 0, 0), (-0.6, 0.4, 0)), (0.2, -0.1))
        rng = np.random.default_rng(21)
        u = rng.normal(size=len(nodes))
        ru = K.apply_point_resolvent(cfg, 1.5j, u, nodes, nodes, w)
        assert np.abs(ru.imag).max() < 1e-14

    def test_near_bound_state_raises(self, packet, eval_pts):
        # kappa = 1 is a bound state for alpha = -1/(4 pi)
        cfg = PointConfig((0.0, 0.0, 0.0), -1.0 / (4 * np.pi))
        with pytest.raises(K.NearSingularGammaError) as exc:
            K.apply_point_resolvent(cfg, 1e-14 + 1j, packet, eval_pts)
        assert exc.value.cond > 1e10

    def test_lower_half_plane_rejected(self, packet, eval_pts):
        cfg = PointConfig((0.0, 0.0, 0.0), 0.1)
        with pytest.raises(DomainError):
            K.apply_point_resolvent(cfg, 1.5, packet, eval_pts)

    def test_center_evaluation_rejected(self, packet):
        cfg = PointConfig((0.0, 0.0, 0.0), 0.1)
        with pytest.raises(DomainError):
            K.apply_point_resolvent(cfg, 2j, packet, [[0.0, 0.0, 0.0]])

    def test_correction_rank_bounded(self, packet):
        # correction on many points spans at most N kernel columns
        cfg = PointConfig(((0, 0, 0), (1, 0, 0), (0, 1, 0)), (0.1, 0.2, -0.1))
        rng = np.random.default_rng(22)
        pts = rng.uniform(1.5, 3.0, size=(12, 3))
        out = K.apply_point_resolvent(cfg, 2j, packet, pts)
        free = G.free_resolvent_packet(packet, 2j, pts)
        cols = np.stack([G.kernel_eval(2j, pts - np.asarray(c))
                         for c in cfg.centers], axis=-1)
        coef, *_ = np.linalg.lstsq(cols, out - free, rcond=None)
        assert np.abs(cols @ coef - (out - free)).max() < 1e-12


class TestFirstResolventIdentity:
    def test_equal_arguments_zero(self):
        nodes, w = box_grid(6, 2.0)
        cfg = PointConfig((0.0, 0.0, 0.0), 0.1)
        f = np.exp(-np.sum(nodes**2, axis=-1))
        assert K.first_resolvent_residual(cfg, 2j, 2j, f, nodes, w) == 0.0

    @pytest.mark.slow
    def test_residual_decreases_under_refinement(self):
        cfg = PointConfig(((0.3, 0, 0), (-0.6, 0.4, 0)), (0.2, -0.1))
        resids = []
        for n in (6, 8, 10):
            nodes, w = box_grid(n, 3.0)
            f = np.exp(-np.sum(nodes**2, axis=-1))
            resids.append(K.first_resolvent_residual(cfg, 2j, 3j, f, nodes, w))
        assert resids[0] > resids[1] > resids[2]
        assert resids[-1] < 0.1

    def test_infinite_strength_matches_free_identity(self):
        # with huge alpha the correction is negligible and the residual
        # coincides with the free-resolvent identity residual
        nodes, w = box_grid(6, 3.0)
        f = np.exp(-np.sum(nodes**2, axis=-1))
        cfg = PointConfig((0.0, 0.0, 0.0), 1e8)
        r_point = K.first_resolvent_residual(cfg, 2j, 3j, f, nodes, w)
        r1 = G.apply_free_resolvent(2j, f, nodes, w)
        r2 = G.apply_free_resolvent(3j, f, nodes, w)
        r12 = G.apply_free_resolvent(2j, r2, nodes, w)
        free_resid = np.sqrt(np.sum(w * np.abs(r1 - r2 - ((2j)**2 - (3j)**2) * r12)**2))
        assert r_point == pytest.approx(free_resid, rel=1e-6)
