import math

import numpy as np
import pytest

from dumbbell import almgren as A
from dumbbell import cross_section as cs
from dumbbell import fem
from dumbbell import profiles as P
from dumbbell.mesh import MeshConfig, build_dumbbell_mesh, build_profile_mesh

MODE = cs.disk_ground_mode(3)
SL1 = MODE.sqrt_lambda1


def kernel(x1, rho):
    r2 = x1 * x1 + rho * rho
    return x1 / r2 ** 1.5


def kernel_grad(x1, rho):
    r2 = x1 * x1 + rho * rho
    gx = 1.0 / r2 ** 1.5 - 3.0 * x1 * x1 / r2 ** 2.5
    gr = -3.0 * x1 * rho / r2 ** 2.5
    return np.stack([gx, gr], axis=-1)


@pytest.fixture(scope="module")
def halfminus_wide():
    return build_profile_mesh("HalfMinus",
                              MeshConfig(h0=0.2, levels=6, r_out=24.0))


@pytest.fixture(scope="module")
def ubar_pack():
    cfg = MeshConfig(h0=0.2, levels=6, r_out=12.0)
    _, lam, _ = P.compute_u0(cfg, level=0, order=2)
    ub, _ = P.compute_Ubar(cfg, fem.WeightModel(), lam, level=0, order=2)
    return ub, lam


@pytest.fixture(scope="module")
def dumbbell_pair():
    mesh = build_dumbbell_mesh(MeshConfig(h0=0.15, eps=0.2, levels=8,
                                          r_out=12.0))
    disc = fem.Discretization(mesh, order=2)
    system = fem.assemble(disc, fem.WeightModel())
    pair = fem.eigen_smallest(system, count=1, tol=1e-12)[0]
    pair = fem.mass_normalize(system, fem.refine_eigenpair(system, pair))
    return pair


class TestFrequencyExterior:
    def test_dipole_kernel_is_two(self, halfminus_wide):
        tr = A.frequency_exterior(kernel, None, 0.0, [0.2, 0.5, 1.0],
                                  mesh=halfminus_wide, gradient=kernel_grad)
        assert np.all(np.abs(tr.N - 2.0) < 1e-3)

    def test_scaling_invariance_exact(self, halfminus_wide):
        c = 4.0  # power of two: both D and H scale exactly by c^2
        scaled = lambda x1, rho: c * kernel(x1, rho)
        sgrad = lambda x1, rho: c * kernel_grad(x1, rho)
        t1 = A.frequency_exterior(kernel, None, 0.0, [0.3, 0.9],
                                  mesh=halfminus_wide, gradient=kernel_grad)
        t2 = A.frequency_exterior(scaled, None, 0.0, [0.3, 0.9],
                                  mesh=halfminus_wide, gradient=sgrad)
        assert np.array_equal(t1.N, t2.N)

    def test_ubar_frequency_at_origin(self, ubar_pack):
        ub, lam = ubar_pack
        tr = A.frequency_exterior(ub, fem.WeightModel(), lam, [0.05])
        assert abs(tr.N[0] - 2.0) < 0.05

    def test_poincare_lower_bound(self):
        mesh = build_profile_mesh("HalfMinus", MeshConfig(h0=0.2, levels=4))
        disc = fem.Discretization(mesh, order=2)
        v = fem.solve_dirichlet(disc, {"dirichlet_wall": 0.0,
                                       "truncation": 0.0},
                                rhs=lambda x1, rho: np.ones_like(x1))
        tr = A.frequency_exterior(v, None, 0.0, [0.5, 1.0, 2.0])
        assert np.all(tr.N >= 2.0 * (1.0 - 1e-3))

    def test_empty_exterior_rejected(self, halfminus_wide):
        with pytest.raises(ValueError):
            A.frequency_exterior(kernel, None, 0.0, [25.0],
                                 mesh=halfminus_wide, gradient=kernel_grad)
        with pytest.raises(ValueError):
            A.frequency_exterior(kernel, None, 0.0, [-0.1, 0.5],
                                 mesh=halfminus_wide, gradient=kernel_grad)

    def test_analytic_field_needs_mesh(self):
        with pytest.raises(ValueError):
            A.frequency_exterior(kernel, None, 0.0, [0.5])


class TestFrequencyChannel:
    def test_pure_growing_mode(self):
        eps = 0.2
        k = SL1 / eps
        mesh = build_dumbbell_mesh(MeshConfig(h0=0.15, eps=eps, levels=8,
                                              r_out=12.0))

        def u(x1, rho):
            inside = rho <= eps
            return np.where(inside,
                            np.exp(k * (x1 - 1.0))
                            * MODE.psi1(np.minimum(rho / eps, 1.0)), 0.0)

        def du(x1, rho):
            inside = rho <= eps
            e = np.where(inside, np.exp(k * (x1 - 1.0)), 0.0)
            s = np.minimum(rho / eps, 1.0)
            return np.stack([k * e * MODE.psi1(s),
                             e * MODE.psi1_deriv(s) / eps], axis=-1)

        # section masses are exact; the residual is deg-6 quadrature of
        # e^(2kx) on tube cells with k*h ~ 1
        tr = A.frequency_channel(u, eps, [0.4, 0.6], mesh=mesh, gradient=du)
        assert np.all(np.abs(tr.N - SL1) < 1e-3)

    def test_discrete_bound_and_log_derivative(self, dumbbell_pair):
        from dumbbell import channel as ch
        eps = 0.2
        pair = dumbbell_pair
        tr = A.frequency_channel(pair.field, eps, [0.5],
                                 weight=fem.WeightModel(), lam=pair.lam)
        assert tr.N[0] <= 1.05 * SL1
        # Htilde'/Htilde = (2/eps) N_eps, differenced in log space; the
        # residual is set by tube resolution (k*h ~ 1 on this mesh)
        h = 0.02
        lp = math.log(ch.htilde(pair.field.evaluate, 0.5 + h, eps)[0])
        lm = math.log(ch.htilde(pair.field.evaluate, 0.5 - h, eps)[0])
        assert (lp - lm) / (2 * h) == pytest.approx(
            2.0 / eps * tr.N[0], rel=2e-2)

    def test_section_range_checked(self, dumbbell_pair):
        with pytest.raises(ValueError):
            A.frequency_channel(dumbbell_pair.field, 0.2, [1.2])


class TestBlowup:
    def test_right_junction_fixed_point(self):
        lin = lambda x1, rho: x1 - 1.0
        view = A.blowup(lin, "RightJunction", 0.2)
        xs = np.linspace(-2.0, 4.0, 11)
        assert np.allclose(view(xs, 0.3 * np.ones_like(xs)), xs - 1.0,
                           atol=1e-14)

    def test_channel_section_normalized(self):
        eps, x0 = 0.2, 0.5
        k = SL1 / eps
        u = lambda x1, rho: np.exp(k * (x1 - 1.0)) * MODE.psi1(
            np.minimum(rho / eps, 1.0))
        view = A.blowup(u, "Channel", eps, x0=x0)
        assert cs.section_mass(view, 1.0, 1.0) == pytest.approx(1.0,
                                                                abs=1e-10)

    def test_left_junction_section_normalized(self):
        eps = 0.2
        k = SL1 / eps
        u = lambda x1, rho: np.exp(k * (x1 - 1.0)) * MODE.psi1(
            np.minimum(rho / eps, 1.0))
        view = A.blowup(u, "LeftJunction", eps)
        assert cs.section_mass(view, 1.0, 1.0) == pytest.approx(1.0,
                                                                abs=1e-10)

    def test_normalized_unit_mass(self, dumbbell_pair):
        view = A.blowup(dumbbell_pair.field.evaluate, "Normalized", 0.2,
                        ktilde=1.0)
        assert cs.half_sphere_mass(view, 0.0, 1.0, -1) == pytest.approx(
            1.0, abs=1e-10)

    def test_parameter_validation(self):
        u = lambda x1, rho: np.ones_like(x1)
        with pytest.raises(ValueError):
            A.blowup(u, "NoSuchKind", 0.2)
        with pytest.raises(ValueError):
            A.blowup(u, "Channel", 0.2)
        with pytest.raises(ValueError):
            A.blowup(u, "Normalized", 0.2)
        with pytest.raises(ValueError):
            A.blowup(u, "Channel", 0.7, x0=0.5)
        zero = lambda x1, rho: np.zeros_like(x1)
        with pytest.raises(ValueError):
            A.blowup(zero, "Channel", 0.2, x0=0.5)


class TestCompareViews:
    def test_self_comparison_is_zero(self):
        u = lambda x1, rho: np.sin(x1) * rho
        x = np.linspace(0.0, 1.0, 20)
        out = A.compare_views(u, u, x, x)
        assert out["sup"] == 0.0 and out["l2"] == 0.0

    def test_known_offset(self):
        u = lambda x1, rho: np.zeros_like(x1)
        v = lambda x1, rho: np.full_like(x1, 0.25)
        x = np.linspace(0.0, 1.0, 20)
        out = A.compare_views(u, v, x, x)
        assert out["sup"] == pytest.approx(0.25)
        assert out["l2"] == pytest.approx(0.25)

    def test_nan_samples_dropped(self):
        u = lambda x1, rho: np.where(x1 > 0.5, np.nan, 1.0)
        v = lambda x1, rho: np.ones_like(x1)
        x = np.linspace(0.0, 1.0, 21)
        out = A.compare_views(u, v, x, x)
        assert out["sup"] == 0.0
        assert out["samples"] == int(np.sum(x <= 0.5))

    def test_all_invalid_rejected(self):
        u = lambda x1, rho: np.full_like(x1, np.nan)
        with pytest.raises(ValueError):
            A.compare_views(u, u, np.array([0.1]), np.array([0.1]))
