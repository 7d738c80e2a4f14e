import math

import numpy as np
import pytest
import scipy.sparse as sp

from dumbbell import cross_section as cs
from dumbbell import fem
from dumbbell import mesh as M


def half_disk_mesh(n_rad, n_theta):
    """Unit half-disk about the origin (test harness for the Bessel oracle)."""
    b = M._Builder()
    b.add_polar_block(0.0, np.linspace(0, 1, n_rad + 1), 0.0, math.pi, n_theta)
    v, t = b.finish()
    edges = M._boundary_edges(t)
    tags = M._classify(v, edges, centers=(0.0,), r_out=1.0)
    return M.MeridianMesh(v, t, edges, tags, "HalfMinus",
                          {"r_out": 1.0, "dimension": 3})


class TestWeightModel:
    def test_vanishes_near_junctions_and_tube(self):
        p = fem.WeightModel()
        x = np.array([0.5, 0.0, 1.0, -2.9, 3.9, 1.5])
        r = np.array([0.1, 0.05, 0.1, 0.0, 0.0, 2.0])
        assert np.all(p(x, r) == 0.0)

    def test_positive_in_annuli(self):
        p = fem.WeightModel()
        assert p(5.5, 0.0) > 0       # |x - e1| = 4.5, right side
        assert p(-4.5, 0.0) > 0      # |x| = 4.5, left side
        assert p(5.5, 0.0) == pytest.approx(1.0)   # bump peak, a_plus
        assert p(-4.5, 0.0) == pytest.approx(0.5)  # bump peak, a_minus

    def test_annuli_gated_by_side(self):
        p = fem.WeightModel()
        # |x - e1| = 4.5 but x1 < 0: belongs to neither annulus
        assert p(-3.5, 0.0) == 0.0
        # |x| = 4.5 but x1 > 1
        assert p(4.5, 0.0) == 0.0

    def test_c1_at_support_boundary(self):
        p = fem.WeightModel()
        h = 1e-6
        for x_edge in (5.0, 6.0):  # |x-e1| = 4 and 5
            slope = (p(x_edge + h, 0.0) - p(x_edge - h, 0.0)) / (2 * h)
            assert abs(slope) < 1e-4

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-12, 13, 500)
        r = rng.uniform(0, 12, 500)
        assert np.all(fem.WeightModel()(x, r) >= 0.0)


class TestAssembly:
    def test_zero_weight_gives_zero_mass(self):
        m = M.build_profile_mesh("HalfMinus", M.MeshConfig(h0=0.5, r_out=8.0))
        sysd = fem.assemble(m, fem.WeightModel.zero())
        assert sysd.Mp_full.nnz == 0

    def test_stiffness_symmetric_exactly(self):
        m = M.build_dumbbell_mesh(M.MeshConfig(h0=0.3, eps=0.3, r_out=8.0,
                                               levels=2))
        for order in (1, 2):
            disc = fem.Discretization(m, order=order)
            K = fem.assemble_stiffness(disc)
            diff = (K - K.T).tocoo()
            assert diff.nnz == 0 or np.max(np.abs(diff.data)) == 0.0

    def test_element_integrals_against_sympy(self):
        # one reference triangle (0,0)-(1,0)-(0,1); axisymmetric forms with
        # measure rho: K_ij = int grad(phi_i).grad(phi_j) rho dA and
        # M_ij = int phi_i phi_j rho dA, integrated symbolically
        import sympy as sy

        x, r = sy.symbols("x r", nonnegative=True)
        phis = [1 - x - r, x, r]
        Ksym = np.zeros((3, 3))
        Msym = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                gi = (sy.diff(phis[i], x), sy.diff(phis[i], r))
                gj = (sy.diff(phis[j], x), sy.diff(phis[j], r))
                integrand_k = (gi[0] * gj[0] + gi[1] * gj[1]) * r
                integrand_m = phis[i] * phis[j] * r
                Ksym[i, j] = float(sy.integrate(
                    sy.integrate(integrand_k, (r, 0, 1 - x)), (x, 0, 1)))
                Msym[i, j] = float(sy.integrate(
                    sy.integrate(integrand_m, (r, 0, 1 - x)), (x, 0, 1)))

        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        tris = np.array([[0, 1, 2]])
        edges = np.array([[0, 1], [1, 2], [2, 0]])
        tags = ["axis", "dirichlet_wall", "dirichlet_wall"]
        mesh1 = M.MeridianMesh(verts, tris, edges, tags, "HalfMinus",
                               {"dimension": 3})
        disc = fem.Discretization(mesh1, order=1)
        K = fem.assemble_stiffness(disc).toarray()
        Mq = fem.assemble_mass(disc).toarray()
        assert np.max(np.abs(K - Ksym)) < 1e-14
        assert np.max(np.abs(Mq - Msym)) < 1e-14


class TestSolveDirichlet:
    def test_linear_reproduction(self):
        m = M.build_profile_mesh("HalfPlus", M.MeshConfig(h0=0.5, r_out=8.0))
        sol = fem.solve_dirichlet(
            m, {"dirichlet_wall": lambda x, r: x, "truncation": lambda x, r: x})
        assert np.abs(sol.values - sol.disc.nodes[:, 0]).max() < 1e-10
        assert sol.residual < 1e-12

    def test_zero_data_zero_rhs(self):
        m = M.build_profile_mesh("HalfMinus", M.MeshConfig(h0=0.6, r_out=8.0))
        sol = fem.solve_dirichlet(m, {"dirichlet_wall": 0.0, "truncation": 0.0})
        assert np.all(sol.values == 0.0)

    def test_manufactured_rho2_l2_order(self):
        # u = rho^2 solves -Delta_axi u = -4 (axisymmetric Laplacian of
        # rho^2 is 4); measure L2 error under refinement, expect order ~2
        m = M.build_profile_mesh("HalfMinus", M.MeshConfig(h0=0.8, r_out=8.0))
        errs = []
        for _ in range(3):
            sol = fem.solve_dirichlet(
                m, {"dirichlet_wall": lambda x, r: r**2,
                    "truncation": lambda x, r: r**2},
                rhs=lambda x, r: -4.0 * np.ones_like(x))
            disc = sol.disc
            Mass = fem.assemble_mass(disc)
            e = sol.values - disc.nodes[:, 1] ** 2
            errs.append(math.sqrt(e @ (Mass @ e)))
            m = M.refine(m)
        order1 = math.log2(errs[0] / errs[1])
        order2 = math.log2(errs[1] / errs[2])
        assert order2 > 1.7
        assert order1 > 1.5

    def test_p2_exact_for_quadratic(self):
        m = M.build_profile_mesh("HalfPlus", M.MeshConfig(h0=0.6, r_out=8.0))
        sol = fem.solve_dirichlet(
            m, {"dirichlet_wall": lambda x, r: r**2,
                "truncation": lambda x, r: r**2},
            rhs=lambda x, r: -4.0 * np.ones_like(x), order=2)
        err = np.abs(sol.values - sol.disc.nodes[:, 1] ** 2).max()
        assert err < 1e-9

    def test_self_convergence_poisson(self):
        # solve -Delta u = 1 on the dumbbell and compare energy-norm changes
        # across refinements: change should shrink by >= 1.5 per level
        m = M.build_dumbbell_mesh(M.MeshConfig(h0=0.35, eps=0.3, r_out=8.0,
                                               levels=2))
        data = {"dirichlet_wall": 0.0, "truncation": 0.0}
        rhs = lambda x, r: np.ones_like(x)
        sols, meshes = [], []
        for _ in range(3):
            sols.append(fem.solve_dirichlet(m, data, rhs=rhs))
            meshes.append(m)
            m = M.refine(m)
        changes = []
        for coarse, fine in ((0, 1), (1, 2)):
            disc_f = sols[fine].disc
            interp = sols[coarse].evaluate(disc_f.nodes[:, 0],
                                           disc_f.nodes[:, 1])
            interp = np.where(np.isnan(interp), sols[fine].values, interp)
            d = sols[fine].values - interp
            K = fem.assemble_stiffness(disc_f)
            changes.append(math.sqrt(d @ (K @ d)))
        assert changes[0] / changes[1] >= 1.5


class TestEigen:
    def test_bessel_oracle_half_disk(self):
        exact = cs.disk_ground_mode(3).lambda1
        errs = []
        for n in (8, 16, 32):
            disc = fem.Discretization(half_disk_mesh(n, 3 * n), order=2,
                                      measure_exponent=0)
            sysd = fem.assemble(disc, lambda x, r: np.ones_like(x),
                                dirichlet_tags=("truncation",))
            lam = fem.eigen_smallest(sysd, count=1)[0].lam
            errs.append(abs(lam - exact))
        assert errs[2] < 2e-3 * exact
        assert errs[0] > errs[1] > errs[2]
        # second-order boundary convergence
        assert errs[1] / errs[2] > 3.0

    def test_mass_scaling(self):
        m = M.build_profile_mesh("HalfPlus", M.MeshConfig(h0=0.3, r_out=8.0))
        disc = fem.Discretization(m, order=1)
        base = fem.WeightModel(1.0, 0.0)
        scaled = fem.WeightModel(2.0, 0.0)
        s1 = fem.assemble(disc, base)
        s2 = fem.assemble(disc, scaled)
        p1 = fem.eigen_smallest(s1, count=1, tol=1e-12)[0]
        p2 = fem.eigen_smallest(s2, count=1, tol=1e-12)[0]
        assert p2.lam == pytest.approx(p1.lam / 2.0, rel=1e-10)
        v1, v2 = p1.field.values, p2.field.values
        corr = abs(v1 @ v2) / math.sqrt((v1 @ v1) * (v2 @ v2))
        assert corr == pytest.approx(1.0, abs=1e-8)

    def test_spectra_ratio_two(self):
        lam = {}
        for kind in ("HalfPlus", "HalfMinus"):
            m = M.build_profile_mesh(kind, M.MeshConfig(h0=0.3, r_out=12.0))
            sysd = fem.assemble(m, fem.WeightModel())
            lam[kind] = fem.eigen_smallest(sysd, count=1, tol=1e-12)[0].lam
        assert lam["HalfMinus"] / lam["HalfPlus"] == pytest.approx(2.0, rel=5e-3)

    def test_symmetric_weight_near_degenerate(self):
        m = M.build_dumbbell_mesh(M.MeshConfig(h0=0.3, eps=0.25, r_out=8.0,
                                               levels=3))
        sysd = fem.assemble(m, fem.WeightModel(1.0, 1.0))
        pairs = fem.eigen_smallest(sysd, count=2, tol=1e-12)
        gap = (pairs[1].lam - pairs[0].lam) / pairs[0].lam
        assert 0.0 <= gap < 0.01

    def test_truncation_monotonicity(self):
        lams = []
        for r_out in (12.0, 16.0, 24.0):
            m = M.build_dumbbell_mesh(M.MeshConfig(h0=0.3, eps=0.25,
                                                   r_out=r_out, levels=3))
            sysd = fem.assemble(m, fem.WeightModel())
            lams.append(fem.eigen_smallest(sysd, count=1)[0].lam)
        assert lams[0] >= lams[1] >= lams[2]

    def test_rayleigh_consistency(self):
        m = M.build_profile_mesh("HalfPlus", M.MeshConfig(h0=0.3, r_out=8.0))
        sysd = fem.assemble(m, fem.WeightModel())
        pair = fem.eigen_smallest(sysd, count=1, tol=1e-13)[0]
        assert abs(pair.lam - pair.rayleigh(sysd)) / pair.lam < 1e-12

    def test_count_exceeding_rank_raises(self):
        # rank of M_p is limited by nodes inside the annulus; ask for far
        # too many modes on a tiny mesh
        m = M.build_profile_mesh("HalfPlus", M.MeshConfig(h0=1.0, r_out=7.0))
        sysd = fem.assemble(m, fem.WeightModel())
        rank_bound = int((sysd.Mp.diagonal() > 0).sum())
        with pytest.raises(Exception):
            fem.eigen_smallest(sysd, count=rank_bound + 5)

    def test_zero_mass_raises(self):
        m = M.build_profile_mesh("HalfPlus", M.MeshConfig(h0=0.6, r_out=8.0))
        sysd = fem.assemble(m, fem.WeightModel.zero())
        with pytest.raises(ValueError):
            fem.eigen_smallest(sysd, count=1)


class TestRefineEigenpair:
    def test_fixed_point(self):
        m = M.build_profile_mesh("HalfPlus", M.MeshConfig(h0=0.35, r_out=8.0))
        sysd = fem.assemble(m, fem.WeightModel())
        pair = fem.eigen_smallest(sysd, count=1, tol=1e-13)[0]
        once = fem.refine_eigenpair(sysd, pair, steps=2)
        twice = fem.refine_eigenpair(sysd, once, steps=2)
        assert abs(twice.lam - once.lam) / once.lam < 1e-14

    def test_residual_non_increasing(self):
        m = M.build_profile_mesh("HalfPlus", M.MeshConfig(h0=0.35, r_out=8.0))
        sysd = fem.assemble(m, fem.WeightModel())
        pair = fem.eigen_smallest(sysd, count=1, tol=1e-8)[0]
        refined = fem.refine_eigenpair(sysd, pair, steps=4)
        h = refined.residual_history
        assert all(h[i + 1] <= h[i] * (1 + 1e-12) for i in range(len(h) - 1))
        assert refined.residual <= pair.residual * (1 + 1e-12)

    def test_two_scale_recovery(self):
        # synthetic system with a known eigenvector spanning 12 orders of
        # magnitude: K SPD tridiagonal, Mp the rank-one choice making
        # (lam, u) an exact eigenpair of K u = lam Mp u
        n = 40
        rng = np.random.default_rng(3)
        main = 2.0 + rng.uniform(0, 0.1, n)
        K = sp.diags([main, -np.ones(n - 1), -np.ones(n - 1)],
                     [0, -1, 1]).tocsr()
        u_true = np.logspace(0, -12, n)
        lam_true = 0.7
        ku = K @ u_true
        Mp = sp.csr_matrix(np.outer(ku, ku) / (lam_true * (u_true @ ku)))

        u0 = u_true.copy()
        u0[u_true < 1e-6] *= (1 + rng.uniform(-0.5, 0.5, (u_true < 1e-6).sum()))

        class _Stub:
            n_nodes = n

        sysd = fem.AssembledSystem(_Stub(), K, Mp, K, Mp,
                                   np.arange(n), np.empty(0, dtype=np.int64))
        pair = fem.EigenPair(lam_true * 1.001,
                             fem.FieldSolution.__new__(fem.FieldSolution), 1.0)
        pair.field.disc = _Stub()
        pair.field.values = u0
        refined = fem.refine_eigenpair(sysd, pair, steps=3)
        got = refined.field.values
        got = got * (u_true[0] / got[0])
        rel = np.abs(got - u_true) / u_true
        assert rel.max() < 1e-4
        assert refined.lam == pytest.approx(lam_true, rel=1e-10)


def test_mass_normalize():
    m = M.build_profile_mesh("HalfPlus", M.MeshConfig(h0=0.35, r_out=8.0))
    sysd = fem.assemble(m, fem.WeightModel())
    pair = fem.eigen_smallest(sysd, count=1)[0]
    normed = fem.mass_normalize(sysd, pair)
    v = normed.field.values
    assert v @ (sysd.Mp_full @ v) == pytest.approx(1.0, rel=1e-12)
    # ground state positive where the weight lives
    assert normed.field.evaluate(5.5, 0.3) > 0


def test_field_evaluation_and_gradient():
    m = M.build_profile_mesh("HalfMinus", M.MeshConfig(h0=0.4, r_out=8.0))
    disc = fem.Discretization(m, order=2)
    f = fem.FieldSolution(disc, disc.nodes[:, 0] ** 2 - disc.nodes[:, 1] ** 2)
    # P2 represents quadratics exactly
    assert f.evaluate(-1.3, 0.7) == pytest.approx(1.3**2 - 0.7**2, rel=1e-12)
    g = f.gradient(-1.3, 0.7)[0]
    assert g[0] == pytest.approx(-2.6, rel=1e-10)
    assert g[1] == pytest.approx(-1.4, rel=1e-10)
    assert np.isnan(f.evaluate(5.0, 5.0))
