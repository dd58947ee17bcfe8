import math

import numpy as np
import pytest
from conftest import random_cells, random_field

from viscomem.mac import (
    SolverError,
    StaggeredGrid,
    VelocityField,
    advect,
    advection_matrix,
    divergence,
    gradient,
    helmholtz_solve,
    inner,
    laplacian,
    leray_project,
    mu0_estimate,
    norms,
    poincare_constant,
    pressure_poisson_solve,
    read_snapshot,
    stokes_operator,
    write_snapshot,
)
from viscomem.manufactured import StreamProfile, named_profile


def test_grid_validation():
    with pytest.raises(ValueError):
        StaggeredGrid(3, 8)
    with pytest.raises(ValueError):
        StaggeredGrid(8, 8, Lx=0.0)
    g = StaggeredGrid(8, 4, 2.0, 1.0)
    assert g.hx == 0.25 and g.hy == 0.25
    assert g.size == 7 * 4 + 8 * 3


def test_field_layout(grid):
    u = np.arange(grid.nu, dtype=float).reshape(grid.u_shape)
    v = -np.arange(grid.nv, dtype=float).reshape(grid.v_shape)
    w = VelocityField.from_components(grid, u, v)
    assert np.array_equal(w.u[1:-1], u) and np.all(w.u[[0, -1]] == 0)
    assert np.array_equal(w.v[:, 1:-1], v) and np.all(w.v[:, [0, -1]] == 0)
    assert np.array_equal(VelocityField.from_components(grid, w.u, w.v).data, w.data)
    with pytest.raises(ValueError):
        VelocityField(grid, np.zeros(3))


class TestDivergenceGradient:
    def test_divergence_of_linear_field(self):
        g = StaggeredGrid(10, 10)
        w = VelocityField.from_functions(g, lambda x, y: x * (1 - x) * 0 + 0.0 * y, lambda x, y: 0 * x)
        assert np.all(divergence(w) == 0)
        # (x, -y) in the interior; walls cut it off, so test interior cells only
        w = VelocityField.from_functions(g, lambda x, y: x + 0 * y, lambda x, y: -y + 0 * x)
        assert np.max(np.abs(divergence(w)[1:-1, 1:-1])) <= 1e-13

    def test_divergence_of_curl_is_second_order(self):
        errs = []
        for n in (16, 32, 64):
            g = StaggeredGrid(n, n)
            w = VelocityField.from_functions(
                g,
                lambda x, y: np.sin(np.pi * x) * np.pi * np.cos(np.pi * y),
                lambda x, y: -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
            )
            errs.append(np.max(np.abs(divergence(w))))
        assert max(errs) <= 1e-12 or all(e2 <= e1 / 3 for e1, e2 in zip(errs, errs[1:]))

    def test_gradient_examples(self):
        g = StaggeredGrid(8, 6)
        assert np.all(gradient(np.full((8, 6), 3.0), g).data == 0)
        xc, _ = g.cell_coords()
        gq = gradient(xc, g)
        assert np.allclose(gq.u_int, 1.0, atol=1e-13)
        assert np.allclose(gq.v_int, 0.0, atol=1e-13)

    def test_adjointness(self, grid, rng):
        for _ in range(20):
            q, w = random_cells(grid, rng), random_field(grid, rng)
            lhs = inner(gradient(q, grid), w, grid)
            rhs = -inner(q, divergence(w), grid)
            assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + norms(w)["l2"] * math.sqrt(inner(q, q, grid)))


class TestLaplacian:
    def test_symmetry_and_definiteness(self, grid, rng):
        for _ in range(20):
            a, b = random_field(grid, rng), random_field(grid, rng)
            lab = inner(laplacian(a), b, grid)
            assert abs(lab - inner(a, laplacian(b), grid)) <= 1e-12 * abs(inner(laplacian(a), a, grid))
            assert inner(laplacian(a), a, grid) < 0

    def test_h1_matches_form(self, grid, rng):
        w = random_field(grid, rng)
        assert norms(w)["h1_semi"] ** 2 == pytest.approx(-inner(laplacian(w), w, grid), rel=1e-12)

    def test_eigenvalue_pattern(self):
        n = 16
        g = StaggeredGrid(n, n)
        h = 1.0 / n
        for k, m in [(1, 1), (2, 3)]:
            # v-component eigenfield: sine in y at faces (Dirichlet nodes), sine in x at centres (ghost reflection)
            w = VelocityField.from_functions(
                g, lambda x, y: 0 * x, lambda x, y: np.sin(k * np.pi * x) * np.sin(m * np.pi * y)
            )
            lw = laplacian(w)
            rq = inner(lw, w, g) / inner(w, w, g)
            expected = -(2 / h**2) * (2 - math.cos(k * np.pi * h) - math.cos(m * np.pi * h))
            assert rq == pytest.approx(expected, rel=0.02)
            assert norms(w)["h1_semi"] ** 2 / norms(w)["l2"] ** 2 == pytest.approx(-rq, rel=1e-12)


class TestAdvection:
    def test_zero(self, grid, rng):
        assert np.all(advect(random_field(grid, rng), VelocityField.zeros(grid)).data == 0)

    def test_skew_symmetry(self, grid, rng):
        for _ in range(20):
            a, w = random_field(grid, rng), random_field(grid, rng)
            val = inner(advect(a, w), w, grid)
            scale = norms(a)["l2"] * norms(w)["l2"] * norms(w)["h1_semi"]
            assert abs(val) <= 1e-12 * scale

    def test_matrix_forms(self, grid, rng):
        a, w = random_field(grid, rng), random_field(grid, rng)
        ref = advect(a, w).data
        assert np.allclose(advection_matrix(a=a) @ w.data, ref, rtol=1e-12, atol=1e-12)
        assert np.allclose(advection_matrix(w=w) @ a.data, ref, rtol=1e-12, atol=1e-12)

    def test_consistency_with_convection(self):
        errs = []
        for n in (16, 32, 64):
            g = StaggeredGrid(n, n)
            prof = StreamProfile(g, 10.0)
            w = prof.velocity()
            e = advect(w, w) - prof.convection()
            interior = VelocityField.from_components(g, e.u_int * _interior_mask(g)[0], e.v_int * _interior_mask(g)[1])
            errs.append(norms(interior)["l2"])
        orders = [math.log2(e1 / e2) for e1, e2 in zip(errs, errs[1:])]
        assert min(orders) >= 1.8


def _interior_mask(g):
    mu = np.ones(g.u_shape)
    mu[:, [0, -1]] = 0
    mv = np.ones(g.v_shape)
    mv[[0, -1], :] = 0
    return mu, mv


class TestSolvers:
    @pytest.mark.parametrize("a, nu", [(1.0, 0.0), (3.0, 0.5), (0.0, 2.0), (100.0, 1e-3)])
    def test_helmholtz_round_trip(self, grid, rng, a, nu):
        x = random_field(grid, rng)
        rhs = x * a - laplacian(x) * nu
        sol = helmholtz_solve(a, nu, rhs)
        assert norms(sol - x)["l2"] <= 1e-11 * norms(x)["l2"]
        res = sol * a - laplacian(sol) * nu - rhs
        assert norms(res)["l2"] <= 1e-11 * norms(rhs)["l2"]

    def test_helmholtz_pure_mass(self, grid, rng):
        rhs = random_field(grid, rng)
        assert np.allclose(helmholtz_solve(4.0, 0.0, rhs).data, rhs.data / 4.0, rtol=1e-15)

    def test_fast_and_cg_agree(self, grid, rng):
        rhs = random_field(grid, rng)
        fast = helmholtz_solve(2.0, 0.7, rhs)
        slow = helmholtz_solve(2.0, 0.7, rhs, method="cg")
        assert norms(fast - slow)["l2"] <= 1e-9 * norms(fast)["l2"]

    def test_helmholtz_rejects_degenerate(self, grid, rng):
        with pytest.raises(ValueError):
            helmholtz_solve(0.0, 0.0, random_field(grid, rng))

    def test_cg_cap_raises_solver_error(self, grid, rng):
        with pytest.raises(SolverError) as info:
            helmholtz_solve(0.0, 1.0, random_field(grid, rng), method="cg", maxiter=2)
        assert info.value.residual is not None

    def test_poisson(self, grid, rng):
        assert np.all(pressure_poisson_solve(np.zeros((grid.nx, grid.ny)), grid) == 0)
        phi = random_cells(grid, rng)
        phi -= phi.mean()
        rhs = -divergence(gradient(phi, grid))
        sol, mean = pressure_poisson_solve(rhs, grid, return_mean=True)
        assert abs(mean) <= 1e-12 * np.abs(rhs).max()
        assert np.max(np.abs(sol - phi)) <= 1e-10 * np.abs(phi).max()
        slow = pressure_poisson_solve(rhs, grid, method="cg")
        assert np.max(np.abs(slow - sol)) <= 1e-9 * np.abs(sol).max()

    def test_poisson_removes_mean(self, grid, rng):
        rhs = random_cells(grid, rng) + 5.0
        sol, mean = pressure_poisson_solve(rhs, grid, return_mean=True)
        assert mean == pytest.approx(rhs.mean())
        assert abs(sol.mean()) <= 1e-13 * np.abs(sol).max()
        res = -divergence(gradient(sol, grid)) - (rhs - mean)
        assert np.linalg.norm(res) <= 1e-11 * np.linalg.norm(rhs - mean)


class TestProjection:
    def test_properties(self, grid, rng):
        h = min(grid.hx, grid.hy)
        for _ in range(10):
            w = random_field(grid, rng)
            pw = leray_project(w)
            assert np.abs(divergence(pw)).max() <= 1e-10 * norms(w)["l2"] / h
            assert norms(leray_project(pw) - pw)["l2"] <= 1e-10 * norms(w)["l2"]

    def test_divergence_free_unchanged_and_gradients_removed(self, grid, rng):
        w = named_profile("sines", grid)
        assert norms(leray_project(w) - w)["l2"] <= 1e-10 * norms(w)["l2"]
        gq = gradient(random_cells(grid, rng), grid)
        assert norms(leray_project(gq))["l2"] <= 1e-10 * norms(gq)["l2"]

    def test_orthogonal(self, grid, rng):
        w = random_field(grid, rng)
        pw = leray_project(w)
        assert abs(inner(pw, w - pw, grid)) <= 1e-11 * norms(w)["l2"] ** 2


class TestNorms:
    def test_zero(self, grid):
        assert norms(VelocityField.zeros(grid)) == {"l2": 0.0, "h1_semi": 0.0, "a_norm": 0.0}
        c = norms(np.zeros((grid.nx, grid.ny)), grid)
        assert c["l2"] == 0.0 and c["h1_semi"] == 0.0

    def test_positive_for_nonzero(self, grid, rng):
        n = norms(random_field(grid, rng))
        assert min(n.values()) > 0
        with pytest.raises(ValueError):
            norms(np.ones((grid.nx, grid.ny)))

    def test_stokes_operator_energy(self, grid, rng):
        v = leray_project(random_field(grid, rng))
        lhs = inner(stokes_operator(v), v, grid)
        assert lhs == pytest.approx(norms(v)["h1_semi"] ** 2, rel=1e-11)

    def test_discrete_poincare_inequality(self, grid, rng):
        gamma0 = poincare_constant(grid)
        for _ in range(10):
            v = random_field(grid, rng)
            n = norms(v)
            assert gamma0 * n["l2"] ** 2 <= n["h1_semi"] ** 2 * (1 + 1e-12)


class TestConstants:
    def test_poincare_unit_square(self):
        h = 1 / 64
        val = poincare_constant(StaggeredGrid(64, 64))
        assert val == pytest.approx(2 * math.pi**2, rel=0.01)
        # lowest mode: u-type sine in x (Dirichlet nodes) combined with the ghost-reflected y direction
        assert val < 2 * math.pi**2

    def test_poincare_rectangle(self):
        val = poincare_constant(StaggeredGrid(64, 32, 2.0, 1.0))
        assert val == pytest.approx(math.pi**2 * (0.25 + 1.0), rel=0.01)

    def test_mu0_zero_state(self, grid):
        assert mu0_estimate(VelocityField.zeros(grid), 0.7) == 0.7

    def test_mu0_small_flow(self):
        g = StaggeredGrid(8, 8)
        ubar = named_profile("poly", g, 5.0)
        est = mu0_estimate(ubar, 1.0, trials=8, seed=0)
        assert 0.0 < est < 1.0

    def test_mu0_monotone_in_scale(self):
        g = StaggeredGrid(8, 8)
        base = named_profile("sines", g, 1.0)
        vals = [mu0_estimate(base * c, 1.0, trials=4, seed=3) for c in (0.0, 0.5, 1.0, 2.0, 4.0)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


class TestSnapshots:
    @pytest.mark.parametrize("fmt", ["csv", "bin"])
    def test_round_trip(self, tmp_path, grid, rng, fmt):
        w = random_field(grid, rng)
        q = random_cells(grid, rng)
        write_snapshot(tmp_path / f"w.{fmt}", w, role="velocity", time=1.25, fmt=fmt)
        write_snapshot(tmp_path / f"q.{fmt}", q, grid, role="pressure", time=0.5, fmt=fmt)
        w2, g2, meta = read_snapshot(tmp_path / f"w.{fmt}")
        assert g2 == grid and np.array_equal(w2.data, w.data)
        assert meta["role"] == "velocity" and meta["time"] == 1.25
        q2, _, meta = read_snapshot(tmp_path / f"q.{fmt}")
        assert np.array_equal(q2, q) and meta["role"] == "pressure"

    def test_bad_format(self, tmp_path, grid):
        with pytest.raises(ValueError):
            write_snapshot(tmp_path / "x", VelocityField.zeros(grid), fmt="xml")
