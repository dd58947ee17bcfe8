"""Marker-and-cell discretization of a rectangle with no-slip walls.

Velocity unknowns live on cell faces (``u`` on vertical faces, ``v`` on
horizontal faces) and pressure at cell centres.  Normal velocity on the
walls is identically zero and is not stored; tangential wall values are
imposed through reflected ghost values.  All operators act on the flat
vector of interior face unknowns, ``u`` block first, both blocks in C order
with the x index slowest.
"""

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy import fft
from scipy.sparse.linalg import LinearOperator, cg, lobpcg

__all__ = [
    "SolverError",
    "StaggeredGrid",
    "VelocityField",
    "divergence",
    "gradient",
    "laplacian",
    "advect",
    "advection_matrix",
    "helmholtz_solve",
    "pressure_poisson_solve",
    "leray_project",
    "inner",
    "norms",
    "poincare_constant",
    "mu0_estimate",
    "write_snapshot",
    "read_snapshot",
]


class SolverError(RuntimeError):
    """An iterative solve stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, estimate=None):
        super().__init__(message)
        self.residual = residual
        self.estimate = estimate


def _second_diff(n, h, ghost=False):
    main = np.full(n, -2.0)
    if ghost:
        main[0] = main[-1] = -3.0
    return sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format="csr") / h**2


def _central_diff(n, h, ghost=False):
    m = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="lil")
    if ghost:
        m[0, 0] = 1.0
        m[n - 1, n - 1] = -1.0
    return m.tocsr() / (2.0 * h)


@dataclass(frozen=True)
class StaggeredGrid:
    """Uniform MAC grid on ``(0, Lx) x (0, Ly)`` with ``nx x ny`` cells."""

    nx: int
    ny: int
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs integer nx, ny >= 4, got ({self.nx!r}, {self.ny!r})")
        if not (self.Lx > 0.0 and self.Ly > 0.0):
            raise ValueError("domain lengths must be positive")

    @property
    def hx(self):
        return self.Lx / self.nx

    @property
    def hy(self):
        return self.Ly / self.ny

    @property
    def cell_area(self):
        return self.hx * self.hy

    @property
    def nu(self):
        return (self.nx - 1) * self.ny

    @property
    def nv(self):
        return self.nx * (self.ny - 1)

    @property
    def size(self):
        return self.nu + self.nv

    @property
    def ncell(self):
        return self.nx * self.ny

    @property
    def u_shape(self):
        return (self.nx - 1, self.ny)

    @property
    def v_shape(self):
        return (self.nx, self.ny - 1)

    def u_coords(self):
        """Coordinates of interior vertical faces, each of shape ``u_shape``."""
        x = self.hx * np.arange(1, self.nx)
        y = self.hy * (np.arange(self.ny) + 0.5)
        return np.meshgrid(x, y, indexing="ij")

    def v_coords(self):
        x = self.hx * (np.arange(self.nx) + 0.5)
        y = self.hy * np.arange(1, self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def cell_coords(self):
        x = self.hx * (np.arange(self.nx) + 0.5)
        y = self.hy * (np.arange(self.ny) + 0.5)
        return np.meshgrid(x, y, indexing="ij")

    # sparse operators, built once per grid

    @cached_property
    def div_matrix(self):
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        cell = np.arange(self.ncell).reshape(nx, ny)
        rows, cols, vals = [], [], []
        uidx = np.arange(self.nu).reshape(self.u_shape)
        # face i (1..nx-1) is the right face of cell i-1 and the left face of cell i
        rows += [cell[:-1, :].ravel(), cell[1:, :].ravel()]
        cols += [uidx.ravel(), uidx.ravel()]
        vals += [np.full(self.nu, 1.0 / hx), np.full(self.nu, -1.0 / hx)]
        vidx = self.nu + np.arange(self.nv).reshape(self.v_shape)
        rows += [cell[:, :-1].ravel(), cell[:, 1:].ravel()]
        cols += [vidx.ravel(), vidx.ravel()]
        vals += [np.full(self.nv, 1.0 / hy), np.full(self.nv, -1.0 / hy)]
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.ncell, self.size),
        )

    @cached_property
    def grad_matrix(self):
        return (-self.div_matrix.T).tocsr()

    @cached_property
    def lap_matrix(self):
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        lu = sp.kron(_second_diff(nx - 1, hx), sp.identity(ny)) + sp.kron(
            sp.identity(nx - 1), _second_diff(ny, hy, ghost=True)
        )
        lv = sp.kron(_second_diff(nx, hx, ghost=True), sp.identity(ny - 1)) + sp.kron(
            sp.identity(nx), _second_diff(ny - 1, hy)
        )
        return sp.block_diag([lu, lv], format="csr")

    @cached_property
    def _advection_parts(self):
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        dxu = sp.kron(_central_diff(nx - 1, hx), sp.identity(ny), format="csr")
        dyu = sp.kron(sp.identity(nx - 1), _central_diff(ny, hy, ghost=True), format="csr")
        dxv = sp.kron(_central_diff(nx, hx, ghost=True), sp.identity(ny - 1), format="csr")
        dyv = sp.kron(sp.identity(nx), _central_diff(ny - 1, hy), format="csr")
        # four-point averages of the other component onto each face
        ii, jj = np.meshgrid(np.arange(1, nx), np.arange(ny), indexing="ij")
        rows, cols = [], []
        for di in (-1, 0):
            for dj in (0, 1):
                ci, cj = ii + di, jj + dj
                ok = (cj >= 1) & (cj <= ny - 1)
                rows.append(((ii - 1) * ny + jj)[ok])
                cols.append((ci * (ny - 1) + cj - 1)[ok])
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        avg_vu = sp.csr_matrix((np.full(rows.size, 0.25), (rows, cols)), shape=(self.nu, self.nv))
        ii, jj = np.meshgrid(np.arange(nx), np.arange(1, ny), indexing="ij")
        rows, cols = [], []
        for di in (0, 1):
            for dj in (-1, 0):
                ci, cj = ii + di, jj + dj
                ok = (ci >= 1) & (ci <= nx - 1)
                rows.append((ii * (ny - 1) + jj - 1)[ok])
                cols.append(((ci - 1) * ny + cj)[ok])
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        avg_uv = sp.csr_matrix((np.full(rows.size, 0.25), (rows, cols)), shape=(self.nv, self.nu))
        return dict(
            dxu=dxu, dyu=dyu, dxv=dxv, dyv=dyv,
            dxu_t=dxu.T.tocsr(), dyu_t=dyu.T.tocsr(), dxv_t=dxv.T.tocsr(), dyv_t=dyv.T.tocsr(),
            avg_vu=avg_vu, avg_uv=avg_uv,
        )

    @cached_property
    def _helmholtz_eigs(self):
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        nodes_x = (2.0 / hx * np.sin(np.arange(1, nx) * np.pi / (2 * nx))) ** 2
        ghost_x = (2.0 / hx * np.sin(np.arange(1, nx + 1) * np.pi / (2 * nx))) ** 2
        nodes_y = (2.0 / hy * np.sin(np.arange(1, ny) * np.pi / (2 * ny))) ** 2
        ghost_y = (2.0 / hy * np.sin(np.arange(1, ny + 1) * np.pi / (2 * ny))) ** 2
        return nodes_x[:, None] + ghost_y[None, :], ghost_x[:, None] + nodes_y[None, :]

    @cached_property
    def _poisson_eigs(self):
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        ex = (2.0 / hx * np.sin(np.arange(nx) * np.pi / (2 * nx))) ** 2
        ey = (2.0 / hy * np.sin(np.arange(ny) * np.pi / (2 * ny))) ** 2
        lam = ex[:, None] + ey[None, :]
        lam[0, 0] = 1.0
        return lam


class VelocityField:
    """Face-centred velocity with zero normal component on the walls."""

    __slots__ = ("grid", "data")

    def __init__(self, grid, data=None):
        self.grid = grid
        if data is None:
            data = np.zeros(grid.size)
        data = np.asarray(data, dtype=float)
        if data.shape != (grid.size,):
            raise ValueError(f"expected {grid.size} interior face values, got shape {data.shape}")
        self.data = data

    @classmethod
    def zeros(cls, grid):
        return cls(grid)

    @classmethod
    def from_components(cls, grid, u, v):
        """Build from interior (``u_shape``/``v_shape``) or full face arrays."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if u.shape == (grid.nx + 1, grid.ny):
            u = u[1:-1]
        if v.shape == (grid.nx, grid.ny + 1):
            v = v[:, 1:-1]
        if u.shape != grid.u_shape or v.shape != grid.v_shape:
            raise ValueError("component arrays do not match the grid")
        return cls(grid, np.concatenate([u.ravel(), v.ravel()]))

    @classmethod
    def from_functions(cls, grid, fu, fv):
        """Sample ``fu(x, y)`` and ``fv(x, y)`` at the interior faces."""
        xu, yu = grid.u_coords()
        xv, yv = grid.v_coords()
        u = np.broadcast_to(np.asarray(fu(xu, yu), dtype=float), grid.u_shape)
        v = np.broadcast_to(np.asarray(fv(xv, yv), dtype=float), grid.v_shape)
        return cls.from_components(grid, u, v)

    @property
    def u_int(self):
        return self.data[: self.grid.nu].reshape(self.grid.u_shape)

    @property
    def v_int(self):
        return self.data[self.grid.nu :].reshape(self.grid.v_shape)

    @property
    def u(self):
        """Full ``(nx+1, ny)`` array including the zero wall faces."""
        out = np.zeros((self.grid.nx + 1, self.grid.ny))
        out[1:-1] = self.u_int
        return out

    @property
    def v(self):
        out = np.zeros((self.grid.nx, self.grid.ny + 1))
        out[:, 1:-1] = self.v_int
        return out

    def copy(self):
        return VelocityField(self.grid, self.data.copy())

    def _wrap(self, data):
        return VelocityField(self.grid, data)

    def _other(self, other):
        if isinstance(other, VelocityField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.data
        return other

    def __add__(self, other):
        return self._wrap(self.data + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.data - self._other(other))

    def __rsub__(self, other):
        return self._wrap(self._other(other) - self.data)

    def __mul__(self, c):
        return self._wrap(self.data * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self._wrap(self.data / c)

    def __neg__(self):
        return self._wrap(-self.data)

    def __repr__(self):
        return f"VelocityField(nx={self.grid.nx}, ny={self.grid.ny}, max={np.abs(self.data).max(initial=0.0):.3g})"


def _as_data(w):
    return w.data if isinstance(w, VelocityField) else np.asarray(w, dtype=float)


def inner(a, b, grid):
    """Discrete L2 inner product (face or cell values, cell-area weights)."""
    return float(np.vdot(np.ravel(_as_data(a)), np.ravel(_as_data(b)))) * grid.cell_area


def divergence(w):
    """Cell-centred divergence, shape ``(nx, ny)``."""
    g = w.grid
    return (g.div_matrix @ w.data).reshape(g.nx, g.ny)


def gradient(q, grid):
    """Face gradient of a cell field; zero on the wall faces."""
    return VelocityField(grid, grid.grad_matrix @ np.ravel(q))


def laplacian(w):
    """Five-point vector Laplacian with reflected ghosts for tangential walls."""
    return w._wrap(w.grid.lap_matrix @ w.data)


def _convect_parts(a, w):
    g = a.grid
    p = g._advection_parts
    au, av = a.data[: g.nu], a.data[g.nu :]
    wu, wv = w.data[: g.nu], w.data[g.nu :]
    av_on_u = p["avg_vu"] @ av
    au_on_v = p["avg_uv"] @ au
    cw = np.concatenate([
        au * (p["dxu"] @ wu) + av_on_u * (p["dyu"] @ wu),
        au_on_v * (p["dxv"] @ wv) + av * (p["dyv"] @ wv),
    ])
    ctw = np.concatenate([
        p["dxu_t"] @ (au * wu) + p["dyu_t"] @ (av_on_u * wu),
        p["dxv_t"] @ (au_on_v * wv) + p["dyv_t"] @ (av * wv),
    ])
    return cw, ctw


def advect(a, w):
    """Skew-symmetric advection ``(a.grad) w + 1/2 (div a) w`` on faces.

    Built as the skew part of a centred convection operator ``C(a)``, so
    ``<advect(a, w), w> = 0`` holds to rounding for every ``a`` and ``w``.
    """
    cw, ctw = _convect_parts(a, w)
    return w._wrap(0.5 * (cw - ctw))


def advection_matrix(a=None, w=None):
    """Sparse matrix of ``advect`` as a linear map of one argument.

    With ``a`` given, returns ``M`` with ``M @ x = advect(a, x)``; with ``w``
    given, returns ``M`` with ``M @ x = advect(x, w)``.
    """
    if (a is None) == (w is None):
        raise ValueError("pass exactly one of a, w")
    if a is not None:
        g = a.grid
        p = g._advection_parts
        au, av = a.data[: g.nu], a.data[g.nu :]
        cu = sp.diags(au) @ p["dxu"] + sp.diags(p["avg_vu"] @ av) @ p["dyu"]
        cv = sp.diags(p["avg_uv"] @ au) @ p["dxv"] + sp.diags(av) @ p["dyv"]
        c = sp.block_diag([cu, cv], format="csr")
        return (0.5 * (c - c.T)).tocsr()
    g = w.grid
    p = g._advection_parts
    wu, wv = w.data[: g.nu], w.data[g.nu :]
    k = sp.bmat([
        [sp.diags(p["dxu"] @ wu), sp.diags(p["dyu"] @ wu) @ p["avg_vu"]],
        [sp.diags(p["dxv"] @ wv) @ p["avg_uv"], sp.diags(p["dyv"] @ wv)],
    ])
    kt = sp.bmat([
        [p["dxu_t"] @ sp.diags(wu), p["dyu_t"] @ sp.diags(wu) @ p["avg_vu"]],
        [p["dxv_t"] @ sp.diags(wv) @ p["avg_uv"], p["dyv_t"] @ sp.diags(wv)],
    ])
    return (0.5 * (k - kt)).tocsr()


def _cg(matvec, rhs, size, rtol, maxiter, what):
    op = LinearOperator((size, size), matvec=matvec, dtype=float)
    norm_b = np.linalg.norm(rhs)
    if norm_b == 0.0:
        return np.zeros(size)
    x, info = cg(op, rhs, rtol=rtol, atol=0.0, maxiter=maxiter)
    res = np.linalg.norm(matvec(x) - rhs) / norm_b
    if info != 0 and res > 10 * rtol:
        raise SolverError(f"{what}: CG stopped after {maxiter} iterations, relative residual {res:.3g}", res)
    return x


def helmholtz_solve(coeff_a, coeff_nu, rhs, method="fast", rtol=1e-13, maxiter=20_000):
    """Solve ``(a I - nu Lap) x = rhs`` for a face field.

    ``method="fast"`` diagonalizes each component with sine transforms;
    ``method="cg"`` runs conjugate gradients on the assembled operator.
    """
    if coeff_a < 0.0 or coeff_nu < 0.0 or (coeff_a == 0.0 and coeff_nu == 0.0):
        raise ValueError("need coeff_a >= 0, coeff_nu >= 0, not both zero")
    g = rhs.grid
    if coeff_nu == 0.0:
        return rhs / coeff_a
    if method == "cg":
        lap = g.lap_matrix
        x = _cg(lambda z: coeff_a * z - coeff_nu * (lap @ z), rhs.data, g.size, rtol, maxiter, "helmholtz")
        return VelocityField(g, x)
    if method != "fast":
        raise ValueError(f"unknown method {method!r}")
    eu, ev = g._helmholtz_eigs
    ru = fft.dst(fft.dst(rhs.u_int, type=1, axis=0, norm="ortho"), type=2, axis=1, norm="ortho")
    ru /= coeff_a + coeff_nu * eu
    xu = fft.idst(fft.idst(ru, type=2, axis=1, norm="ortho"), type=1, axis=0, norm="ortho")
    rv = fft.dst(fft.dst(rhs.v_int, type=2, axis=0, norm="ortho"), type=1, axis=1, norm="ortho")
    rv /= coeff_a + coeff_nu * ev
    xv = fft.idst(fft.idst(rv, type=1, axis=1, norm="ortho"), type=2, axis=0, norm="ortho")
    return VelocityField(g, np.concatenate([xu.ravel(), xv.ravel()]))


def pressure_poisson_solve(rhs, grid, method="fast", rtol=1e-13, maxiter=20_000, return_mean=False):
    """Mean-zero solution of the Neumann problem ``-Lap_h phi = rhs``.

    The mean of ``rhs`` is removed first (compatibility); pass
    ``return_mean=True`` to get the removed amount as a second value.
    """
    rhs = np.asarray(rhs, dtype=float).reshape(grid.nx, grid.ny)
    mean = float(rhs.mean())
    b = rhs - mean
    if method == "fast":
        bh = fft.dctn(b, type=2, norm="ortho")
        bh /= grid._poisson_eigs
        bh[0, 0] = 0.0
        phi = fft.idctn(bh, type=2, norm="ortho")
    elif method == "cg":
        D, G = grid.div_matrix, grid.grad_matrix

        def matvec(z):
            return -(D @ (G @ z))

        phi = _cg(matvec, b.ravel(), grid.ncell, rtol, maxiter, "pressure poisson").reshape(grid.nx, grid.ny)
        phi -= phi.mean()
    else:
        raise ValueError(f"unknown method {method!r}")
    return (phi, mean) if return_mean else phi


def leray_project(w, method="fast"):
    """Discrete Leray projection ``w - grad(psi)`` with ``div grad psi = div w``."""
    psi = -pressure_poisson_solve(divergence(w), w.grid, method=method)
    return w - gradient(psi, w.grid)


def _h1_semi_sq(w):
    g = w.grid
    hx, hy = g.hx, g.hy
    total = 0.0
    u, v = w.u, w.v
    total += np.sum(np.diff(u, axis=0) ** 2) / hx**2
    total += np.sum(np.diff(u[1:-1], axis=1) ** 2) / hy**2
    total += 0.5 * (np.sum((2.0 * u[1:-1, 0]) ** 2) + np.sum((2.0 * u[1:-1, -1]) ** 2)) / hy**2
    total += np.sum(np.diff(v, axis=1) ** 2) / hy**2
    total += np.sum(np.diff(v[:, 1:-1], axis=0) ** 2) / hx**2
    total += 0.5 * (np.sum((2.0 * v[0, 1:-1]) ** 2) + np.sum((2.0 * v[-1, 1:-1]) ** 2)) / hx**2
    return total * g.cell_area


def stokes_operator(w):
    """Discrete Stokes operator ``A_h w = P(-Lap_h w)``."""
    return leray_project(-laplacian(w))


def norms(w, grid=None):
    """Discrete ``l2``, ``h1_semi`` and (for velocities) ``a_norm``.

    For a cell field pass ``grid``; its ``h1_semi`` is the L2 norm of the
    face gradient.
    """
    if isinstance(w, VelocityField):
        g = w.grid
        return {
            "l2": math.sqrt(inner(w, w, g)),
            "h1_semi": math.sqrt(_h1_semi_sq(w)),
            "a_norm": math.sqrt(inner(a := stokes_operator(w), a, g)),
        }
    if grid is None:
        raise ValueError("norms of a cell field need the grid")
    q = np.asarray(w, dtype=float)
    gq = gradient(q, grid)
    return {"l2": math.sqrt(inner(q, q, grid)), "h1_semi": math.sqrt(inner(gq, gq, grid))}


def poincare_constant(grid, tol=1e-9, maxiter=500):
    """Smallest eigenvalue of the Dirichlet ``-Lap_h`` by inverse iteration."""
    x = VelocityField(grid, np.ones(grid.size))
    x = x / math.sqrt(inner(x, x, grid))
    lam = None
    for _ in range(maxiter):
        y = helmholtz_solve(0.0, 1.0, x)
        x = y / math.sqrt(inner(y, y, grid))
        ax = -laplacian(x)
        lam = inner(ax, x, grid)
        res = math.sqrt(inner(r := ax - lam * x, r, grid)) / lam
        if res <= tol:
            return lam
    raise SolverError(f"inverse iteration did not reach {tol:g} in {maxiter} iterations", res, lam)


def mu0_estimate(ubar, mu, trials=8, seed=0, iterations=40):
    """Empirical lower estimate of ``inf_v (mu a(v,v) + b(v, ubar, v)) / |v|_1^2``.

    Seeded random fields start a block LOBPCG minimization of the
    generalized Rayleigh quotient; the smallest value seen is returned.  A
    nonpositive result flags the coercivity assumption as violated.
    """
    g = ubar.grid
    bmat = advection_matrix(w=ubar)
    sym = ((bmat + bmat.T) * 0.5).tocsr()
    if sym.nnz == 0 or not np.any(sym.data):
        return float(mu)
    neg_lap = (-g.lap_matrix).tocsr()
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((g.size, max(int(trials), 1)))
    quad = np.einsum("ij,ij->j", x0, sym @ x0) / np.einsum("ij,ij->j", x0, neg_lap @ x0)
    best = float(quad.min())
    precond = LinearOperator(
        (g.size, g.size),
        matvec=lambda z: helmholtz_solve(0.0, 1.0, VelocityField(g, np.ravel(z))).data,
        dtype=float,
    )
    if g.size > 3 * x0.shape[1] and iterations > 0:
        with warnings.catch_warnings():
            # partially converged Ritz values are still valid upper bounds of the infimum
            warnings.simplefilter("ignore", UserWarning)
            vals = lobpcg(sym, x0, B=neg_lap, M=precond, largest=False, maxiter=iterations, tol=1e-8)[0]
        best = min(best, float(np.min(vals)))
    return float(min(mu, mu + best))


_MAGIC = "# viscomem-snapshot v1"


def write_snapshot(path, field, grid=None, role="velocity", time=0.0, fmt="csv"):
    """Write a field with a text header; ``fmt`` is ``"csv"`` or ``"bin"``.

    Binary files carry the header lines, a ``# end-header`` line, then
    little-endian float64 values: the full ``u`` array then the full ``v``
    array for velocities, or the ``(nx, ny)`` cell array, all in C order.
    """
    if isinstance(field, VelocityField):
        grid = field.grid
        blocks = [("u", field.u), ("v", field.v)]
    else:
        if grid is None:
            raise ValueError("cell fields need the grid")
        blocks = [("c", np.asarray(field, dtype=float).reshape(grid.nx, grid.ny))]
    header = [
        _MAGIC,
        f"# nx={grid.nx} ny={grid.ny} Lx={grid.Lx:.17g} Ly={grid.Ly:.17g} hx={grid.hx:.17g} hy={grid.hy:.17g}",
        f"# role={role} time={float(time):.17g} kind={'velocity' if len(blocks) == 2 else 'cell'}",
    ]
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write("\n".join(header) + "\n")
            fh.write("component,i,j,value\n")
            for name, arr in blocks:
                for (i, j), val in np.ndenumerate(arr):
                    fh.write(f"{name},{i},{j},{val:.17g}\n")
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n# end-header\n").encode("ascii"))
            for _, arr in blocks:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")


def _parse_header(lines):
    meta = {}
    for line in lines[1:]:
        for tok in line.lstrip("# ").split():
            key, _, val = tok.partition("=")
            meta[key] = val
    grid = StaggeredGrid(int(meta["nx"]), int(meta["ny"]), float(meta["Lx"]), float(meta["Ly"]))
    return grid, {"role": meta["role"], "time": float(meta["time"]), "kind": meta["kind"]}


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns ``(field, grid, meta)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw.startswith(_MAGIC.encode()) and b"# end-header\n" in raw:
        head, _, body = raw.partition(b"# end-header\n")
        grid, meta = _parse_header(head.decode("ascii").splitlines())
        vals = np.frombuffer(body, dtype="<f8")
        if meta["kind"] == "velocity":
            nu_full = (grid.nx + 1) * grid.ny
            u = vals[:nu_full].reshape(grid.nx + 1, grid.ny)
            v = vals[nu_full:].reshape(grid.nx, grid.ny + 1)
            return VelocityField.from_components(grid, u, v), grid, meta
        return vals.reshape(grid.nx, grid.ny).copy(), grid, meta
    lines = raw.decode("ascii").splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    grid, meta = _parse_header(lines[:3])
    arrays = {"u": np.zeros((grid.nx + 1, grid.ny)), "v": np.zeros((grid.nx, grid.ny + 1)),
              "c": np.zeros((grid.nx, grid.ny))}
    for line in lines[4:]:
        name, i, j, val = line.split(",")
        arrays[name][int(i), int(j)] = float(val)
    if meta["kind"] == "velocity":
        return VelocityField.from_components(grid, arrays["u"], arrays["v"]), grid, meta
    return arrays["c"], grid, meta
