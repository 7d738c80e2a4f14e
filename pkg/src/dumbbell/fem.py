"""Axisymmetric finite elements for the weighted eigenproblem -Du = l p u.

All forms carry the meridian volume measure rho^(N-2) drho dx1 (the constant
angular factor omega_(N-2) is omitted consistently; it cancels in every
eigenvalue, Rayleigh quotient and normalized field).  P1 and P2 triangles on
a MeridianMesh, Dirichlet conditions by elimination to a reduced SPD system,
sparse direct factorizations, and Lanczos on K^-1 M_p for the smallest
weighted eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import MeridianMesh

__all__ = [
    "WeightModel",
    "Discretization",
    "AssembledSystem",
    "FieldSolution",
    "EigenPair",
    "assemble",
    "solve_dirichlet",
    "eigen_smallest",
    "refine_eigenpair",
]


# ----------------------------------------------------------------------------
# Weight model
# ----------------------------------------------------------------------------

def _bump(s):
    """C^1 bump b(s) = (1-s^2)^3 on |s|<1, zero outside."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    out = np.zeros_like(s)
    t = 1.0 - s[inside] ** 2
    out[inside] = t ** 3
    return out


@dataclass(frozen=True)
class WeightModel:
    """Semidefinite weight p: bump annuli 4 <= |x - e1| <= 5 (amplitude
    a_plus) and 4 <= |x| <= 5 (amplitude a_minus), radial profile
    b(2(|.| - 4.5)).  p vanishes identically on the ball of radius 3 around
    each junction and on the tube, so the eigenproblem weight is
    semidefinite; with a_minus = a_plus/2 the left spectrum is exactly twice
    the right one, which keeps the two half-domain spectra disjoint at the
    ground state."""

    a_plus: float = 1.0
    a_minus: float = 0.5

    def __call__(self, x1, rho):
        x1 = np.asarray(x1, dtype=float)
        rho = np.asarray(rho, dtype=float)
        rp = np.hypot(x1 - 1.0, rho)
        rm = np.hypot(x1, rho)
        # each annulus belongs to its own half-domain; the sphere around e1
        # reaches into {x1 < 1} but those points lie outside the dumbbell,
        # so gating by side keeps p smooth on every computational domain
        return (self.a_plus * _bump(2.0 * (rp - 4.5)) * (x1 > 1.0)
                + self.a_minus * _bump(2.0 * (rm - 4.5)) * (x1 < 0.0))

    @classmethod
    def zero(cls) -> "WeightModel":
        return cls(0.0, 0.0)

    def is_zero(self) -> bool:
        return self.a_plus == 0.0 and self.a_minus == 0.0


# ----------------------------------------------------------------------------
# Quadrature on the reference triangle (barycentric points, weights sum to 1)
# ----------------------------------------------------------------------------

def _dunavant(degree: int):
    if degree <= 2:
        pts = [(0.5, 0.5, 0.0), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5)]
        wts = [1.0 / 3.0] * 3
    elif degree <= 4:
        a1, w1 = 0.445948490915965, 0.223381589678011
        a2, w2 = 0.091576213509771, 0.109951743655322
        pts, wts = [], []
        for a, w in ((a1, w1), (a2, w2)):
            for perm in ((a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)):
                pts.append(perm)
                wts.append(w)
    else:
        g1, w1 = 0.249286745170910, 0.116786275726379
        g2, w2 = 0.063089014491502, 0.050844906370207
        pts, wts = [], []
        for a, w in ((g1, w1), (g2, w2)):
            for perm in ((a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)):
                pts.append(perm)
                wts.append(w)
        b, c = 0.310352451033785, 0.053145049844816
        a = 1.0 - b - c
        w3 = 0.082851075618374
        for perm in ((a, b, c), (a, c, b), (b, a, c), (b, c, a),
                     (c, a, b), (c, b, a)):
            pts.append(perm)
            wts.append(w3)
    return np.asarray(pts), np.asarray(wts)


def _p2_shapes(bary: np.ndarray):
    """Values and barycentric gradients of the 6 P2 shape functions at the
    given barycentric points (q, 3).  Returns (q, 6) and (q, 6, 3)."""
    l1, l2, l3 = bary[:, 0], bary[:, 1], bary[:, 2]
    vals = np.stack([
        l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), l3 * (2 * l3 - 1),
        4 * l1 * l2, 4 * l2 * l3, 4 * l3 * l1,
    ], axis=1)
    q = len(bary)
    grads = np.zeros((q, 6, 3))
    grads[:, 0, 0] = 4 * l1 - 1
    grads[:, 1, 1] = 4 * l2 - 1
    grads[:, 2, 2] = 4 * l3 - 1
    grads[:, 3, 0] = 4 * l2
    grads[:, 3, 1] = 4 * l1
    grads[:, 4, 1] = 4 * l3
    grads[:, 4, 2] = 4 * l2
    grads[:, 5, 2] = 4 * l1
    grads[:, 5, 0] = 4 * l3
    return vals, grads


def _p1_shapes(bary: np.ndarray):
    q = len(bary)
    grads = np.broadcast_to(np.eye(3), (q, 3, 3)).copy()
    return bary.copy(), grads


# ----------------------------------------------------------------------------
# Discretization
# ----------------------------------------------------------------------------

class Discretization:
    """Nodes and cells of a P1 or P2 space on a meridian mesh.

    measure_exponent m gives the meridian volume weight rho^m (m = N-2 by
    default; m = 0 turns the forms into plain 2D ones for test harnesses).
    """

    def __init__(self, mesh: MeridianMesh, order: int = 1,
                 measure_exponent: int | None = None):
        if order not in (1, 2):
            raise ValueError("element order must be 1 or 2")
        self.mesh = mesh
        self.order = order
        n = mesh.params.get("dimension", 3)
        self.measure_exponent = (n - 2) if measure_exponent is None \
            else measure_exponent

        nv = len(mesh.vertices)
        if order == 1:
            self.nodes = mesh.vertices
            self.cells = mesh.triangles
            self._edge_index = None
        else:
            edge_index: dict[tuple[int, int], int] = {}
            mid_coords: list[tuple[float, float]] = []

            def edge_node(a: int, b: int) -> int:
                key = (a, b) if a < b else (b, a)
                idx = edge_index.get(key)
                if idx is None:
                    idx = nv + len(mid_coords)
                    edge_index[key] = idx
                    pa, pb = mesh.vertices[a], mesh.vertices[b]
                    mid_coords.append((0.5 * (pa[0] + pb[0]),
                                       0.5 * (pa[1] + pb[1])))
                return idx

            cells = np.empty((len(mesh.triangles), 6), dtype=np.int64)
            for i, (a, b, c) in enumerate(mesh.triangles):
                a, b, c = int(a), int(b), int(c)
                cells[i] = (a, b, c, edge_node(a, b), edge_node(b, c),
                            edge_node(c, a))
            self.cells = cells
            self.nodes = np.vstack([mesh.vertices, np.asarray(mid_coords)])
            self._edge_index = edge_index

        self.n_nodes = len(self.nodes)
        self._locator = None

    # -- boundary node sets --------------------------------------------------

    def boundary_nodes(self, *tags: str) -> np.ndarray:
        """Sorted node indices (including midside nodes for P2) lying on
        boundary edges with any of the given tags."""
        idx: list[int] = []
        for tag in tags:
            for a, b in self.mesh.tagged_edges(tag):
                a, b = int(a), int(b)
                idx.extend((a, b))
                if self.order == 2:
                    key = (a, b) if a < b else (b, a)
                    mid = self._edge_index.get(key)
                    if mid is not None:
                        idx.append(mid)
        return np.unique(np.asarray(idx, dtype=np.int64))

    def dirichlet_tags(self) -> tuple[str, ...]:
        """Tags that carry essential conditions by default: everything
        present in the mesh except the symmetry axis."""
        present = set(self.mesh.edge_tags)
        return tuple(t for t in ("dirichlet_wall", "truncation", "inflow")
                     if t in present)

    # -- geometry ------------------------------------------------------------

    def cell_geometry(self):
        """Signed areas and barycentric gradients (ncell, 3, 2)."""
        tri = self.mesh.triangles
        p = self.mesh.vertices[tri]
        x, y = p[..., 0], p[..., 1]
        det = ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
               - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
        area = 0.5 * det
        grads = np.empty((len(tri), 3, 2))
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            grads[:, k, 0] = (y[:, i] - y[:, j]) / det
            grads[:, k, 1] = (x[:, j] - x[:, i]) / det
        return area, grads

    # -- point location -------------------------------------------------------

    def _build_locator(self):
        tri = self.mesh.triangles
        p = self.mesh.vertices[tri]
        lo = p.min(axis=1)
        hi = p.max(axis=1)
        box_lo = self.mesh.vertices.min(axis=0)
        box_hi = self.mesh.vertices.max(axis=0)
        ncell = max(8, int(math.sqrt(len(tri))))
        size = (box_hi - box_lo) / ncell
        size[size == 0] = 1.0
        buckets: dict[tuple[int, int], list[int]] = {}
        ilo = np.clip(((lo - box_lo) / size).astype(int), 0, ncell - 1)
        ihi = np.clip(((hi - box_lo) / size).astype(int), 0, ncell - 1)
        for t in range(len(tri)):
            for ix in range(ilo[t, 0], ihi[t, 0] + 1):
                for iy in range(ilo[t, 1], ihi[t, 1] + 1):
                    buckets.setdefault((ix, iy), []).append(t)
        self._locator = (box_lo, size, ncell, buckets)

    def locate(self, x1, rho, tol: float = 1e-10):
        """Find containing triangles and barycentric coordinates.

        Returns (tri_indices, bary) with tri = -1 for points outside."""
        if self._locator is None:
            self._build_locator()
        box_lo, size, ncell, buckets = self._locator
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        pts = np.stack([x1, rho], axis=1)
        tri_out = np.full(len(pts), -1, dtype=np.int64)
        bary_out = np.zeros((len(pts), 3))
        area, grads = self.cell_geometry()
        verts = self.mesh.vertices
        tris = self.mesh.triangles
        for i, (px, py) in enumerate(pts):
            ix = min(max(int((px - box_lo[0]) / size[0]), 0), ncell - 1)
            iy = min(max(int((py - box_lo[1]) / size[1]), 0), ncell - 1)
            best_t, best_b, best_m = -1, None, -np.inf
            for t in buckets.get((ix, iy), ()):
                a, b, c = tris[t]
                # barycentric via the cached gradients: lam_k is affine with
                # gradient grads[t, k] and value 1 at vertex k
                lam = np.empty(3)
                for k, vk in enumerate((a, b, c)):
                    lam[k] = 1.0 + grads[t, k] @ (pts[i] - verts[vk])
                m = lam.min()
                if m > best_m:
                    best_t, best_b, best_m = t, lam, m
                if m >= -tol:
                    break
            if best_t >= 0 and best_m >= -tol:
                tri_out[i] = best_t
                bary_out[i] = np.clip(best_b, 0.0, None)
                bary_out[i] /= bary_out[i].sum()
        return tri_out, bary_out


# ----------------------------------------------------------------------------
# Assembly
# ----------------------------------------------------------------------------

def _assemble_form(disc: Discretization, kind: str,
                   coeff: Callable | None = None,
                   degree: int | None = None) -> sp.csr_matrix:
    """kind 'stiffness' or 'mass'; coeff(x1, rho) multiplies the integrand."""
    if degree is None:
        if kind == "stiffness":
            degree = 2 if disc.order == 1 else 4
        else:
            degree = 4 if disc.order == 1 else 6
        if coeff is not None:
            degree = max(degree, 6)
    bary, wts = _dunavant(degree)
    if disc.order == 1:
        shp, dshp = _p1_shapes(bary)
    else:
        shp, dshp = _p2_shapes(bary)
    nloc = shp.shape[1]

    area, bgrads = disc.cell_geometry()
    tris = disc.mesh.triangles
    p = disc.mesh.vertices[tris]
    # physical quadrature points: (ncell, q, 2)
    qpts = np.einsum("qk,tkd->tqd", bary, p)
    rho_m = qpts[..., 1] ** disc.measure_exponent \
        if disc.measure_exponent else np.ones(qpts.shape[:2])
    cvals = np.ones(qpts.shape[:2])
    if coeff is not None:
        cvals = np.asarray(coeff(qpts[..., 0], qpts[..., 1]), dtype=float)
        keep = np.any(cvals != 0.0, axis=1)
    else:
        keep = np.ones(len(tris), dtype=bool)

    cells = disc.cells[keep]
    areaK = area[keep]
    wfac = (wts[None, :] * rho_m[keep] * cvals[keep]) * areaK[:, None]

    if kind == "mass":
        local = np.einsum("tq,qi,qj->tij", wfac, shp, shp)
    else:
        # physical gradients of shape functions: (t, q, i, 2)
        g = np.einsum("qik,tkd->tqid", dshp, bgrads[keep])
        local = np.einsum("tq,tqid,tqjd->tij", wfac, g, g)
    # enforce bitwise symmetry (einsum summation order is not symmetric)
    local = 0.5 * (local + np.swapaxes(local, 1, 2))

    rows = np.repeat(cells, nloc, axis=1).ravel()
    cols = np.tile(cells, (1, nloc)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(disc.n_nodes, disc.n_nodes)).tocsr()
    mat.sum_duplicates()
    return mat


def assemble_stiffness(disc: Discretization) -> sp.csr_matrix:
    return _assemble_form(disc, "stiffness")


def assemble_mass(disc: Discretization,
                  coeff: Callable | None = None) -> sp.csr_matrix:
    return _assemble_form(disc, "mass", coeff=coeff)


def assemble_load(disc: Discretization, f: Callable,
                  degree: int = 6) -> np.ndarray:
    """Load vector int f v rho^m."""
    bary, wts = _dunavant(degree)
    shp = _p1_shapes(bary)[0] if disc.order == 1 else _p2_shapes(bary)[0]
    area, _ = disc.cell_geometry()
    p = disc.mesh.vertices[disc.mesh.triangles]
    qpts = np.einsum("qk,tkd->tqd", bary, p)
    rho_m = qpts[..., 1] ** disc.measure_exponent \
        if disc.measure_exponent else np.ones(qpts.shape[:2])
    fvals = np.asarray(f(qpts[..., 0], qpts[..., 1]), dtype=float)
    wfac = (wts[None, :] * rho_m * fvals) * area[:, None]
    local = np.einsum("tq,qi->ti", wfac, shp)
    out = np.zeros(disc.n_nodes)
    np.add.at(out, disc.cells.ravel(), local.ravel())
    return out


@dataclass
class AssembledSystem:
    """Stiffness and weighted mass with Dirichlet elimination bookkeeping.

    K, Mp are the reduced (free-node) matrices used by the eigensolver;
    K_full/Mp_full keep all nodes for lifting, norms and diagnostics."""

    disc: Discretization
    K: sp.csr_matrix
    Mp: sp.csr_matrix
    K_full: sp.csr_matrix
    Mp_full: sp.csr_matrix
    free: np.ndarray
    fixed: np.ndarray
    weight: object = None
    _lu: object = dfield(default=None, repr=False)

    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.K.tocsc())
        return self._lu

    def expand(self, reduced: np.ndarray,
               fixed_values: np.ndarray | None = None) -> np.ndarray:
        full = np.zeros(self.disc.n_nodes)
        full[self.free] = reduced
        if fixed_values is not None:
            full[self.fixed] = fixed_values
        return full


def assemble(mesh_or_disc, weight: WeightModel | Callable,
             order: int = 1,
             dirichlet_tags: Sequence[str] | None = None) -> AssembledSystem:
    """Assemble K (SPD on free nodes) and M_p (PSD) for -Du = l p u."""
    disc = mesh_or_disc if isinstance(mesh_or_disc, Discretization) \
        else Discretization(mesh_or_disc, order=order)
    K_full = assemble_stiffness(disc)
    if isinstance(weight, WeightModel) and weight.is_zero():
        Mp_full = sp.csr_matrix((disc.n_nodes, disc.n_nodes))
    else:
        Mp_full = assemble_mass(disc, coeff=weight)
    tags = disc.dirichlet_tags() if dirichlet_tags is None \
        else tuple(dirichlet_tags)
    fixed = disc.boundary_nodes(*tags)
    free = np.setdiff1d(np.arange(disc.n_nodes), fixed)
    K = K_full[free][:, free].tocsr()
    Mp = Mp_full[free][:, free].tocsr()
    return AssembledSystem(disc, K, Mp, K_full, Mp_full, free, fixed, weight)


# ----------------------------------------------------------------------------
# Fields and solves
# ----------------------------------------------------------------------------

class FieldSolution:
    """Nodal field on a discretization with point evaluation."""

    def __init__(self, disc: Discretization, values: np.ndarray,
                 boundary_data=None, residual: float = 0.0):
        self.disc = disc
        self.values = np.asarray(values, dtype=float)
        self.boundary_data = boundary_data
        self.residual = float(residual)

    def __call__(self, x1, rho):
        return self.evaluate(x1, rho)

    def evaluate(self, x1, rho, outside=np.nan):
        x1 = np.asarray(x1, dtype=float)
        scalar = x1.ndim == 0
        x1 = np.atleast_1d(x1)
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        x1b, rhob = np.broadcast_arrays(x1, rho)
        tri, bary = self.disc.locate(x1b.ravel(), rhob.ravel())
        out = np.full(tri.shape, float(outside))
        ok = tri >= 0
        if ok.any():
            if self.disc.order == 1:
                cells = self.disc.cells[tri[ok]]
                out[ok] = np.einsum("pk,pk->p", bary[ok],
                                    self.values[cells])
            else:
                shp = _p2_shapes(bary[ok])[0]
                cells = self.disc.cells[tri[ok]]
                out[ok] = np.einsum("pk,pk->p", shp, self.values[cells])
        out = out.reshape(x1b.shape)
        return float(out[0]) if scalar and out.size == 1 else out

    def gradient(self, x1, rho):
        """(d/dx1, d/drho) at the given points (NaN outside)."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        x1b, rhob = np.broadcast_arrays(x1, rho)
        tri, bary = self.disc.locate(x1b.ravel(), rhob.ravel())
        _, bgrads = self.disc.cell_geometry()
        out = np.full((len(tri), 2), np.nan)
        ok = np.nonzero(tri >= 0)[0]
        for i in ok:
            t = tri[i]
            cells = self.disc.cells[t]
            if self.disc.order == 1:
                g = bgrads[t]
            else:
                dshp = _p2_shapes(bary[i:i + 1])[1][0]
                g = dshp @ bgrads[t]
            out[i] = self.values[cells] @ g
        return out.reshape(x1b.shape + (2,))


def solve_dirichlet(mesh_or_disc, boundary_data: dict,
                    rhs: Callable | None = None,
                    rhs_vector: np.ndarray | None = None,
                    order: int = 1) -> FieldSolution:
    """Solve -div(rho^m grad u) = rho^m f with essential data per tag.

    boundary_data maps tag -> callable(x1, rho) or constant; every tag in
    the map is treated as essential, the axis is always natural.
    """
    disc = mesh_or_disc if isinstance(mesh_or_disc, Discretization) \
        else Discretization(mesh_or_disc, order=order)
    K = assemble_stiffness(disc)
    F = np.zeros(disc.n_nodes)
    if rhs is not None:
        F += assemble_load(disc, rhs)
    if rhs_vector is not None:
        F += rhs_vector

    g = np.zeros(disc.n_nodes)
    fixed_list = []
    for tag, data in boundary_data.items():
        nodes = disc.boundary_nodes(tag)
        if callable(data):
            g[nodes] = data(disc.nodes[nodes, 0], disc.nodes[nodes, 1])
        else:
            g[nodes] = float(data)
        fixed_list.append(nodes)
    fixed = np.unique(np.concatenate(fixed_list)) if fixed_list \
        else np.empty(0, dtype=np.int64)
    free = np.setdiff1d(np.arange(disc.n_nodes), fixed)

    Kff = K[free][:, free].tocsc()
    rhs_red = F[free] - K[free][:, fixed] @ g[fixed]
    try:
        lu = spla.splu(Kff)
    except RuntimeError as exc:
        raise RuntimeError(
            f"singular stiffness factorization ({exc}); check boundary tags") \
            from exc
    u_free = lu.solve(rhs_red)
    resid = np.linalg.norm(Kff @ u_free - rhs_red) / max(
        np.linalg.norm(rhs_red), 1e-300)
    values = g.copy()
    values[free] = u_free
    return FieldSolution(disc, values, boundary_data=dict(boundary_data),
                         residual=resid)


# ----------------------------------------------------------------------------
# Eigensolver
# ----------------------------------------------------------------------------

@dataclass
class EigenPair:
    lam: float
    field: FieldSolution
    residual: float
    sign_fixed: bool = False
    residual_history: tuple = ()

    def rayleigh(self, system: AssembledSystem) -> float:
        u = self.field.values[system.free]
        return float(u @ (system.K @ u)) / float(u @ (system.Mp @ u))


def eigen_smallest(system: AssembledSystem, count: int = 1,
                   tol: float = 1e-10, maxiter: int = 5000) -> list[EigenPair]:
    """Smallest eigenvalues of K u = l M_p u via Lanczos on the pencil
    (M_p, K): largest mu of M_p u = mu K u gives l = 1/mu, with K-inner
    products and the sparse factorization of K reused across iterations."""
    if system.Mp.nnz == 0:
        raise ValueError("weighted mass is identically zero")
    if count < 1:
        raise ValueError("count must be >= 1")
    lu = system.lu()
    n = system.K.shape[0]
    op_kinv = spla.LinearOperator((n, n), matvec=lu.solve)
    mu, vecs = spla.eigsh(system.Mp, k=count, M=system.K, Minv=op_kinv,
                          which="LM", tol=tol, maxiter=maxiter)
    order = np.argsort(-mu)
    pairs = []
    for idx in order:
        if mu[idx] <= 0:
            raise RuntimeError(
                f"count={count} exceeds the number of positive weighted "
                "modes resolvable on this mesh")
        lam = 1.0 / mu[idx]
        v = vecs[:, idx]
        r = system.K @ v - lam * (system.Mp @ v)
        rel = np.linalg.norm(r) / np.linalg.norm(system.K @ v)
        full = system.expand(v)
        pairs.append(EigenPair(float(lam), FieldSolution(system.disc, full),
                               float(rel)))
    return pairs


def refine_eigenpair(system: AssembledSystem, pair: EigenPair,
                     steps: int = 3) -> EigenPair:
    """Inverse-iteration polish with extended-precision residuals.

    Each step solves K y = M_p u, renormalizes, and updates the Rayleigh
    quotient; the residual is accumulated in long double so that components
    many orders below the peak are refined rather than drowned."""
    lu = system.lu()
    Kl = system.K.astype(np.longdouble)
    Ml = system.Mp.astype(np.longdouble)
    u = pair.field.values[system.free].astype(np.longdouble)
    lam = np.longdouble(pair.lam)
    history = [float(_rel_residual(Kl, Ml, u, lam))]
    for _ in range(steps):
        rhs = np.asarray(Ml @ u, dtype=float)
        y = lu.solve(rhs).astype(np.longdouble)
        # one extra float-precision correction of the solve itself
        corr = lu.solve(rhs - np.asarray(Kl @ y, dtype=float))
        y = y + corr.astype(np.longdouble)
        y = y / np.sqrt(y @ (Ml @ y))
        lam = (y @ (Kl @ y)) / (y @ (Ml @ y))
        res = float(_rel_residual(Kl, Ml, y, lam))
        if res > history[-1] * (1 + 1e-12):
            break
        u = y
        history.append(res)
    full = system.expand(np.asarray(u, dtype=float))
    fld = FieldSolution(system.disc, full)
    return EigenPair(float(lam), fld, history[-1],
                     sign_fixed=pair.sign_fixed,
                     residual_history=tuple(history))


def _rel_residual(Kl, Ml, u, lam):
    r = Kl @ u - lam * (Ml @ u)
    return np.sqrt(np.longdouble(r @ r)) / np.sqrt(np.longdouble((Kl @ u) @ (Kl @ u)))


def mass_normalize(system: AssembledSystem, pair: EigenPair,
                   orient: Callable | None = None) -> EigenPair:
    """Scale so int p u^2 rho^m = 1 and fix the sign (orient(field) > 0;
    defaults to positivity of the weighted mean)."""
    v = pair.field.values
    m = float(v @ (system.Mp_full @ v))
    if m <= 0:
        raise ValueError("field has no weighted mass")
    v = v / math.sqrt(m)
    fld = FieldSolution(system.disc, v)
    s = orient(fld) if orient is not None \
        else float(np.ones_like(v) @ (system.Mp_full @ v))
    if s < 0:
        v = -v
        fld = FieldSolution(system.disc, v)
    return EigenPair(pair.lam, fld, pair.residual, sign_fixed=True,
                     residual_history=pair.residual_history)
