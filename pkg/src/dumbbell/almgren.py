"""Frequency-function diagnostics and blow-up rescalings.

The frequency of a field V over exterior half-balls,

    N_V(t) = D_V(t) / H_V(t),
    D_V(t) = t^(2-N) int_{D-, |x|>t} (|grad V|^2 - lam p V^2) dx,
    H_V(t) = t^(1-N) int_{half-sphere |x|=t} V^2 dsigma,

identifies the order of the singularity or zero at the origin.  Energies
are integrated element by element; cells cut by the sphere |x| = t (or by
the section x1 = t for the channel variant) are subdivided recursively in
barycentric coordinates so quadrature points stay aligned with the finite
element basis.  FEM forms omit the constant angular factor omega_(N-2);
the energies here restore it so that quotients against the surface-measure
quadratures are consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from . import channel as ch
from . import cross_section as cs
from . import fem
from .profiles import ProfileSolution
from .scaled import ScaledAmplitude

__all__ = [
    "FrequencyTrace",
    "BlowupView",
    "frequency_exterior",
    "frequency_channel",
    "blowup",
    "compare_views",
]


# ----------------------------------------------------------------------------
# Masked element quadrature
# ----------------------------------------------------------------------------

_SUBDIV = (
    ((1.0, 0.0, 0.0), (0.5, 0.5, 0.0), (0.5, 0.0, 0.5)),
    ((0.5, 0.5, 0.0), (0.0, 1.0, 0.0), (0.0, 0.5, 0.5)),
    ((0.5, 0.0, 0.5), (0.0, 0.5, 0.5), (0.0, 0.0, 1.0)),
    ((0.5, 0.5, 0.0), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5)),
)


def _masked_rule(corners_phys, inside, depth, base_pts, base_wts,
                 corners_bary=None):
    """Quadrature (barycentric points, weights as area fractions) for the
    part of a triangle where `inside` holds, by recursive subdivision.

    `corners_bary` tracks the sub-triangle in the parent's barycentric
    frame; weights are fractions of the parent area.
    """
    if corners_bary is None:
        corners_bary = np.eye(3)
    probes = np.vstack([corners_phys,
                        0.5 * (corners_phys + np.roll(corners_phys, 1, axis=0)),
                        corners_phys.mean(axis=0)])
    flags = inside(probes[:, 0], probes[:, 1])
    if np.all(flags):
        pts = base_pts @ corners_bary
        frac = abs(np.linalg.det((corners_bary[:2] - corners_bary[2])[:, :2]))
        return [(pts, base_wts * frac)]
    if not np.any(flags):
        return []
    if depth == 0:
        pts = base_pts @ corners_bary
        phys = base_pts @ corners_phys
        frac = abs(np.linalg.det((corners_bary[:2] - corners_bary[2])[:, :2]))
        w = base_wts * frac * inside(phys[:, 0], phys[:, 1])
        return [(pts, w)]
    out = []
    for sub in _SUBDIV:
        sb = np.asarray(sub) @ corners_bary
        sp = np.asarray(sub) @ corners_phys
        out.extend(_masked_rule(sp, inside, depth - 1, base_pts, base_wts, sb))
    return out


def _masked_energy(disc, u_values, weight, lam, inside, depth=8, degree=6,
                   extra=None, extra_grad=None):
    """omega-weighted energy int (|grad u|^2 - lam p u^2) rho^m over the
    region where `inside` holds, with u = FEM field + optional closed-form
    part evaluated pointwise."""
    base_pts, base_wts = fem._dunavant(degree)
    area, bgrads = disc.cell_geometry()
    verts = disc.mesh.vertices
    tris = disc.mesh.triangles
    n = disc.mesh.params.get("dimension", 3)
    omega = cs.sphere_surface_area(n - 2)

    corners_all = verts[tris]  # (T, 3, 2)
    probes = np.concatenate([
        corners_all,
        0.5 * (corners_all + np.roll(corners_all, 1, axis=1)),
        corners_all.mean(axis=1, keepdims=True)], axis=1)
    flags = np.asarray(inside(probes[..., 0].ravel(), probes[..., 1].ravel()))
    flags = flags.reshape(len(tris), -1)
    full = flags.all(axis=1)
    cut = np.nonzero(~full & flags.any(axis=1))[0]

    def chunk_energy(tri_ids, bary, wts):
        phys = np.einsum("tqk,tkd->tqd", bary, corners_all[tri_ids])
        if disc.order == 1:
            shp = bary
            dshp = np.broadcast_to(np.eye(3), bary.shape[:2] + (3, 3))
        else:
            flat = bary.reshape(-1, 3)
            s, d = fem._p2_shapes(flat)
            shp = s.reshape(bary.shape[:2] + (-1,))
            dshp = d.reshape(bary.shape[:2] + d.shape[1:])
        nodal = u_values[disc.cells[tri_ids]]
        uvals = np.einsum("tqi,ti->tq", shp, nodal)
        grads = np.einsum("tqik,tkd,ti->tqd", dshp, bgrads[tri_ids], nodal)
        x1, rho = phys[..., 0], phys[..., 1]
        if extra is not None:
            uvals = uvals + extra(x1, rho)
            grads = grads + extra_grad(x1, rho)
        dens = np.einsum("tqd,tqd->tq", grads, grads)
        if weight is not None and lam != 0.0:
            dens = dens - lam * np.asarray(weight(x1, rho), float) * uvals ** 2
        rho_m = rho ** disc.measure_exponent if disc.measure_exponent else 1.0
        return float(np.sum(wts * dens * rho_m))

    total = 0.0
    full_ids = np.nonzero(full)[0]
    if len(full_ids):
        bary = np.broadcast_to(base_pts, (len(full_ids),) + base_pts.shape)
        wts = base_wts[None, :] * area[full_ids][:, None]
        total += chunk_energy(full_ids, bary, wts)
    for t in cut:
        chunks = _masked_rule(corners_all[t], inside, depth,
                              base_pts, base_wts)
        if not chunks:
            continue
        bary = np.vstack([c[0] for c in chunks])[None]
        wts = (np.concatenate([c[1] for c in chunks]) * area[t])[None]
        total += chunk_energy(np.array([t]), bary, wts)
    return omega * total


def _fd_gradient(f, h=1e-6):
    def grad(x1, rho):
        gx = (f(x1 + h, rho) - f(x1 - h, rho)) / (2 * h)
        gr = (f(x1, rho + h) - f(x1, np.maximum(rho - h, 0.0))) \
            / (rho + h - np.maximum(rho - h, 0.0))
        return np.stack([gx, gr], axis=-1)
    return grad


def _unpack_field(field, mesh=None, gradient=None, order=2):
    """Returns (disc, nodal_values, extra, extra_grad, evaluator)."""
    if isinstance(field, ProfileSolution):
        disc = field.field.disc
        extra_grad = _fd_gradient(field.carried)
        return disc, field.field.values, field.carried, extra_grad, field
    if isinstance(field, fem.FieldSolution):
        return field.disc, field.values, None, None, field.evaluate
    if mesh is None:
        raise ValueError("analytic fields need an integration mesh")
    disc = mesh if isinstance(mesh, fem.Discretization) \
        else fem.Discretization(mesh, order=order)
    grad = gradient if gradient is not None else _fd_gradient(field)
    zero = np.zeros(disc.n_nodes)
    return disc, zero, field, grad, field


# ----------------------------------------------------------------------------
# Frequency traces
# ----------------------------------------------------------------------------

@dataclass
class FrequencyTrace:
    radii: np.ndarray
    D: np.ndarray
    H: np.ndarray
    N: np.ndarray
    context: dict = dfield(default_factory=dict)


def frequency_exterior(field, weight, lam, radii, mesh=None, gradient=None,
                       depth: int = 8) -> FrequencyTrace:
    """Frequency of a left-half-space field over exterior regions |x| > t.

    `field` is a ProfileSolution, a FieldSolution on a D- mesh, or an
    analytic callable (then `mesh` supplies the integration support and
    `gradient` the exact gradient; a finite-difference fallback is used if
    absent)."""
    disc, values, extra, extra_grad, evaluator = _unpack_field(
        field, mesh, gradient)
    r_max = float(np.hypot(disc.mesh.vertices[:, 0],
                           disc.mesh.vertices[:, 1]).max())
    radii = np.asarray(sorted(float(r) for r in radii))
    if radii[0] <= 0:
        raise ValueError("radii must be positive")
    if radii[-1] >= r_max:
        raise ValueError(
            f"radius {radii[-1]} leaves an empty exterior (mesh extends "
            f"to {r_max:.3g})")
    n = disc.mesh.params.get("dimension", 3)

    D = np.empty(len(radii))
    H = np.empty(len(radii))
    for i, t in enumerate(radii):
        def inside(x1, rho, _t=t):
            return np.hypot(x1, rho) > _t
        e = _masked_energy(disc, values, weight, lam, inside, depth=depth,
                           extra=extra, extra_grad=extra_grad)
        D[i] = t ** (2 - n) * e
        H[i] = ch.hminus(evaluator, t, n)
        if H[i] <= 0:
            raise ValueError(f"boundary mass vanishes at radius {t}")
    return FrequencyTrace(radii, D, H, D / H,
                          {"kind": "exterior", "lambda": lam})


def frequency_channel(field, eps, t_list, weight=None, lam=0.0,
                      mesh=None, gradient=None,
                      depth: int = 8) -> FrequencyTrace:
    """Channel frequency N_eps(t) = eps * E(t) / Hc(t) with E(t) the energy
    over the region x1 < t and Hc the channel section mass at x1 = t."""
    disc, values, extra, extra_grad, evaluator = _unpack_field(
        field, mesh, gradient)
    t_list = np.asarray(sorted(float(t) for t in t_list))
    if np.any(t_list <= 0) or np.any(t_list >= 1):
        raise ValueError("sections must lie strictly inside the tube (0, 1)")
    n = disc.mesh.params.get("dimension", 3)

    D = np.empty(len(t_list))
    H = np.empty(len(t_list))
    for i, t in enumerate(t_list):
        def inside(x1, rho, _t=t):
            return x1 < _t
        e = _masked_energy(disc, values, weight, lam, inside, depth=depth,
                           extra=extra, extra_grad=extra_grad)
        _, hc = ch.htilde(evaluator, t, eps, n)
        if hc <= 0:
            raise ValueError(f"channel mass vanishes at section {t}")
        D[i] = e
        H[i] = hc
    return FrequencyTrace(t_list, D, H, eps * D / H,
                          {"kind": "channel", "eps": eps, "lambda": lam})


# ----------------------------------------------------------------------------
# Blow-up views
# ----------------------------------------------------------------------------

_KINDS = ("RightJunction", "Channel", "LeftJunction", "Normalized")


@dataclass
class BlowupView:
    """Rescaled view of a source field; calling evaluates the view."""

    source: object
    kind: str
    eps: float
    params: dict
    denominator: ScaledAmplitude

    def __call__(self, x1, rho):
        return self.evaluate(x1, rho)

    def evaluate(self, x1, rho):
        x1 = np.asarray(x1, dtype=float)
        rho = np.asarray(rho, dtype=float)
        eps = self.eps
        den = self.denominator.to_float()
        if den == 0.0:
            raise OverflowError("view denominator underflows double range")
        if self.kind == "RightJunction":
            return self.source(1.0 + eps * (x1 - 1.0), eps * rho) / den
        if self.kind == "Channel":
            x0 = self.params["x0"]
            return self.source(eps * (x1 - 1.0) + x0, eps * rho) / den
        if self.kind == "LeftJunction":
            return self.source(eps * x1, eps * rho) / den
        return self.source(x1, rho) / den


def blowup(field, kind: str, eps: float, x0: float | None = None,
           ktilde: float | None = None, dimension: int = 3) -> BlowupView:
    """Construct one of the four rescaled views of `field`.

    RightJunction: (1/eps) u(e1 + eps(x - e1));
    Channel:       u(eps(x1-1) + x0, eps x') / sqrt(Htilde(x0));
    LeftJunction:  u(eps x) / sqrt(section mass at x1 = eps);
    Normalized:    u / sqrt(half-sphere mass over Gamma-_ktilde).
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown blow-up kind {kind!r}")
    if not 0 < eps < 0.5:
        raise ValueError("eps out of range")
    params: dict = {}
    if kind == "RightJunction":
        den = ScaledAmplitude.from_float(eps)
    elif kind == "Channel":
        if x0 is None or not 0 < x0 < 1:
            raise ValueError("Channel view needs x0 in (0, 1)")
        params["x0"] = x0
        ht, _ = ch.htilde(field, x0, eps, dimension)
        if ht <= 0:
            raise ValueError("degenerate field: section mass vanishes")
        den = ScaledAmplitude.from_float(ht).sqrt()
    elif kind == "LeftJunction":
        ht, _ = ch.htilde(field, eps, eps, dimension)
        if ht <= 0:
            raise ValueError("degenerate field: section mass vanishes")
        den = ScaledAmplitude.from_float(ht).sqrt()
    else:
        if ktilde is None or ktilde <= 0:
            raise ValueError("Normalized view needs ktilde > 0")
        params["ktilde"] = ktilde
        m = cs.half_sphere_mass(field, 0.0, ktilde, -1, dimension)
        if m <= 0:
            raise ValueError("degenerate field: surface mass vanishes")
        den = ScaledAmplitude.from_float(m).sqrt()
    return BlowupView(field, kind, eps, params, den)


def compare_views(view, reference, x1, rho, weights=None) -> dict:
    """Sup and (weighted) L2 discrepancies between a view and a reference
    evaluator over a common sample set."""
    x1 = np.asarray(x1, dtype=float)
    rho = np.asarray(rho, dtype=float)
    a = np.asarray(view(x1, rho), dtype=float)
    b = np.asarray(reference(x1, rho), dtype=float)
    diff = a - b
    ok = np.isfinite(diff)
    if not np.any(ok):
        raise ValueError("no valid samples in the comparison window")
    w = np.ones_like(x1) if weights is None else np.asarray(weights, float)
    sup = float(np.max(np.abs(diff[ok])))
    l2 = float(math.sqrt(np.sum(w[ok] * diff[ok] ** 2) / np.sum(w[ok])))
    return {"sup": sup, "l2": l2, "samples": int(ok.sum())}
