"""Quality measures of a discretisation and error norms of computed runs.

The three quantities controlling the error bound of the scheme are estimated
directly from the assembled forms:

* C_D, the norm of the function reconstruction relative to the gradient
  reconstruction, is the square root of the largest eigenvalue of the pencil
  (M, A0) on the homogeneous unknowns, computed by inverse power iteration.
* W_D(omega), the defect of the discrete Stokes formula for a smooth field
  omega, is the A0-dual norm of the assembled linear functional, so it equals
  sqrt(l^T A0^{-1} l).
* The interpolation bound for S_D evaluates the sampling interpolant of a
  smooth admissible function and adds the two reconstruction errors.

Error norms of transient runs are evaluated by cell quadrature.  The default
centroid rule measures the cell-value error, which is the quantity that
superconverges for this scheme; the fan rule measures the full piecewise
constant reconstruction error instead and is first order no matter how
accurate the cell values are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .discretisation import (AssembledForms, GradientDiscretisation,
                             ObstacleVector, assemble_forms,
                             interpolate_exact, interpolate_initial,
                             reconstruct_gradient_flat)
from .timeloop import TransientSolution


class DiagnosticsError(Exception):
    """Missing exact data, degenerate norms or non-converged estimates."""


# -- quadrature flattenings --------------------------------------------------


def _cell_quad_flat(mesh, rule: str):
    """Points, weights and owning cell for a whole-mesh cell quadrature."""
    if rule == "centroid":
        return mesh.cell_points, mesh.cell_areas, np.arange(mesh.n_cells)
    if rule != "fan3":
        raise DiagnosticsError(f"unknown quadrature rule {rule!r}")
    from .quadrature import cell_rule

    pts, wts, idx = [], [], []
    for k in range(mesh.n_cells):
        p, w = cell_rule(mesh, k, "fan3")
        pts.append(p)
        wts.append(w)
        idx.append(np.full(w.size, k))
    return np.vstack(pts), np.concatenate(wts), np.concatenate(idx)


def _subcell_quad_flat(gd, rule: str):
    """Points, weights and owning subcell for a whole-mesh subcell quadrature."""
    if rule == "centroid":
        return gd.subcell_centroids, gd.subcell_volumes, np.arange(gd.n_subcells)
    if rule != "fan3":
        raise DiagnosticsError(f"unknown quadrature rule {rule!r}")
    tri = gd.subcell_triangles
    mids = 0.5 * (tri + np.roll(tri, -1, axis=1))
    pts = mids.reshape(-1, 2)
    w = np.repeat(gd.subcell_volumes / 3.0, 3)
    idx = np.repeat(np.arange(gd.n_subcells), 3)
    return pts, w, idx


# -- error norms -------------------------------------------------------------


@dataclass
class ErrorReport:
    """Discrete error norms of one transient run against an exact solution."""

    times: np.ndarray
    l2_per_node: np.ndarray
    grad_per_step: np.ndarray
    linf_l2: float
    spacetime_grad: float
    l2_final: float
    grad_final: float
    exact_l2_final: float
    exact_grad_final: float
    rel_l2_final: float
    rel_grad_final: float
    rel_linf_l2: float
    rel_spacetime_grad: float
    quadrature: str
    interp_per_node: Optional[np.ndarray] = None


def error_norms(gd: GradientDiscretisation, solution: TransientSolution,
                u_exact: Callable, grad_exact: Callable,
                rule: str = "centroid", with_interp: bool = True) -> ErrorReport:
    """Compare a run against an exact solution.

    ``u_exact(points, t)`` returns values, ``grad_exact(points, t)`` returns
    an (n, 2) array.  Relative norms divide by the exact-solution norms at
    the final time under the same quadrature; a zero exact norm is an error.
    With ``with_interp`` the report also carries, per time node, the distance
    between the exact solution and its admissible sampling interpolant.
    """
    if u_exact is None or grad_exact is None:
        raise DiagnosticsError("error norms need both exact callables")
    times = solution.grid.nodes
    n_nodes = times.size
    if len(solution.vectors) != n_nodes:
        raise DiagnosticsError(
            f"{len(solution.vectors)} vectors for {n_nodes} time nodes")

    mesh = gd.mesh
    pts, w, cidx = _cell_quad_flat(mesh, rule)
    spts, sw, sidx = _subcell_quad_flat(gd, rule)

    l2 = np.empty(n_nodes)
    interp = np.empty(n_nodes) if with_interp else None
    psi = solution.psi.values
    for n, t in enumerate(times):
        exact = np.asarray(u_exact(pts, float(t)), dtype=float)
        diff = solution.vectors[n].cells[cidx] - exact
        l2[n] = math.sqrt(float(w @ diff**2))
        if with_interp:
            clipped = np.maximum(u_exact(mesh.cell_points, float(t)), psi)
            diff = clipped[cidx] - exact
            interp[n] = math.sqrt(float(w @ diff**2))

    grad = np.empty(n_nodes - 1)
    for n in range(1, n_nodes):
        g = reconstruct_gradient_flat(gd, solution.vectors[n])
        ge = np.asarray(grad_exact(spts, float(times[n])), dtype=float)
        diff = g[sidx] - ge
        grad[n - 1] = math.sqrt(float(sw @ np.sum(diff**2, axis=1)))

    steps = solution.grid.steps
    spacetime = math.sqrt(float(np.sum(steps * grad**2)))

    t_final = float(times[-1])
    exact_l2 = math.sqrt(float(w @ np.asarray(u_exact(pts, t_final))**2))
    ge = np.asarray(grad_exact(spts, t_final), dtype=float)
    exact_grad = math.sqrt(float(sw @ np.sum(ge**2, axis=1)))
    if exact_l2 <= 0.0 or exact_grad <= 0.0:
        raise DiagnosticsError(
            "exact solution norm vanishes at the final time; "
            "relative errors are undefined")

    return ErrorReport(
        times=times,
        l2_per_node=l2,
        grad_per_step=grad,
        linf_l2=float(np.max(l2)),
        spacetime_grad=spacetime,
        l2_final=float(l2[-1]),
        grad_final=float(grad[-1]),
        exact_l2_final=exact_l2,
        exact_grad_final=exact_grad,
        rel_l2_final=float(l2[-1]) / exact_l2,
        rel_grad_final=float(grad[-1]) / exact_grad,
        rel_linf_l2=float(np.max(l2)) / exact_l2,
        rel_spacetime_grad=spacetime / (exact_grad * math.sqrt(max(t_final, 1e-300))),
        quadrature=rule,
        interp_per_node=interp,
    )


def eoc(errors, sizes) -> np.ndarray:
    """Experimental orders of convergence between consecutive levels."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(sizes, dtype=float)
    if e.shape != h.shape or e.ndim != 1 or e.size < 2:
        raise DiagnosticsError(
            f"need matching 1-d arrays of at least two levels, "
            f"got shapes {e.shape} and {h.shape}")
    if np.any(e <= 0.0):
        raise DiagnosticsError("errors must be positive to take orders")
    if np.any(np.diff(h) >= 0.0) or np.any(h <= 0.0):
        raise DiagnosticsError("mesh sizes must be positive and strictly decreasing")
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


# -- quality measures --------------------------------------------------------


def estimate_CD(gd: GradientDiscretisation, forms: Optional[AssembledForms] = None,
                tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest ratio of function to gradient reconstruction norms.

    Power iteration on the pencil (M, A0) restricted to the homogeneous
    unknowns, stopped when the eigenvalue is stable to ``tol`` relative.
    """
    if forms is None:
        forms = assemble_forms(gd)
    free = gd.free_dofs
    A0 = forms.plain_stiffness[free][:, free].tocsc()
    mass = forms.mass_diag[free]
    try:
        lu = spla.splu(A0)
    except RuntimeError as exc:
        raise DiagnosticsError(f"gradient form is singular: {exc}") from exc

    x = np.ones(free.size)
    x /= math.sqrt(float(x @ (A0 @ x)))
    lam = 0.0
    for _ in range(max_iter):
        z = lu.solve(mass * x)
        nrm = math.sqrt(float(z @ (A0 @ z)))
        if nrm == 0.0:
            raise DiagnosticsError("power iteration collapsed to the null space")
        x = z / nrm
        lam_new = float(x @ (mass * x))
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            return math.sqrt(lam_new)
        lam = lam_new
    raise DiagnosticsError(
        f"power iteration did not stabilise within {max_iter} iterations")


def estimate_WD(gd: GradientDiscretisation, omega: Callable, div_omega: Callable,
                forms: Optional[AssembledForms] = None,
                rule: str = "fan3") -> float:
    """Dual norm of the discrete Stokes defect for the field omega.

    ``omega(points)`` returns an (n, 2) array and ``div_omega(points)`` its
    divergence.  The supremum over homogeneous vectors is reached by the
    Riesz representative, so the value is sqrt(l^T A0^{-1} l).
    """
    if forms is None:
        forms = assemble_forms(gd)
    mesh = gd.mesh

    ell = np.zeros(gd.n_dofs)
    pts, w, cidx = _cell_quad_flat(mesh, rule)
    np.add.at(ell, cidx, w * np.asarray(div_omega(pts), dtype=float))

    spts, sw, sidx = _subcell_quad_flat(gd, rule)
    vals = np.asarray(omega(spts), dtype=float)
    moments = np.zeros((gd.n_subcells, 2))
    np.add.at(moments, sidx, sw[:, None] * vals)
    ell += gd._grad_matrix.T @ moments.ravel()

    free = gd.free_dofs
    ell_f = ell[free]
    A0 = forms.plain_stiffness[free][:, free].tocsc()
    try:
        x = spla.splu(A0).solve(ell_f)
    except RuntimeError as exc:
        raise DiagnosticsError(f"gradient form is singular: {exc}") from exc
    return math.sqrt(max(0.0, float(ell_f @ x)))


@dataclass
class SdBound:
    """Interpolation-based upper bound for the scheme consistency error."""

    total: float
    function_part: float
    gradient_part: float


def bound_SD(gd: GradientDiscretisation, phi: Callable, grad_phi: Callable,
             psi: ObstacleVector, rule: str = "fan3") -> SdBound:
    """Reconstruction errors of the admissible sampling interpolant of phi."""
    v = interpolate_exact(gd, phi, psi)
    pts, w, cidx = _cell_quad_flat(gd.mesh, rule)
    diff = v.cells[cidx] - np.asarray(phi(pts), dtype=float)
    func = math.sqrt(float(w @ diff**2))

    g = reconstruct_gradient_flat(gd, v)
    spts, sw, sidx = _subcell_quad_flat(gd, rule)
    gdiff = g[sidx] - np.asarray(grad_phi(spts), dtype=float)
    grad = math.sqrt(float(sw @ np.sum(gdiff**2, axis=1)))
    return SdBound(total=func + grad, function_part=func, gradient_part=grad)


def initial_interp_error(gd: GradientDiscretisation, u_ini: Callable,
                         psi: ObstacleVector, rule: str = "fan3",
                         initial_rule: str = "centroid") -> float:
    """Distance between the initial datum and its admissible interpolant."""
    v = interpolate_initial(gd, u_ini, psi, rule=initial_rule)
    pts, w, cidx = _cell_quad_flat(gd.mesh, rule)
    diff = v.cells[cidx] - np.asarray(u_ini(pts), dtype=float)
    return math.sqrt(float(w @ diff**2))


@dataclass
class GdQualityReport:
    """Stability and consistency indicators of one discretisation."""

    h: float
    n_cells: int
    n_edges: int
    c_d: float
    w_d: dict = field(default_factory=dict)
    s_d: dict = field(default_factory=dict)
    i_d0: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "n_cells": self.n_cells,
            "n_edges": self.n_edges,
            "c_d": self.c_d,
            "w_d": dict(self.w_d),
            "s_d": dict(self.s_d),
            "i_d0": dict(self.i_d0),
        }


def standard_probes(bbox):
    """Built-in smooth probe fields for the quality report, on a given box."""
    xmin, xmax, ymin, ymax = bbox
    sx = 2.0 / (xmax - xmin)
    sy = 2.0 / (ymax - ymin)

    def omega(p):
        return np.column_stack((np.sin(math.pi * p[:, 0]), np.cos(math.pi * p[:, 1])))

    def div_omega(p):
        return math.pi * (np.cos(math.pi * p[:, 0]) - np.sin(math.pi * p[:, 1]))

    def bump(p):
        return (sx * sx * (p[:, 0] - xmin) * (xmax - p[:, 0])
                * sy * sy * (p[:, 1] - ymin) * (ymax - p[:, 1]))

    def grad_bump(p):
        fx = sx * sx * (p[:, 0] - xmin) * (xmax - p[:, 0])
        fy = sy * sy * (p[:, 1] - ymin) * (ymax - p[:, 1])
        dfx = sx * sx * (xmin + xmax - 2.0 * p[:, 0])
        dfy = sy * sy * (ymin + ymax - 2.0 * p[:, 1])
        return np.column_stack((dfx * fy, fx * dfy))

    return {
        "sinusoidal_field": (omega, div_omega),
        "polynomial_bump": (bump, grad_bump),
    }


def gd_quality_report(gd: GradientDiscretisation,
                      forms: Optional[AssembledForms] = None) -> GdQualityReport:
    """Evaluate all quality measures with the standard probes."""
    from .mesh import mesh_size

    if forms is None:
        forms = assemble_forms(gd)
    probes = standard_probes(gd.mesh.bbox)
    omega, div_omega = probes["sinusoidal_field"]
    bump, grad_bump = probes["polynomial_bump"]
    zero_psi = ObstacleVector(np.zeros(gd.n_cells))

    report = GdQualityReport(
        h=mesh_size(gd.mesh),
        n_cells=gd.n_cells,
        n_edges=gd.n_edges,
        c_d=estimate_CD(gd, forms),
    )
    report.w_d["sinusoidal_field"] = estimate_WD(gd, omega, div_omega, forms)
    report.s_d["polynomial_bump"] = bound_SD(gd, bump, grad_bump, zero_psi).total
    report.i_d0["polynomial_bump"] = initial_interp_error(gd, bump, zero_psi)
    return report
