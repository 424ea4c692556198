"""Hybrid mimetic mixed discretisation on polytopal meshes.

Degrees of freedom are one value per cell and one value per edge.  The
reconstructed function is piecewise constant, equal to the cell value on each
cell.  The reconstructed gradient is piecewise constant on the edge subcells
D_{K,sigma} (the triangles spanned by an edge and the cell point x_K):

    grad_K v   = (1/|K|) sum_sigma |sigma| v_sigma n_{K,sigma}
    R_K(v)_s   = v_sigma - v_K - grad_K v . (x_sigma - x_K)
    grad_D v   = grad_K v + (sqrt(2)/d_{K,sigma}) R_K(v)_s n_{K,sigma}

The stabilised gradient is exact for affine functions sampled at cell points
and edge midpoints.  Homogeneous Dirichlet conditions eliminate the boundary
edge unknowns; with non-homogeneous data the same unknowns are pinned to the
boundary values instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .mesh import PolytopalMesh


class DiscretisationError(Exception):
    """Invalid diffusion data or mismatched vector sizes."""


@dataclass
class DofVector:
    """Values for every cell followed by values for every edge."""

    values: np.ndarray
    n_cells: int

    @property
    def cells(self) -> np.ndarray:
        return self.values[:self.n_cells]

    @property
    def edges(self) -> np.ndarray:
        return self.values[self.n_cells:]

    def copy(self) -> "DofVector":
        return DofVector(self.values.copy(), self.n_cells)

    def __len__(self) -> int:
        return self.values.size


@dataclass
class ObstacleVector:
    """Per-cell obstacle values psi_K = psi(x_K)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise DiscretisationError("obstacle values must be finite")


@dataclass
class LocalCellOperator:
    """Geometric part of the reconstruction operators on one cell.

    ``gradient_maps[j]`` is the 2 x (m+1) matrix taking the local vector
    (v_K, v_sigma1, ..., v_sigmam) to the reconstructed gradient on subcell j.
    """

    cell: int
    grad_coeffs: np.ndarray        # (2, m): consistent gradient from edge values
    stab_rows: np.ndarray          # (m, m+1): residual R_K rows
    subcell_volumes: np.ndarray    # (m,)
    gradient_maps: np.ndarray      # (m, 2, m+1)


@dataclass
class AssembledForms:
    """Global sparse forms over the full cell+edge unknown set."""

    stiffness: sp.csr_matrix        # diffusion-weighted gradient form
    plain_stiffness: sp.csr_matrix  # same with identity diffusion
    mass_diag: np.ndarray           # |K| on cell entries, zero on edges


def _as_diffusion_field(mesh: PolytopalMesh, diffusion) -> np.ndarray:
    nc = mesh.n_cells
    if diffusion is None:
        out = np.zeros((nc, 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 1.0
        return out
    if callable(diffusion):
        out = np.asarray(diffusion(mesh.cell_points), dtype=float)
        if out.shape != (nc, 2, 2):
            raise DiscretisationError(
                f"diffusion callable returned shape {out.shape}, expected {(nc, 2, 2)}")
        return out
    arr = np.asarray(diffusion, dtype=float)
    if arr.shape == (2, 2):
        return np.broadcast_to(arr, (nc, 2, 2)).copy()
    if arr.shape == (nc, 2, 2):
        return arr.copy()
    raise DiscretisationError(f"diffusion array has shape {arr.shape}")


def _check_diffusion(field: np.ndarray, eig_bounds) -> None:
    lo, hi = eig_bounds
    sym_defect = np.abs(field[:, 0, 1] - field[:, 1, 0])
    scale = np.maximum(1.0, np.max(np.abs(field), axis=(1, 2)))
    bad = np.nonzero(sym_defect > 1e-12 * scale)[0]
    if bad.size:
        raise DiscretisationError(f"diffusion tensor on cell {int(bad[0])} is not symmetric")
    # Closed-form eigenvalues of a symmetric 2x2 matrix.
    tr = field[:, 0, 0] + field[:, 1, 1]
    det = field[:, 0, 0] * field[:, 1, 1] - field[:, 0, 1] * field[:, 1, 0]
    disc = np.sqrt(np.maximum(0.0, 0.25 * tr * tr - det))
    lam_min = 0.5 * tr - disc
    lam_max = 0.5 * tr + disc
    bad = np.nonzero((lam_min < lo) | (lam_max > hi))[0]
    if bad.size:
        k = int(bad[0])
        raise DiscretisationError(
            f"diffusion eigenvalues on cell {k} are [{lam_min[k]:.3e}, {lam_max[k]:.3e}], "
            f"outside the configured bounds [{lo:.3e}, {hi:.3e}]")


class GradientDiscretisation:
    """Reconstruction operators, unknown layout and local stiffness data.

    Unknown ordering is all cells first, then all edges; ``edge_dof`` maps an
    edge index to its global unknown.  Instances are immutable after
    construction and can be shared between solves.
    """

    def __init__(self, mesh: PolytopalMesh, diffusion=None,
                 eig_bounds=(1e-12, 1e12)):
        self.mesh = mesh
        self.diffusion = _as_diffusion_field(mesh, diffusion)
        _check_diffusion(self.diffusion, eig_bounds)
        self.n_cells = mesh.n_cells
        self.n_edges = mesh.n_edges
        self.n_dofs = self.n_cells + self.n_edges

        self.local: list[LocalCellOperator] = []
        sub_cell = []
        sub_local = []
        sub_edge = []
        sub_vol = []
        sub_centroid = []
        sub_tri = []
        sqrt2 = math.sqrt(2.0)
        for k in range(self.n_cells):
            eids = mesh.cell_edges[k]
            m = eids.size
            lengths = mesh.edge_lengths[eids]
            normals = mesh.cell_normals[k]
            dists = mesh.cell_edge_dists[k]
            area = mesh.cell_areas[k]
            xk = mesh.cell_points[k]
            mids = mesh.edge_centers[eids]

            grad_coeffs = (normals * lengths[:, None]).T / area
            stab = np.zeros((m, m + 1))
            stab[:, 0] = -1.0
            stab[np.arange(m), 1 + np.arange(m)] += 1.0
            stab[:, 1:] -= (mids - xk) @ grad_coeffs

            maps = np.zeros((m, 2, m + 1))
            maps[:, :, 1:] = grad_coeffs[None, :, :]
            maps += (sqrt2 / dists)[:, None, None] * normals[:, :, None] * stab[:, None, :]

            vols = 0.5 * lengths * dists
            self.local.append(LocalCellOperator(
                cell=k, grad_coeffs=grad_coeffs, stab_rows=stab,
                subcell_volumes=vols, gradient_maps=maps))

            loc = mesh.cell_vertices[k]
            verts = mesh.vertices[loc]
            nxt = np.roll(verts, -1, axis=0)
            centroids = (xk + verts + nxt) / 3.0
            tri = np.stack((np.broadcast_to(xk, verts.shape), verts, nxt), axis=1)
            sub_cell.append(np.full(m, k))
            sub_local.append(np.arange(m))
            sub_edge.append(eids)
            sub_vol.append(vols)
            sub_centroid.append(centroids)
            sub_tri.append(tri)

        self.subcell_cell = np.concatenate(sub_cell)
        self.subcell_local = np.concatenate(sub_local)
        self.subcell_edge = np.concatenate(sub_edge)
        self.subcell_volumes = np.concatenate(sub_vol)
        self.subcell_centroids = np.vstack(sub_centroid)
        self.subcell_triangles = np.concatenate(sub_tri, axis=0)
        self.n_subcells = self.subcell_cell.size

        self._grad_matrix = self._build_gradient_matrix()
        self._local_stiffness: list = [None] * self.n_cells
        self._local_plain: list = [None] * self.n_cells

        bdofs = self.n_cells + mesh.boundary_edges
        self.boundary_edge_dofs = bdofs
        free = np.ones(self.n_dofs, dtype=bool)
        free[bdofs] = False
        self.free_dofs = np.nonzero(free)[0]

    def _build_gradient_matrix(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        row0 = 0
        for k in range(self.n_cells):
            op = self.local[k]
            m = op.subcell_volumes.size
            dofs = np.concatenate(([k], self.n_cells + self.mesh.cell_edges[k]))
            maps = op.gradient_maps.reshape(2 * m, m + 1)
            r, c = np.nonzero(maps)
            rows.append(row0 + r)
            cols.append(dofs[c])
            vals.append(maps[r, c])
            row0 += 2 * m
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(2 * self.n_subcells, self.n_dofs))
        return mat.tocsr()

    # -- unknown layout ------------------------------------------------------

    def edge_dof(self, e) -> np.ndarray:
        return self.n_cells + np.asarray(e)

    def zeros(self) -> DofVector:
        return DofVector(np.zeros(self.n_dofs), self.n_cells)

    def vector(self, cells=None, edges=None) -> DofVector:
        v = self.zeros()
        if cells is not None:
            v.cells[:] = cells
        if edges is not None:
            v.edges[:] = edges
        return v

    def check_vector(self, v: DofVector) -> None:
        if v.values.shape != (self.n_dofs,) or v.n_cells != self.n_cells:
            raise DiscretisationError(
                f"vector has {v.values.shape[0]} entries for {v.n_cells} cells, "
                f"expected {self.n_dofs} and {self.n_cells}")

    # -- local forms -----------------------------------------------------

    def local_stiffness(self, k: int) -> np.ndarray:
        A = self._local_stiffness[k]
        if A is None:
            op = self.local[k]
            A = np.einsum("jai,ab,jbl,j->il", op.gradient_maps, self.diffusion[k],
                          op.gradient_maps, op.subcell_volumes, optimize=True)
            A = 0.5 * (A + A.T)
            self._local_stiffness[k] = A
        return A

    def local_plain_stiffness(self, k: int) -> np.ndarray:
        A = self._local_plain[k]
        if A is None:
            op = self.local[k]
            A = np.einsum("jai,jal,j->il", op.gradient_maps, op.gradient_maps,
                          op.subcell_volumes, optimize=True)
            A = 0.5 * (A + A.T)
            self._local_plain[k] = A
        return A


def build_gd(mesh: PolytopalMesh, diffusion=None,
             eig_bounds=(1e-12, 1e12)) -> GradientDiscretisation:
    """Build the discretisation for a mesh and an optional diffusion field.

    ``diffusion`` may be None (identity), a constant 2x2 array, a per-cell
    (n_cells, 2, 2) array, or a callable evaluated at the cell points.  Each
    tensor must be symmetric with eigenvalues inside ``eig_bounds``.
    """
    return GradientDiscretisation(mesh, diffusion, eig_bounds)


# -- reconstructions ---------------------------------------------------------


def reconstruct_function(gd: GradientDiscretisation, v: DofVector) -> np.ndarray:
    """Cell values of the piecewise-constant reconstruction."""
    gd.check_vector(v)
    return v.cells.copy()


def reconstruct_gradient_flat(gd: GradientDiscretisation, v: DofVector) -> np.ndarray:
    """Per-subcell gradients as an (n_subcells, 2) array.

    Subcells are ordered cell by cell, matching ``gd.subcell_cell`` and
    ``gd.subcell_volumes``.
    """
    gd.check_vector(v)
    return (gd._grad_matrix @ v.values).reshape(gd.n_subcells, 2)


def reconstruct_gradient(gd: GradientDiscretisation, v: DofVector) -> list:
    """Per-cell arrays of subcell gradients, each of shape (m_K, 2)."""
    flat = reconstruct_gradient_flat(gd, v)
    out = []
    start = 0
    for k in range(gd.n_cells):
        m = gd.local[k].subcell_volumes.size
        out.append(flat[start:start + m])
        start += m
    return out


def assemble_forms(gd: GradientDiscretisation) -> AssembledForms:
    """Assemble the global stiffness forms and the diagonal cell mass."""
    nnz = sum((op.subcell_volumes.size + 1) ** 2 for op in gd.local)
    rows = np.empty(nnz, dtype=int)
    cols = np.empty(nnz, dtype=int)
    vals = np.empty(nnz)
    vals0 = np.empty(nnz)
    at = 0
    for k in range(gd.n_cells):
        dofs = np.concatenate(([k], gd.n_cells + gd.mesh.cell_edges[k]))
        A = gd.local_stiffness(k)
        A0 = gd.local_plain_stiffness(k)
        n = dofs.size
        rr = np.repeat(dofs, n)
        cc = np.tile(dofs, n)
        rows[at:at + n * n] = rr
        cols[at:at + n * n] = cc
        vals[at:at + n * n] = A.ravel()
        vals0[at:at + n * n] = A0.ravel()
        at += n * n
    shape = (gd.n_dofs, gd.n_dofs)
    stiffness = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    plain = sp.coo_matrix((vals0, (rows, cols)), shape=shape).tocsr()
    mass = np.zeros(gd.n_dofs)
    mass[:gd.n_cells] = gd.mesh.cell_areas
    return AssembledForms(stiffness=stiffness, plain_stiffness=plain, mass_diag=mass)


def fluxes(gd: GradientDiscretisation, v: DofVector, k: int) -> np.ndarray:
    """Numerical normal fluxes F_{K,sigma}(v) across the edges of cell k.

    They are defined through the local gradient form by
    sum_sigma |sigma| F_{K,sigma}(v) (w_K - w_sigma) = int_K Lambda grad_D v . grad_D w
    for every test vector w, which pins them down uniquely.
    """
    gd.check_vector(v)
    eids = gd.mesh.cell_edges[k]
    loc = np.concatenate(([v.cells[k]], v.edges[eids]))
    Av = gd.local_stiffness(k) @ loc
    return -Av[1:] / gd.mesh.edge_lengths[eids]


def flux_conservation_defect(gd: GradientDiscretisation, forms: AssembledForms,
                             v: DofVector) -> float:
    """Largest interior-edge defect |F_K + F_L| of the two-sided fluxes."""
    gd.check_vector(v)
    resid = forms.stiffness @ v.values
    interior = gd.n_cells + gd.mesh.interior_edges
    if interior.size == 0:
        return 0.0
    return float(np.max(np.abs(resid[interior]) / gd.mesh.edge_lengths[gd.mesh.interior_edges]))


# -- interpolants ------------------------------------------------------------


def interpolate_obstacle(gd: GradientDiscretisation, psi: Callable) -> ObstacleVector:
    """Per-cell obstacle values psi(x_K)."""
    return ObstacleVector(np.asarray(psi(gd.mesh.cell_points), dtype=float))


def interpolate_initial(gd: GradientDiscretisation, u_ini: Callable,
                        psi: ObstacleVector, rule: str = "centroid") -> DofVector:
    """Admissible initial vector: cell averages clipped at the obstacle.

    Cell averages use the centroid rule by default; ``rule='fan3'`` subdivides
    the cell for a quadratic-exact average.  Edge values are zero, which is
    harmless because only cell values of the previous step enter the scheme.
    """
    from .quadrature import integrate_cells

    v = gd.zeros()
    if rule == "centroid":
        v.cells[:] = u_ini(gd.mesh.cell_points)
    else:
        v.cells[:] = integrate_cells(gd.mesh, u_ini, rule) / gd.mesh.cell_areas
    np.maximum(v.cells, psi.values, out=v.cells)
    return v


def interpolate_exact(gd: GradientDiscretisation, fn: Callable,
                      psi: Optional[ObstacleVector] = None) -> DofVector:
    """Sampling interpolant: cell values fn(x_K), edge values fn(x_sigma).

    With an obstacle the cell values are clipped from below so the result is
    admissible; edge values are never constrained.
    """
    v = gd.zeros()
    v.cells[:] = fn(gd.mesh.cell_points)
    v.edges[:] = fn(gd.mesh.edge_centers)
    if psi is not None:
        np.maximum(v.cells, psi.values, out=v.cells)
    return v
