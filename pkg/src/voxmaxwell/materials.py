"""Anisotropic material tensors and SPD mass matrices.

The permittivity acts on edge DOFs and the permeability on face DOFs.  Both
mass matrices are assembled by collocating DOF triples at the eight corners
of every cell: at each corner the three DOFs of the cell meeting there (one
per axis) form a local vector, and the corner contributes an (h^3/8)-weighted
3x3 block of the cell tensor.  This keeps the quadratic form

    x^T M x  =  sum_cells sum_corners (h^3/8) v(corner)^T T(cell) v(corner)

symmetric, positive definite, exactly equal to the continuum integral for
piecewise-constant reconstructions of constant fields, and sandwiched
between c^-1 and c times the geometric (identity-tensor) weights.  For
diagonal tensors the matrix is diagonal with the familiar dual volumes
(h^3 in the interior, halved where the dual volume is truncated).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .grid import GAMMA1, DofMap

_SYM_PACK = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class MaterialError(ValueError):
    """Material field violates its declared bounds."""


@dataclass(frozen=True)
class TensorField:
    """Per-cell symmetric 3x3 tensor with uniform spectral bounds.

    values: (n_cells, 3, 3); every tensor must be symmetric with
    eigenvalues in [1/c_bound, c_bound].  lipschitz_const is metadata only.
    """

    values: np.ndarray
    c_bound: float
    lipschitz_const: Optional[float] = None

    def __post_init__(self):
        v = self.values
        asym = np.abs(v - np.transpose(v, (0, 2, 1))).max() if v.size else 0.0
        if asym > 1e-14:
            raise MaterialError(f"tensor asymmetry {asym:.3e} exceeds 1e-14")
        eigs = np.linalg.eigvalsh(v)
        viol = (eigs.min(axis=1) < 1.0 / self.c_bound - 1e-12) | \
               (eigs.max(axis=1) > self.c_bound + 1e-12)
        if viol.any():
            bad = int(np.argmax(viol))
            raise MaterialError(
                f"cell {bad}: eigenvalues [{eigs[bad].min():.6g}, "
                f"{eigs[bad].max():.6g}] outside [1/{self.c_bound}, {self.c_bound}]"
            )

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FeedbackField:
    """Per-Gamma1-face symmetric positive definite 2x2 feedback tensor.

    values: (n_gamma1, 2, 2) in each face's (t1, t2) tangential frame,
    ordered like DofMap.gamma1_indices.
    """

    values: np.ndarray
    c_bound: float

    def __post_init__(self):
        v = self.values
        if v.size:
            asym = np.abs(v - np.transpose(v, (0, 2, 1))).max()
            if asym > 1e-14:
                raise MaterialError(f"feedback asymmetry {asym:.3e} exceeds 1e-14")
            eigs = np.linalg.eigvalsh(v)
            if eigs.min() < 1.0 / self.c_bound - 1e-12 or eigs.max() > self.c_bound + 1e-12:
                raise MaterialError(
                    f"feedback eigenvalues [{eigs.min():.6g}, {eigs.max():.6g}] "
                    f"outside [1/{self.c_bound}, {self.c_bound}]"
                )


Descriptor = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def sample_tensor_field(dofmap: DofMap, descriptor: Descriptor,
                        c_bound: Optional[float] = None) -> TensorField:
    """Sample a material descriptor at the active cell centers.

    descriptor may be a scalar, a constant 3x3 array, an (n_cells, 6)
    packed array (xx, yy, zz, xy, xz, yz), or a callable mapping an
    (n, 3) array of points to (n, 3, 3) tensors.
    """
    n = dofmap.n_cells
    if callable(descriptor):
        vals = np.asarray(descriptor(dofmap.cell_centers()), dtype=float)
        if vals.shape != (n, 3, 3):
            raise MaterialError(f"callable returned shape {vals.shape}, "
                                f"expected {(n, 3, 3)}")
    else:
        arr = np.asarray(descriptor, dtype=float)
        if arr.ndim == 0:
            vals = np.tile(float(arr) * np.eye(3), (n, 1, 1))
        elif arr.shape == (3, 3):
            vals = np.tile(arr, (n, 1, 1))
        elif arr.shape == (n, 6):
            vals = np.empty((n, 3, 3))
            for col, (i, j) in enumerate(_SYM_PACK):
                vals[:, i, j] = arr[:, col]
                vals[:, j, i] = arr[:, col]
        else:
            raise MaterialError(f"unsupported tensor descriptor shape {arr.shape}")
    if c_bound is None:
        eigs = np.linalg.eigvalsh(vals)
        c_bound = float(max(eigs.max(), 1.0 / eigs.min(), 1.0))
    return TensorField(vals, c_bound)


def sample_feedback(dofmap: DofMap, descriptor, c_bound: Optional[float] = None
                    ) -> FeedbackField:
    """Sample the boundary feedback on the Gamma1 faces.

    descriptor: scalar, a 2x2 array used on every face, an (n_gamma1, 2, 2)
    array, or a callable mapping (n, 3) face centers to (n, 2, 2) tensors.
    """
    g1 = dofmap.gamma1_indices
    n = g1.size
    if callable(descriptor):
        centers = dofmap.face_centers()[dofmap.bf_face[g1]]
        vals = np.asarray(descriptor(centers), dtype=float)
    else:
        arr = np.asarray(descriptor, dtype=float)
        if arr.ndim == 0:
            vals = np.tile(float(arr) * np.eye(2), (n, 1, 1))
        elif arr.shape == (2, 2):
            vals = np.tile(arr, (n, 1, 1))
        elif arr.shape == (n, 2, 2):
            vals = arr.copy()
        else:
            raise MaterialError(f"unsupported feedback descriptor shape {arr.shape}")
    if c_bound is None:
        if n:
            eigs = np.linalg.eigvalsh(vals)
            c_bound = float(max(eigs.max(), 1.0 / eigs.min(), 1.0))
        else:
            c_bound = 1.0
    return FeedbackField(vals, c_bound)


def _corner_dofs(dofmap: DofMap, species: str) -> np.ndarray:
    """Global DOF triples (x, y, z species) at the 8 corners of each cell.

    Returns an (n_cells, 8, 3) int array.  For edges, the corner's DOF of
    axis a is the unique a-edge of the cell touching that corner; for faces
    it is the cell face orthogonal to a on the corner's side.
    """
    zz, yy, xx = np.nonzero(dofmap.cell_active)
    cid = dofmap.cell_id[zz, yy, xx]
    n = cid.size
    out = np.empty((n, 8, 3), dtype=np.int64)
    corner = 0
    for dz in (0, 1):
        for dy in (0, 1):
            for dx in (0, 1):
                for axis in range(3):
                    d = (dx, dy, dz)
                    if species == "edge":
                        # edge of direction `axis` at the corner: offset along
                        # the edge axis is the cell index itself
                        ex = xx + (d[0] if axis != 0 else 0)
                        ey = yy + (d[1] if axis != 1 else 0)
                        ez = zz + (d[2] if axis != 2 else 0)
                        gid = dofmap.edge_global_id(axis, ez, ey, ex)
                    else:
                        # face normal to `axis` on the corner's side
                        fx = xx + (d[0] if axis == 0 else 0)
                        fy = yy + (d[1] if axis == 1 else 0)
                        fz = zz + (d[2] if axis == 2 else 0)
                        gid = dofmap.face_global_id(axis, fz, fy, fx)
                    out[cid, corner, axis] = gid
                corner += 1
    if (out < 0).any():
        raise AssertionError("active cell references an inactive sub-entity")
    return out


def assemble_mass(dofmap: DofMap, field: TensorField, species: str) -> sp.csr_matrix:
    """Weighted mass matrix on the edge ("edge") or face ("face") DOF space."""
    if species not in ("edge", "face"):
        raise ValueError(f"species must be 'edge' or 'face', got {species!r}")
    if field.n_cells != dofmap.n_cells:
        raise MaterialError("tensor field sampled on a different grid")
    n_dof = dofmap.n_edges if species == "edge" else dofmap.n_faces
    triples = _corner_dofs(dofmap, species)  # (n_cells, 8, 3)
    w = dofmap.h ** 3 / 8.0
    blocks = w * field.values  # (n_cells, 3, 3)

    rows = np.repeat(triples, 3, axis=2).reshape(-1)          # i index
    cols = np.tile(triples, (1, 1, 3)).reshape(-1)            # j index
    vals = np.broadcast_to(blocks[:, None, :, :],
                           (field.n_cells, 8, 3, 3)).reshape(-1)
    M = sp.coo_matrix((vals, (rows, cols)), shape=(n_dof, n_dof)).tocsr()
    M.sum_duplicates()
    M.eliminate_zeros()
    _spd_probe(M)
    return M


def _spd_probe(M: sp.csr_matrix):
    """Cheap factorization probe; assembly should make this unreachable."""
    asym = abs(M - M.T).max() if M.nnz else 0.0
    if asym > 0:
        raise AssertionError(f"mass matrix asymmetry {asym:.3e}")
    try:
        from scipy.sparse.linalg import splu
        lu = splu(M.tocsc(), diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
        d = lu.U.diagonal()
        if (d <= 0).any():
            raise AssertionError(
                f"mass matrix not positive definite; smallest pivot {d.min():.3e}")
    except RuntimeError as exc:  # singular factorization
        raise AssertionError(f"mass matrix factorization failed: {exc}") from exc


def geometric_weights(dofmap: DofMap, species: str) -> np.ndarray:
    """Diagonal of the identity-tensor mass (dual volumes)."""
    if species == "edge":
        n_adj = np.zeros(dofmap.n_edges)
    else:
        n_adj = np.zeros(dofmap.n_faces)
    triples = _corner_dofs(dofmap, species)
    np.add.at(n_adj, triples.reshape(-1), dofmap.h ** 3 / 8.0)
    return n_adj


def assemble_trace_mass(dofmap: DofMap) -> sp.dia_matrix:
    """Area weights on the boundary trace space (2 components per face)."""
    n = 2 * dofmap.n_boundary_faces
    return sp.diags(np.full(n, dofmap.h ** 2))


def assemble_boundary_mass(dofmap: DofMap, k: FeedbackField,
                           inverse: bool = False) -> sp.csr_matrix:
    """SPD matrix of the form <k .,.> (area-weighted) on Gamma1 trace DOFs.

    Rows/columns are indexed like the full trace space (2 per boundary
    face); rows of Gamma0 faces are zero.  With inverse=True the blocks use
    k^-1 (the impedance substitution for the generator).
    """
    g1 = dofmap.gamma1_indices
    n = 2 * dofmap.n_boundary_faces
    if g1.size == 0:
        return sp.csr_matrix((n, n))
    blocks = k.values if not inverse else np.linalg.inv(k.values)
    blocks = dofmap.h ** 2 * blocks
    base = 2 * g1
    rows = np.repeat(np.stack([base, base, base + 1, base + 1], axis=1).reshape(-1), 1)
    cols = np.stack([base, base + 1, base, base + 1], axis=1).reshape(-1)
    vals = blocks[:, [0, 0, 1, 1], [0, 1, 0, 1]].reshape(-1)
    M = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return M


@dataclass
class MassMatrices:
    """All weighted inner products of one material configuration."""

    M_eps: sp.csr_matrix        # edge space, action of epsilon
    M_mu: sp.csr_matrix         # face space, action of mu
    W_edge: np.ndarray          # geometric dual volumes (diagonal)
    W_face: np.ndarray
    M_gamma: sp.dia_matrix      # trace-space area weights
    M_gamma_k: sp.csr_matrix    # k-weighted Gamma1 form
    M_gamma_kinv: sp.csr_matrix # k^-1-weighted Gamma1 form
    eps: TensorField
    mu: TensorField
    k: FeedbackField


def build_masses(dofmap: DofMap, eps: TensorField, mu: TensorField,
                 k: FeedbackField) -> MassMatrices:
    return MassMatrices(
        M_eps=assemble_mass(dofmap, eps, "edge"),
        M_mu=assemble_mass(dofmap, mu, "face"),
        W_edge=geometric_weights(dofmap, "edge"),
        W_face=geometric_weights(dofmap, "face"),
        M_gamma=assemble_trace_mass(dofmap),
        M_gamma_k=assemble_boundary_mass(dofmap, k, inverse=False),
        M_gamma_kinv=assemble_boundary_mass(dofmap, k, inverse=True),
        eps=eps, mu=mu, k=k,
    )
