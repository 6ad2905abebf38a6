"""Discrete gradient/curl/divergence, boundary traces and the weak curl.

The primal complex acts on point samples: the gradient maps node values to
edge differences, the curl maps edge circulations to face-normal
components, the divergence maps face values to cell balances.  All entries
are integers divided by the spacing h, so C @ G = 0 and D @ C = 0 hold
exactly in floating point.

Boundary traces are face-centered with two tangential components per
boundary face.  For a face with normal axis n the tangential frame is the
cyclic pair (t1, t2) = (n+1, n+2) mod 3:

    T_tau  e = tangential E at the face center (mean of the two in-plane
               edges per component),
    T_cross h = (nu x H) in the same frame, reconstructed one-sidedly from
               the owner cell's tangential faces; with outward normal
               nu = s*n this is (-s*H_t2, +s*H_t1).

The pairing (T_cross h)^T M_gamma (T_tau e) then discretizes the surface
integral of (nu x H) . ((nu x E) x nu), which is the boundary term of the
curl integration-by-parts identity; the weighted weak curl is defined by
that identity and therefore satisfies it to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .grid import GAMMA0, GAMMA1, DofMap
from .materials import MassMatrices


def _coo(rows, cols, vals, shape):
    return sp.coo_matrix((np.asarray(vals, dtype=float),
                          (np.asarray(rows), np.asarray(cols))),
                         shape=shape).tocsr()


def assemble_gradient(dm: DofMap) -> sp.csr_matrix:
    """Node -> edge difference quotient matrix (n_edges x n_nodes)."""
    rows, cols, vals = [], [], []
    inv_h = 1.0 / dm.h
    for axis in range(3):
        act = dm.edge_active[axis]
        zz, yy, xx = np.nonzero(act)
        eid = dm.edge_id[axis][zz, yy, xx] + dm.edge_offset[axis]
        dz, dy, dx = {0: (0, 0, 1), 1: (0, 1, 0), 2: (1, 0, 0)}[axis]
        tail = dm.node_id[zz, yy, xx]
        head = dm.node_id[zz + dz, yy + dy, xx + dx]
        rows += [eid, eid]
        cols += [head, tail]
        vals += [np.full(eid.size, inv_h), np.full(eid.size, -inv_h)]
    return _coo(np.concatenate(rows), np.concatenate(cols),
                np.concatenate(vals), (dm.n_edges, dm.n_nodes))


def assemble_curl(dm: DofMap) -> sp.csr_matrix:
    """Edge -> face circulation matrix (n_faces x n_edges).

    Row of an n-face at [z,y,x]: (rot E)_n = d_t1 E_t2 - d_t2 E_t1 with the
    cyclic frame (n, t1, t2).
    """
    rows, cols, vals = [], [], []
    inv_h = 1.0 / dm.h
    for axis in range(3):
        t1, t2 = (axis + 1) % 3, (axis + 2) % 3
        act = dm.face_active[axis]
        zz, yy, xx = np.nonzero(act)
        fid = dm.face_id[axis][zz, yy, xx] + dm.face_offset[axis]

        def shifted(ax_dir, dt1=0, dt2=0):
            # edge of direction ax_dir at the face corner offset by
            # (dt1, dt2) along (t1, t2)
            x, y, z = xx.copy(), yy.copy(), zz.copy()
            for d, amount in ((t1, dt1), (t2, dt2)):
                if d == 0:
                    x = x + amount
                elif d == 1:
                    y = y + amount
                else:
                    z = z + amount
            return dm.edge_global_id(ax_dir, z, y, x)

        # + E_t2(t1+1) - E_t2(t1)  (d/dt1 of E_t2)
        rows += [fid, fid]
        cols += [shifted(t2, dt1=1), shifted(t2, dt1=0)]
        vals += [np.full(fid.size, inv_h), np.full(fid.size, -inv_h)]
        # - E_t1(t2+1) + E_t1(t2)  (-d/dt2 of E_t1)
        rows += [fid, fid]
        cols += [shifted(t1, dt2=1), shifted(t1, dt2=0)]
        vals += [np.full(fid.size, -inv_h), np.full(fid.size, inv_h)]
    return _coo(np.concatenate(rows), np.concatenate(cols),
                np.concatenate(vals), (dm.n_faces, dm.n_edges))


def assemble_divergence(dm: DofMap) -> sp.csr_matrix:
    """Face -> cell balance matrix (n_cells x n_faces)."""
    rows, cols, vals = [], [], []
    inv_h = 1.0 / dm.h
    zz, yy, xx = np.nonzero(dm.cell_active)
    cid = dm.cell_id[zz, yy, xx]
    for axis in range(3):
        dz, dy, dx = {0: (0, 0, 1), 1: (0, 1, 0), 2: (1, 0, 0)}[axis]
        plus = dm.face_global_id(axis, zz + dz, yy + dy, xx + dx)
        minus = dm.face_global_id(axis, zz, yy, xx)
        rows += [cid, cid]
        cols += [plus, minus]
        vals += [np.full(cid.size, inv_h), np.full(cid.size, -inv_h)]
    return _coo(np.concatenate(rows), np.concatenate(cols),
                np.concatenate(vals), (dm.n_cells, dm.n_faces))


def assemble_traces(dm: DofMap):
    """(T_tau, T_cross, M_gamma) on the full boundary trace space.

    The trace space has two rows per boundary face, ordered like the
    boundary-face tables; component 0 is the t1 = (n+1)%3 direction.
    """
    n_tr = 2 * dm.n_boundary_faces
    rows_t, cols_t, vals_t = [], [], []
    rows_x, cols_x, vals_x = [], [], []
    for pos in range(dm.n_boundary_faces):
        axis = int(dm.bf_axis[pos])
        sgn = int(dm.bf_sign[pos])
        z, y, x = (int(v) for v in dm.bf_coord[pos])
        t1, t2 = (axis + 1) % 3, (axis + 2) % 3

        def edge_at(direction, dt1=0, dt2=0):
            c = [x, y, z]
            for d, amount in ((t1, dt1), (t2, dt2)):
                c[d] += amount
            return int(dm.edge_global_id(direction, c[2], c[1], c[0]))

        # T_tau: average the two in-plane edges per tangential component
        for comp, direction, off_dir in ((0, t1, "t2"), (1, t2, "t1")):
            for off in (0, 1):
                kw = {"dt2": off} if off_dir == "t2" else {"dt1": off}
                rows_t.append(2 * pos + comp)
                cols_t.append(edge_at(direction, **kw))
                vals_t.append(0.5)

        # T_cross: owner-cell tangential faces; (nu x H) = (-s H_t2, +s H_t1)
        oc = int(dm.bf_owner[pos])
        # owner cell coordinates
        cz, cy, cx = z, y, x
        if axis == 0:
            cx += -(sgn + 1) // 2
        elif axis == 1:
            cy += -(sgn + 1) // 2
        else:
            cz += -(sgn + 1) // 2

        def cell_faces(direction):
            c0 = [cx, cy, cz]
            c1 = [cx, cy, cz]
            c1[direction] += 1
            return (int(dm.face_global_id(direction, c0[2], c0[1], c0[0])),
                    int(dm.face_global_id(direction, c1[2], c1[1], c1[0])))

        for fa in cell_faces(t2):
            rows_x.append(2 * pos + 0)
            cols_x.append(fa)
            vals_x.append(-0.5 * sgn)
        for fa in cell_faces(t1):
            rows_x.append(2 * pos + 1)
            cols_x.append(fa)
            vals_x.append(0.5 * sgn)

    T_tau = _coo(rows_t, cols_t, vals_t, (n_tr, dm.n_edges))
    T_cross = _coo(rows_x, cols_x, vals_x, (n_tr, dm.n_faces))
    M_gamma = sp.diags(np.full(n_tr, dm.h ** 2))
    return T_tau, T_cross, M_gamma


def gamma_selector(dm: DofMap, label: int) -> sp.csr_matrix:
    """Restriction of the trace space to the rows of one boundary label."""
    pos = np.nonzero(dm.boundary_label == label)[0]
    rows = np.arange(2 * pos.size)
    cols = np.stack([2 * pos, 2 * pos + 1], axis=1).reshape(-1)
    return _coo(rows, cols, np.ones(rows.size), (2 * pos.size, 2 * dm.n_boundary_faces))


def pec_edge_mask(dm: DofMap, labels=(GAMMA0,)) -> np.ndarray:
    """True for edges kept after strongly eliminating tangential edge DOFs
    of boundary faces carrying one of ``labels`` (default: Gamma0)."""
    drop = np.zeros(dm.n_edges, dtype=bool)
    for pos in range(dm.n_boundary_faces):
        if dm.boundary_label[pos] not in labels:
            continue
        axis = int(dm.bf_axis[pos])
        z, y, x = (int(v) for v in dm.bf_coord[pos])
        t1, t2 = (axis + 1) % 3, (axis + 2) % 3
        for direction, off_dir in ((t1, t2), (t2, t1)):
            for off in (0, 1):
                c = [x, y, z]
                c[off_dir] += off
                drop[int(dm.edge_global_id(direction, c[2], c[1], c[0]))] = True
    return ~drop


def in_plane_boundary_edge_mask(dm: DofMap) -> np.ndarray:
    """True for edges lying in the plane of any boundary face."""
    return ~pec_edge_mask(dm, labels=(GAMMA0, GAMMA1))


def boundary_node_mask(dm: DofMap, labels=(GAMMA0, GAMMA1)) -> np.ndarray:
    """True for nodes lying on a boundary face with one of ``labels``."""
    on = np.zeros(dm.n_nodes, dtype=bool)
    for pos in range(dm.n_boundary_faces):
        if dm.boundary_label[pos] not in labels:
            continue
        axis = int(dm.bf_axis[pos])
        z, y, x = (int(v) for v in dm.bf_coord[pos])
        t1, t2 = (axis + 1) % 3, (axis + 2) % 3
        for d1 in (0, 1):
            for d2 in (0, 1):
                c = [x, y, z]
                c[t1] += d1
                c[t2] += d2
                on[dm.node_id[c[2], c[1], c[0]]] = True
    return on


def interior_node_mask(dm: DofMap) -> np.ndarray:
    """True for nodes not on the boundary surface."""
    return ~boundary_node_mask(dm, labels=(GAMMA0, GAMMA1))


def restriction(mask: np.ndarray) -> sp.csr_matrix:
    """Selector matrix R with R @ x = x[mask]."""
    idx = np.nonzero(mask)[0]
    return _coo(np.arange(idx.size), idx, np.ones(idx.size),
                (idx.size, mask.size))


@dataclass
class DiscreteComplex:
    """Exact-sequence operators and traces of one DofMap."""

    dofmap: DofMap
    G: sp.csr_matrix
    C: sp.csr_matrix
    D: sp.csr_matrix
    T_tau: sp.csr_matrix
    T_cross: sp.csr_matrix
    M_gamma: sp.dia_matrix
    gamma1_selector: sp.csr_matrix

    def exactness_residuals(self, n_probes: int = 50, seed: int = 0):
        """Max |(C G) phi| and |(D C) e| over random probes.

        The composed matrices cancel structurally (equal-magnitude entries),
        so these are exact zeros; applying the factors sequentially would
        instead accumulate round-off.
        """
        CG = (self.C @ self.G).tocsr()
        DC = (self.D @ self.C).tocsr()
        rng = np.random.default_rng(seed)
        cg = dc = 0.0
        for _ in range(n_probes):
            phi = rng.standard_normal(self.G.shape[1])
            cg = max(cg, np.abs(CG @ phi).max(initial=0.0))
            e = rng.standard_normal(self.C.shape[1])
            dc = max(dc, np.abs(DC @ e).max(initial=0.0))
        return cg, dc


def assemble_complex(dm: DofMap) -> DiscreteComplex:
    T_tau, T_cross, M_gamma = assemble_traces(dm)
    return DiscreteComplex(
        dofmap=dm,
        G=assemble_gradient(dm),
        C=assemble_curl(dm),
        D=assemble_divergence(dm),
        T_tau=T_tau,
        T_cross=T_cross,
        M_gamma=M_gamma,
        gamma1_selector=gamma_selector(dm, GAMMA1),
    )


class WeakCurl:
    """Face -> edge curl defined by the integration-by-parts identity

        M_eps (C_weak h) = C^T M_mu h + T_tau^T M_gamma (T_cross h),

    stored in factored form (sparse right-hand side plus an M_eps solve).
    With the boundary term dropped (pec=True) it is the plain adjoint
    M_eps^-1 C^T M_mu.
    """

    def __init__(self, complex_: DiscreteComplex, masses: MassMatrices,
                 pec: bool = False):
        self.rhs = (complex_.C.T @ masses.M_mu).tocsr()
        if not pec:
            self.rhs = (self.rhs +
                        complex_.T_tau.T @ complex_.M_gamma @ complex_.T_cross).tocsr()
        self._solve = factorized(masses.M_eps.tocsc())

    def apply(self, h: np.ndarray) -> np.ndarray:
        return self._solve(self.rhs @ h)


def build_weak_curl(complex_: DiscreteComplex, masses: MassMatrices,
                    pec: bool = False) -> WeakCurl:
    return WeakCurl(complex_, masses, pec=pec)


@dataclass
class SbpReport:
    max_residual: float
    n_probes: int
    threshold: float = 1e-13

    @property
    def passed(self) -> bool:
        return self.max_residual < self.threshold


def check_sbp(complex_: DiscreteComplex, masses: MassMatrices,
              n_probes: int = 100, seed: int = 0,
              weak_curl: Optional[WeakCurl] = None) -> SbpReport:
    """Residual of <C_weak h, e>_eps - <C e, h>_mu - <pi_x h, pi_tau e>_Gamma.

    The identity holds by construction of the weak curl; residuals above
    1e-13 signal an assembly bug.
    """
    wc = weak_curl or build_weak_curl(complex_, masses)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        e = rng.standard_normal(complex_.C.shape[1])
        h = rng.standard_normal(complex_.C.shape[0])
        lhs = e @ (masses.M_eps @ wc.apply(h))
        mid = h @ (masses.M_mu @ (complex_.C @ e))
        bnd = (complex_.T_cross @ h) @ (complex_.M_gamma @ (complex_.T_tau @ e))
        scale = max(abs(lhs), abs(mid), abs(bnd), 1.0)
        worst = max(worst, abs(lhs - mid - bnd) / scale)
    return SbpReport(worst, n_probes)


def export_triplets(matrix: sp.spmatrix, path):
    """Coordinate text format: row col value per line, 0-based."""
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
