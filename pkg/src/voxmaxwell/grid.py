"""Staggered voxel grids over box or masked domains.

A domain is a union of unit cells of an ``nx x ny x nz`` voxel lattice with
uniform spacing ``h``.  Degrees of freedom live on the nodes, edges, faces
and cells of the active region.  Edge and face DOFs come in three species
(one per axis); ordering within each species is lexicographic by
``(axis, z, y, x)`` so that rebuilding the same spec yields bit-identical
index tables.

Boundary faces (faces adjacent to exactly one active cell) are partitioned
into two labels: ``GAMMA0`` (perfect conductor) and ``GAMMA1`` (impedance
feedback).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

GAMMA0 = 0
GAMMA1 = 1

# face/edge axis order is (x, y, z) = (0, 1, 2); internal arrays are
# indexed [z, y, x].
_SIDE_NAMES = ("+x", "-x", "+y", "-y", "+z", "-z")


class GridError(ValueError):
    """Invalid grid specification."""


class DisconnectedDomainError(GridError):
    def __init__(self, components):
        self.components = components
        sizes = [len(c) for c in components]
        super().__init__(
            f"active cells split into {len(components)} face-connected "
            f"components with sizes {sizes}; a connected domain is required"
        )


class PartitionError(GridError):
    """Boundary partition rule does not produce a valid Gamma0/Gamma1 split."""


@dataclass(frozen=True)
class PartitionRule:
    """Declarative assignment of boundary faces to Gamma0/Gamma1.

    kind:
        "none"     -- every boundary face is Gamma0 (undamped reference
                      cavity; requires allow_empty_gamma1=True),
        "all"      -- every boundary face is Gamma1,
        "sides"    -- faces whose outward normal matches one of ``sides``
                      (e.g. ("+x", "-y")) are Gamma1, the rest Gamma0,
        "explicit" -- ``gamma1_faces`` (global face ids) are Gamma1 and
                      ``gamma0_faces`` are Gamma0; the two lists must cover
                      every boundary face exactly once.
    """

    kind: str = "none"
    sides: tuple = ()
    gamma0_faces: tuple = ()
    gamma1_faces: tuple = ()
    allow_empty_gamma1: bool = False

    def __post_init__(self):
        if self.kind not in ("none", "all", "sides", "explicit"):
            raise PartitionError(f"unknown partition rule kind {self.kind!r}")
        for s in self.sides:
            if s not in _SIDE_NAMES:
                raise PartitionError(f"unknown side {s!r}; expected one of {_SIDE_NAMES}")


@dataclass(frozen=True)
class GridSpec:
    """Geometric description of the voxel domain.

    active_mask has shape (nx, ny, nz) with True marking cells inside the
    domain; None means the full box.
    """

    cell_counts: tuple
    spacing: float
    active_mask: Optional[np.ndarray] = None
    partition_rule: PartitionRule = field(default_factory=PartitionRule)

    def __post_init__(self):
        nx, ny, nz = self.cell_counts
        if min(nx, ny, nz) < 1:
            raise GridError(f"cell_counts must be >= 1, got {self.cell_counts}")
        if not self.spacing > 0:
            raise GridError(f"spacing must be positive, got {self.spacing}")
        if self.active_mask is not None:
            if self.active_mask.shape != (nx, ny, nz):
                raise GridError(
                    f"active_mask shape {self.active_mask.shape} does not match "
                    f"cell_counts {self.cell_counts}"
                )


def load_mask(path, cell_counts) -> np.ndarray:
    """Read a flat binary mask (1 byte per cell, row-major x-fastest)."""
    nx, ny, nz = cell_counts
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != nx * ny * nz:
        raise GridError(
            f"mask file {path} holds {raw.size} bytes, expected {nx * ny * nz}"
        )
    # flat index = x + nx*(y + ny*z)  ->  reshape to [z, y, x], expose [x, y, z]
    return raw.reshape(nz, ny, nx).astype(bool).transpose(2, 1, 0)


def _edge_shape(axis, nx, ny, nz):
    # internal [z, y, x] extents of the edge lattice for the given axis
    return {
        0: (nz + 1, ny + 1, nx),
        1: (nz + 1, ny, nx + 1),
        2: (nz, ny + 1, nx + 1),
    }[axis]


def _face_shape(axis, nx, ny, nz):
    return {
        0: (nz, ny, nx + 1),
        1: (nz, ny + 1, nx),
        2: (nz + 1, ny, nx),
    }[axis]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class DofMap:
    """Index tables for the DOFs of the active region.

    Lookup arrays map lattice coordinates ``[z, y, x]`` to dense DOF ids
    (-1 for inactive).  All arrays are read-only after construction.
    """

    def __init__(self, spec: GridSpec):
        nx, ny, nz = spec.cell_counts
        self.cell_counts = (nx, ny, nz)
        self.h = float(spec.spacing)
        if spec.active_mask is None:
            cells = np.ones((nz, ny, nx), dtype=bool)
        else:
            cells = np.ascontiguousarray(spec.active_mask.transpose(2, 1, 0))
        if not cells.any():
            raise GridError("active mask is empty")
        self._check_connected(cells)
        self.cell_active = _freeze(cells)

        pad = np.zeros((nz + 2, ny + 2, nx + 2), dtype=bool)
        pad[1:-1, 1:-1, 1:-1] = cells

        # nodes: active if any of the 8 surrounding cells is active
        node_act = np.zeros((nz + 1, ny + 1, nx + 1), dtype=bool)
        for dz in (0, 1):
            for dy in (0, 1):
                for dx in (0, 1):
                    node_act |= pad[dz:dz + nz + 1, dy:dy + ny + 1, dx:dx + nx + 1]
        self.node_active = _freeze(node_act)

        # edges: active if any of the up-to-4 cells sharing the edge is active
        self.edge_active = []
        for axis in range(3):
            shp = _edge_shape(axis, nx, ny, nz)
            act = np.zeros(shp, dtype=bool)
            # offsets orthogonal to the edge axis
            orth = [a for a in range(3) if a != axis]
            for d0 in (0, 1):
                for d1 in (0, 1):
                    off = [None, None, None]
                    off[axis] = 1
                    off[orth[0]] = d0
                    off[orth[1]] = d1
                    # off in (x, y, z); pad index order is [z, y, x]
                    ox, oy, oz = off
                    act |= pad[oz:oz + shp[0], oy:oy + shp[1], ox:ox + shp[2]]
            self.edge_active.append(_freeze(act))

        # faces: the two cells on either side of the normal
        self.face_active = []
        self.face_sides = []  # (minus_cell_active, plus_cell_active)
        for axis in range(3):
            shp = _face_shape(axis, nx, ny, nz)
            # along the normal, face coordinate i sits between cells i-1 | i,
            # i.e. padded starts 0 | 1; off-normal coordinates align with cells
            off = [1, 1, 1]
            off[axis] = 0
            ox, oy, oz = off
            minus = pad[oz:oz + shp[0], oy:oy + shp[1], ox:ox + shp[2]]
            off = [1, 1, 1]
            off[axis] = 1
            ox, oy, oz = off
            plus = pad[oz:oz + shp[0], oy:oy + shp[1], ox:ox + shp[2]]
            self.face_active.append(_freeze(minus | plus))
            self.face_sides.append((_freeze(minus.copy()), _freeze(plus.copy())))

        # dense ids, lexicographic by (axis, z, y, x): C-order ravel of [z,y,x]
        self.node_id = _freeze(self._number(node_act))
        self.cell_id = _freeze(self._number(cells))
        self.edge_id = [_freeze(self._number(a)) for a in self.edge_active]
        self.face_id = [_freeze(self._number(a)) for a in self.face_active]

        self.n_nodes = int(node_act.sum())
        self.n_cells = int(cells.sum())
        self.n_edges_axis = tuple(int(a.sum()) for a in self.edge_active)
        self.n_faces_axis = tuple(int(a.sum()) for a in self.face_active)
        self.n_edges = sum(self.n_edges_axis)
        self.n_faces = sum(self.n_faces_axis)
        self.edge_offset = np.cumsum([0] + list(self.n_edges_axis))
        self.face_offset = np.cumsum([0] + list(self.n_faces_axis))

        self._build_boundary()
        # labels: -1 until classified
        self.boundary_label = np.full(self.n_boundary_faces, -1, dtype=np.int8)

    @staticmethod
    def _number(active: np.ndarray) -> np.ndarray:
        ids = np.full(active.shape, -1, dtype=np.int64)
        ids[active] = np.arange(int(active.sum()), dtype=np.int64)
        return ids

    @staticmethod
    def _check_connected(cells: np.ndarray):
        idx = np.argwhere(cells)
        if idx.size == 0:
            raise GridError("active mask is empty")
        total = idx.shape[0]
        key = {tuple(c): n for n, c in enumerate(map(tuple, idx))}
        seen = np.zeros(total, dtype=bool)
        components = []
        for start in range(total):
            if seen[start]:
                continue
            comp = [start]
            seen[start] = True
            stack = [tuple(idx[start])]
            while stack:
                z, y, x = stack.pop()
                for dz, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                   (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    nb = (z + dz, y + dy, x + dx)
                    j = key.get(nb)
                    if j is not None and not seen[j]:
                        seen[j] = True
                        comp.append(j)
                        stack.append(nb)
            components.append([tuple(idx[j]) for j in comp])
        if len(components) > 1:
            raise DisconnectedDomainError(components)

    def _build_boundary(self):
        """Enumerate boundary faces (exactly one active neighbor cell)."""
        ids, axes, signs, owners, coords = [], [], [], [], []
        for axis in range(3):
            minus, plus = self.face_sides[axis]
            bnd = minus ^ plus
            zz, yy, xx = np.nonzero(bnd)
            fid = self.face_id[axis][zz, yy, xx] + self.face_offset[axis]
            # outward normal +axis when the minus-side cell is the active one
            sgn = np.where(minus[zz, yy, xx], 1, -1).astype(np.int8)
            # owner cell coordinates
            oz, oy, ox = zz.copy(), yy.copy(), xx.copy()
            shift = -(sgn + 1) // 2  # -1 for outward +, 0 for outward -
            if axis == 0:
                ox = xx + shift
            elif axis == 1:
                oy = yy + shift
            else:
                oz = zz + shift
            own = self.cell_id[oz, oy, ox]
            order = np.argsort(fid)
            ids.append(fid[order])
            axes.append(np.full(fid.size, axis, dtype=np.int8))
            signs.append(sgn[order])
            owners.append(own[order])
            coords.append(np.stack([zz[order], yy[order], xx[order]], axis=1))
        self.bf_face = _freeze(np.concatenate(ids))
        self.bf_axis = _freeze(np.concatenate(axes))
        self.bf_sign = _freeze(np.concatenate(signs))
        self.bf_owner = _freeze(np.concatenate(owners))
        self.bf_coord = _freeze(np.concatenate(coords, axis=0))
        self.n_boundary_faces = int(self.bf_face.size)
        # interior face sanity: every active face is adjacent to 1 or 2 cells
        for axis in range(3):
            minus, plus = self.face_sides[axis]
            assert not (self.face_active[axis] & ~(minus | plus)).any()

    # -- label-dependent views -------------------------------------------

    @property
    def gamma1_indices(self) -> np.ndarray:
        """Positions (into the boundary-face tables) labeled Gamma1."""
        return np.nonzero(self.boundary_label == GAMMA1)[0]

    @property
    def gamma0_indices(self) -> np.ndarray:
        return np.nonzero(self.boundary_label == GAMMA0)[0]

    def label_counts(self):
        return {
            "gamma0": int((self.boundary_label == GAMMA0).sum()),
            "gamma1": int((self.boundary_label == GAMMA1).sum()),
        }

    # -- geometry helpers --------------------------------------------------

    def edge_global_id(self, axis, z, y, x):
        eid = self.edge_id[axis][z, y, x]
        return np.where(eid >= 0, eid + self.edge_offset[axis], -1)

    def face_global_id(self, axis, z, y, x):
        fid = self.face_id[axis][z, y, x]
        return np.where(fid >= 0, fid + self.face_offset[axis], -1)

    def edge_midpoints(self) -> np.ndarray:
        """(n_edges, 3) midpoint coordinates in (x, y, z) order."""
        pts = np.empty((self.n_edges, 3))
        for axis in range(3):
            act = self.edge_active[axis]
            zz, yy, xx = np.nonzero(act)
            gid = self.edge_id[axis][zz, yy, xx] + self.edge_offset[axis]
            mid = np.stack([xx, yy, zz], axis=1).astype(float)
            mid[:, axis] += 0.5
            pts[gid] = mid * self.h
        return pts

    def face_centers(self) -> np.ndarray:
        pts = np.empty((self.n_faces, 3))
        for axis in range(3):
            act = self.face_active[axis]
            zz, yy, xx = np.nonzero(act)
            gid = self.face_id[axis][zz, yy, xx] + self.face_offset[axis]
            mid = np.stack([xx, yy, zz], axis=1).astype(float)
            for a in range(3):
                if a != axis:
                    mid[:, a] += 0.5
            pts[gid] = mid * self.h
        return pts

    def cell_centers(self) -> np.ndarray:
        zz, yy, xx = np.nonzero(self.cell_active)
        pts = (np.stack([xx, yy, zz], axis=1) + 0.5) * self.h
        out = np.empty((self.n_cells, 3))
        out[self.cell_id[zz, yy, xx]] = pts
        return out


def build_grid(spec: GridSpec) -> DofMap:
    """Construct the DofMap and label its boundary per the spec's rule."""
    dm = DofMap(spec)
    return classify_boundary(dm, spec.partition_rule)


def classify_boundary(dofmap: DofMap, rule: PartitionRule) -> DofMap:
    """Fill boundary labels in place (returns the same DofMap).

    Raises PartitionError when the rule leaves a face uncovered, covers one
    twice, or produces an empty Gamma1 without the explicit override.
    """
    label = np.full(dofmap.n_boundary_faces, -1, dtype=np.int8)
    if rule.kind == "none":
        label[:] = GAMMA0
    elif rule.kind == "all":
        label[:] = GAMMA1
    elif rule.kind == "sides":
        label[:] = GAMMA0
        for s in rule.sides:
            axis = {"x": 0, "y": 1, "z": 2}[s[1]]
            sgn = 1 if s[0] == "+" else -1
            sel = (dofmap.bf_axis == axis) & (dofmap.bf_sign == sgn)
            label[sel] = GAMMA1
    else:  # explicit
        face_to_pos = {int(f): p for p, f in enumerate(dofmap.bf_face)}
        for fid in rule.gamma0_faces:
            if fid not in face_to_pos:
                raise PartitionError(f"face {fid} is not a boundary face")
            label[face_to_pos[fid]] = GAMMA0
        for fid in rule.gamma1_faces:
            if fid not in face_to_pos:
                raise PartitionError(f"face {fid} is not a boundary face")
            if label[face_to_pos[fid]] == GAMMA0:
                raise PartitionError(f"face {fid} assigned to both labels")
            label[face_to_pos[fid]] = GAMMA1
        missing = np.nonzero(label < 0)[0]
        if missing.size:
            zyx = dofmap.bf_coord[missing[0]]
            raise PartitionError(
                f"{missing.size} boundary faces uncovered, first at "
                f"[z,y,x]={tuple(int(v) for v in zyx)} "
                f"axis={int(dofmap.bf_axis[missing[0]])}"
            )
    if not (label == GAMMA1).any() and not rule.allow_empty_gamma1:
        raise PartitionError(
            "partition leaves Gamma1 empty; set allow_empty_gamma1=True "
            "for an undamped reference cavity"
        )
    dofmap.boundary_label = _freeze(label)
    return dofmap
