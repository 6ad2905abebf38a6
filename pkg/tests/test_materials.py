import numpy as np
import pytest
import scipy.sparse as sp

from voxmaxwell.grid import GridSpec, PartitionRule, build_grid
from voxmaxwell.materials import (
    MaterialError,
    assemble_boundary_mass,
    assemble_mass,
    assemble_trace_mass,
    geometric_weights,
    sample_feedback,
    sample_tensor_field,
)


def box(n, sides=("+x",), h=None):
    rule = PartitionRule("sides", sides=sides)
    return build_grid(GridSpec((n, n, n), h if h else 1.0 / n, None, rule))


def constant_edge_field(dm, vec):
    """Edge samples of a constant vector field (component along each edge)."""
    e = np.empty(dm.n_edges)
    for axis in range(3):
        act = dm.edge_active[axis]
        ids = dm.edge_id[axis][act] + dm.edge_offset[axis]
        e[ids] = vec[axis]
    return e


def constant_face_field(dm, vec):
    f = np.empty(dm.n_faces)
    for axis in range(3):
        act = dm.face_active[axis]
        ids = dm.face_id[axis][act] + dm.face_offset[axis]
        f[ids] = vec[axis]
    return f


def test_identity_descriptor():
    dm = box(2)
    T = sample_tensor_field(dm, 1.0)
    assert np.allclose(T.values, np.eye(3))
    assert T.c_bound == pytest.approx(1.0)


def test_diagonal_descriptor_eigenvalues():
    dm = box(2)
    T = sample_tensor_field(dm, np.diag([1.0, 2.0, 3.0]))
    eigs = np.linalg.eigvalsh(T.values)
    assert np.allclose(np.sort(eigs, axis=1), [1.0, 2.0, 3.0])
    assert T.c_bound == pytest.approx(3.0)


def test_sine_perturbation_bounds():
    # eps(x) = I + 0.5*sin(pi x / L) e1 e1^T: eigenvalues within [0.5, 1.5]
    dm = box(4)
    L = 1.0

    def eps(points):
        n = points.shape[0]
        out = np.tile(np.eye(3), (n, 1, 1))
        out[:, 0, 0] += 0.5 * np.sin(np.pi * points[:, 0] / L)
        return out

    T = sample_tensor_field(dm, eps)
    eigs = np.linalg.eigvalsh(T.values)
    # oracle: per-cell eigenvalue scan
    assert eigs.min() >= 0.5 - 1e-12
    assert eigs.max() <= 1.5 + 1e-12
    centers = dm.cell_centers()
    expected = 1.0 + 0.5 * np.sin(np.pi * centers[:, 0] / L)
    assert np.allclose(T.values[:, 0, 0], expected, atol=1e-14)


def test_spd_bound_violation_rejected():
    dm = box(2)
    vals = np.tile(np.eye(3), (dm.n_cells, 1, 1))
    vals[3] = np.diag([5.0, 1.0, 1.0])
    with pytest.raises(MaterialError, match="cell 3"):
        sample_tensor_field(dm, lambda pts: vals, c_bound=2.0)


def test_packed_array_descriptor():
    dm = box(2)
    packed = np.zeros((dm.n_cells, 6))
    packed[:, :3] = 1.0
    packed[:, 3] = 0.25  # xy coupling
    T = sample_tensor_field(dm, packed)
    assert np.allclose(T.values[:, 0, 1], 0.25)
    assert np.allclose(T.values[:, 1, 0], 0.25)


def test_identity_mass_is_diagonal_dual_volumes():
    dm = box(2, h=0.5)
    M = assemble_mass(dm, sample_tensor_field(dm, 1.0), "edge")
    off = M - sp.diags(M.diagonal())
    assert abs(off).max() == 0.0
    h3 = 0.5 ** 3
    diag = M.diagonal()
    # interior edge of the 2x2x2 box has the full dual volume h^3
    interior = []
    for axis in range(3):
        act = dm.edge_active[axis]
        zz, yy, xx = np.nonzero(act)
        for z, y, x in zip(zz, yy, xx):
            orth = [a for a in range(3) if a != axis]
            coords = {0: x, 1: y, 2: z}
            if all(0 < coords[o] < 2 for o in orth):
                interior.append(dm.edge_global_id(axis, z, y, x))
    assert len(interior) == 6  # 2 per axis on the 2^3 box
    assert np.allclose(diag[np.array(interior)], h3)
    # geometric weights agree with the assembled identity mass
    assert np.allclose(diag, geometric_weights(dm, "edge"))


def test_constant_field_energy_matches_volume_integral():
    # e^T M_eps e = integral of E^T eps E over the box, for constant eps
    dm = box(3, h=1.0 / 3.0)
    eps = np.array([[2.0, 0.3, 0.0], [0.3, 1.5, -0.2], [0.0, -0.2, 1.0]])
    M = assemble_mass(dm, sample_tensor_field(dm, eps), "edge")
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(3)
        e = constant_edge_field(dm, v)
        exact = v @ eps @ v * 1.0  # unit volume
        assert abs(e @ (M @ e) - exact) < 1e-12 * abs(exact)
    # face species with a constant mu
    mu = np.array([[1.2, 0.1, 0.1], [0.1, 2.0, 0.0], [0.1, 0.0, 0.8]])
    Mf = assemble_mass(dm, sample_tensor_field(dm, mu), "face")
    for _ in range(5):
        v = rng.standard_normal(3)
        f = constant_face_field(dm, v)
        exact = v @ mu @ v
        assert abs(f @ (Mf @ f) - exact) < 1e-12 * abs(exact)


def test_anisotropic_eigenvalue_bounds():
    dm = box(3)
    T = sample_tensor_field(dm, np.diag([1.0, 2.0, 3.0]))
    M = assemble_mass(dm, T, "edge").toarray()
    W = np.diag(geometric_weights(dm, "edge"))
    # extremal eigenvalue probe of the pencil (M, W): within [1, 3]
    from scipy.linalg import eigh
    lam = eigh(M, W, eigvals_only=True)
    assert lam.min() >= 1.0 - 1e-10
    assert lam.max() <= 3.0 + 1e-10


def test_mass_symmetry_and_positivity_random():
    rng = np.random.default_rng(7)
    mask = np.ones((3, 3, 3), dtype=bool)
    mask[0, 0, 2] = False
    dm = build_grid(GridSpec((3, 3, 3), 0.4, mask, PartitionRule("all")))

    def tensor(points):
        n = points.shape[0]
        A = rng.standard_normal((n, 3, 3)) * 0.15
        return np.eye(3) + (A + np.transpose(A, (0, 2, 1)))

    T = sample_tensor_field(dm, tensor)
    for species in ("edge", "face"):
        M = assemble_mass(dm, T, species)
        assert abs(M - M.T).max() == 0.0
        for _ in range(100):
            x = rng.standard_normal(M.shape[0])
            q = x @ (M @ x)
            assert q > 0.0
            # weighted-norm equivalence against the geometric norm
            g = geometric_weights(dm, species) @ (x * x)
            assert q >= g / T.c_bound - 1e-12 * g
            assert q <= g * T.c_bound + 1e-12 * g


def test_boundary_mass_unit_feedback():
    # single Gamma1 face on the unit cell: 2x2 diagonal area weights
    dm = build_grid(GridSpec((1, 1, 1), 1.0, None, PartitionRule("sides", sides=("+x",))))
    k = sample_feedback(dm, 1.0)
    Mk = assemble_boundary_mass(dm, k)
    g1 = dm.gamma1_indices
    assert g1.size == 1
    rows = [2 * g1[0], 2 * g1[0] + 1]
    dense = Mk.toarray()
    block = dense[np.ix_(rows, rows)]
    assert np.allclose(block, np.eye(2) * 1.0)  # h^2 = 1
    dense[np.ix_(rows, rows)] = 0.0
    assert abs(dense).max() == 0.0


def test_boundary_mass_diagonal_feedback():
    dm = build_grid(GridSpec((2, 2, 2), 0.5, None, PartitionRule("sides", sides=("+z",))))
    k = sample_feedback(dm, np.diag([2.0, 5.0]))
    Mk = assemble_boundary_mass(dm, k)
    t = np.zeros(2 * dm.n_boundary_faces)
    g1 = dm.gamma1_indices
    t[2 * g1] = 1.0       # unit t1 component on every Gamma1 face
    t[2 * g1 + 1] = 2.0
    got = t @ (Mk @ t)
    area = 0.5 ** 2 * g1.size
    assert got == pytest.approx((2.0 * 1.0 + 5.0 * 4.0) * area, rel=1e-14)


def test_boundary_mass_random_spd_cholesky():
    rng = np.random.default_rng(3)
    dm = build_grid(GridSpec((2, 2, 2), 0.5, None, PartitionRule("all")))
    n = dm.gamma1_indices.size
    R = rng.standard_normal((n, 2, 2)) * 0.5
    vals = np.einsum("nij,nkj->nik", R, R) + 0.5 * np.eye(2)
    k = sample_feedback(dm, vals)
    Mk = assemble_boundary_mass(dm, k).toarray()
    sub = Mk  # all faces are Gamma1 here
    np.linalg.cholesky(sub + 1e-300 * np.eye(sub.shape[0]))
    eigs = np.linalg.eigvalsh(sub)
    assert eigs.min() >= (0.5 ** 2) / k.c_bound * (1 - 1e-12)


def test_gamma1_empty_gives_empty_matrix():
    dm = build_grid(GridSpec((2, 2, 2), 0.5, None,
                             PartitionRule("none", allow_empty_gamma1=True)))
    k = sample_feedback(dm, 1.0)
    Mk = assemble_boundary_mass(dm, k)
    assert Mk.nnz == 0


def test_trace_mass_area_weights():
    dm = box(2, h=0.25)
    Mg = assemble_trace_mass(dm)
    assert np.allclose(Mg.diagonal(), 0.25 ** 2)
