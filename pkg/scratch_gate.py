# Prototype gate: validate generator design against acceptance thresholds
# before freezing module APIs. Not part of the package.
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import scipy.linalg as la

from voxmaxwell.grid import GridSpec, PartitionRule, build_grid
from voxmaxwell.materials import build_masses, sample_feedback, sample_tensor_field
from voxmaxwell.operators import (
    assemble_complex, pec_edge_mask, restriction, interior_node_mask,
    boundary_node_mask, gamma_selector,
)


def generator_blocks(dm, cx, masses):
    """Reduced-space generator: returns (Me_red, Mmu, K, P, R) with
    e' = Me_red^-1 (K^T h - P e), h' = -Mmu^-1 (Wf C_red e)
    where K = Wf C_red (face x edge_red), P = penalty."""
    keep = pec_edge_mask(dm)
    R = restriction(keep)
    Wf = sp.diags(masses.W_face)
    C_red = cx.C @ R.T
    K = Wf @ C_red
    sel = gamma_selector(dm, 1)
    Ttau_red = cx.T_tau @ R.T
    P = (Ttau_red.T @ masses.M_gamma_kinv @ Ttau_red).tocsr()
    Me_red = (R @ masses.M_eps @ R.T).tocsr()
    return Me_red, masses.M_mu.tocsr(), K, P, R


def dense_generator(Me, Mmu, K, P):
    ne, nh = Me.shape[0], Mmu.shape[0]
    Me_inv = la.inv(Me.toarray())
    Mmu_inv = la.inv(Mmu.toarray())
    A = np.zeros((ne + nh, ne + nh))
    A[:ne, :ne] = -Me_inv @ P.toarray()
    A[:ne, ne:] = Me_inv @ K.toarray().T
    A[ne:, :ne] = -Mmu_inv @ K.toarray()
    return A


def xh_basis(dm, cx, masses, R):
    """M-orthonormal basis of X_H (box: no cohomology)."""
    # e-block: interior-node weak divergence zero
    keep_n = interior_node_mask(dm)
    Rn = restriction(keep_n)
    G_int = R @ cx.G @ Rn.T          # edge_red x n_int
    Me_red = (R @ masses.M_eps @ R.T).tocsr()
    A1 = (G_int.T @ Me_red).toarray()   # n_int x edge_red
    _, s1, Vt1 = la.svd(A1, full_matrices=True)
    r1 = (s1 > s1.max() * 1e-10).sum() if s1.size else 0
    Ne = Vt1[r1:].T                   # null basis (Euclidean orth)
    # M-orthonormalize
    Re = la.cholesky(Ne.T @ (Me_red @ Ne))
    Ve = Ne @ la.inv(Re)
    # h-block: D (Wf^-1 Mmu h) = 0, (Wf^-1 Mmu h)|Gamma0 faces = 0
    Winv = sp.diags(1.0 / masses.W_face)
    S1 = (cx.D @ Winv @ masses.M_mu).toarray()
    g0pos = np.nonzero(dm.boundary_label == 0)[0]
    rows = dm.bf_face[g0pos]
    Rg0 = np.zeros((len(rows), dm.n_faces))
    Rg0[np.arange(len(rows)), rows] = 1.0
    S2 = Rg0 @ (Winv @ masses.M_mu).toarray()
    S = np.vstack([S1, S2])
    _, s2, Vt2 = la.svd(S, full_matrices=True)
    r2 = (s2 > s2.max() * 1e-10).sum()
    Nh = Vt2[r2:].T
    Rh = la.cholesky(Nh.T @ (masses.M_mu @ Nh))
    Vh = Nh @ la.inv(Rh)
    return Ve, Vh


def restricted_spectrum(n, k_val, eps_desc=1.0, sides=("+x",)):
    dm = build_grid(GridSpec((n, n, n), 1.0 / n, None, PartitionRule("sides", sides=sides)))
    cx = assemble_complex(dm)
    masses = build_masses(dm, sample_tensor_field(dm, eps_desc),
                          sample_tensor_field(dm, 1.0), sample_feedback(dm, k_val))
    Me, Mmu, K, P, R = generator_blocks(dm, cx, masses)
    Ve, Vh = xh_basis(dm, cx, masses, R)
    ne = Me.shape[0]
    A = dense_generator(Me, Mmu, K, P)
    n_all = A.shape[0]
    V = np.zeros((n_all, Ve.shape[1] + Vh.shape[1]))
    V[:ne, :Ve.shape[1]] = Ve
    V[ne:, Ve.shape[1]:] = Vh
    M = sp.block_diag([Me, Mmu]).toarray()
    A_xh = V.T @ (M @ (A @ V))
    lam, vecs = la.eig(A_xh)
    # residuals in the lifted space
    res = []
    for i in range(len(lam)):
        v = V @ vecs[:, i]
        r = A @ v - lam[i] * v
        res.append(np.sqrt(np.real(np.conj(r) @ (M @ r))) /
                   np.sqrt(np.real(np.conj(v) @ (M @ v))))
    return lam, np.array(res), (dm, cx, masses, A, M, V)


def undamped_lowest(n):
    dm = build_grid(GridSpec((n, n, n), 1.0 / n, None,
                             PartitionRule("none", allow_empty_gamma1=True)))
    cx = assemble_complex(dm)
    masses = build_masses(dm, sample_tensor_field(dm, 1.0),
                          sample_tensor_field(dm, 1.0), sample_feedback(dm, 1.0))
    keep = pec_edge_mask(dm)
    R = restriction(keep)
    Wf = sp.diags(masses.W_face)
    C_red = (cx.C @ R.T).tocsr()
    Kmat = (C_red.T @ Wf @ C_red).tocsr()
    Me = (R @ masses.M_eps @ R.T).tocsr()
    target = (np.pi * np.sqrt(2.0)) ** 2
    vals = spla.eigsh(Kmat, k=8, M=Me, sigma=target * 0.9,
                      which="LM", return_eigenvectors=False)
    vals = np.sort(vals[vals > 1e-8])
    return np.sqrt(vals)


if __name__ == "__main__":
    # --- Gate 1: undamped cavity frequency convergence ---
    exact = np.pi * np.sqrt(2.0)
    w8 = undamped_lowest(8)
    w16 = undamped_lowest(16)
    print("cavity lowest  8:", w8[:4])
    print("cavity lowest 16:", w16[:4])
    e8, e16 = abs(w8[0] - exact), abs(w16[0] - exact)
    order = np.log2(e8 / e16)
    print(f"errors: {e8:.3e} {e16:.3e}  observed order: {order:.3f}")
    # discrete dispersion prediction: omega_h = 2/h sqrt(sum sin^2(k h/2))
    for n in (8, 16):
        h = 1.0 / n
        pred = 2.0 / h * np.sqrt(2 * np.sin(np.pi * h / 2) ** 2)
        print(f"  n={n}: predicted Yee freq {pred:.8f}")

    # --- Gate 2: damped spectrum on 4^3 ---
    for k_val in (0.1, 1.0, 10.0):
        lam, res, _ = restricted_spectrum(4, k_val)
        print(f"k={k_val}: dim={lam.size} maxRe={lam.real.max():.3e} "
              f"min|lam|={np.abs(lam).min():.3e} maxres={res.max():.2e}")

    # anisotropic eps
    def eps_aniso(points):
        n = points.shape[0]
        out = np.tile(np.eye(3), (n, 1, 1))
        out[:, 0, 0] += 0.5 * np.sin(np.pi * points[:, 0])
        out[:, 0, 1] = out[:, 1, 0] = 0.2
        return out

    lam, res, _ = restricted_spectrum(4, 1.0, eps_desc=eps_aniso)
    print(f"aniso: maxRe={lam.real.max():.3e} min|lam|={np.abs(lam).min():.3e} "
          f"maxres={res.max():.2e}")

    # --- Gate 3: semi-uniform signature + decay pilot on 6^3 ---
    lam6, res6, ctx = restricted_spectrum(6, 1.0)
    dm, cx, masses, A, M, V = ctx
    im = np.abs(lam6.imag)
    re = -lam6.real
    order_idx = np.argsort(im)
    bands = np.array_split(order_idx, 4)
    mins = [re[b].min() for b in bands]
    print("band min(-Re):", [f"{m:.4f}" for m in mins],
          " -> argmin band:", int(np.argmin(mins)))
    print(f"6^3 damped: maxRe={lam6.real.max():.4e} min|lam|={np.abs(lam6).min():.4e}")

    # decay pilot: 20 random X_H states, implicit midpoint, T=50
    rng = np.random.default_rng(0)
    ne = (V[: , 0] != 0).sum and None  # unused
    nE = int((np.abs(V).sum(axis=1) > 0).sum and 0) or 0  # noop
    n_all = A.shape[0]
    dt = (1.0 / 6) / 2
    Msp = sp.csr_matrix(M)
    Asp = sp.csr_matrix(A)
    I = sp.identity(n_all, format="csr")
    LHS = (I - dt / 2 * Asp).tocsc()
    RHS = (I + dt / 2 * Asp).tocsr()
    lu = spla.splu(LHS)
    steps = int(np.ceil(50.0 / dt))
    worst_ratio = 0.0
    for trial in range(20):
        c = rng.standard_normal(V.shape[1])
        x0 = V @ c
        nrm0 = np.sqrt(x0 @ (M @ x0))
        Ax0 = A @ x0
        g0 = nrm0 + np.sqrt(Ax0 @ (M @ Ax0))
        x = x0.copy()
        for s in range(steps):
            x = lu.solve(RHS @ x)
        nrmT = np.sqrt(x @ (M @ x))
        worst_ratio = max(worst_ratio, (nrmT / g0) / (nrm0 / g0))
        if trial < 3:
            print(f"  trial {trial}: |x(T)|/|x0| = {nrmT/nrm0:.4f}  graph-normed "
                  f"f(T)/f(0) = {(nrmT/g0)/(nrm0/g0):.4f}")
    print(f"decay pilot worst |x(T)|/|x0| over 20 trials: {worst_ratio:.4f} "
          f"(need <= 0.5)")
    # slowest mode rate for reference
    slow = lam6[np.argmin(np.abs(lam6.real))]
    print(f"slowest mode: {slow:.6f}, exp(Re*50)={np.exp(slow.real*50):.4f}")
