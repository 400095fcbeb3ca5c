import numpy as np
import pytest
from scipy import sparse

from hoibc.assembly import (
    AssemblyError,
    DenseKernel,
    KernelAssembler,
    PlaneWave,
    assemble_blocks,
    assemble_CH_CK,
    assemble_rhs,
    build_full_system,
    closed_form_ch_diagonal,
    dump_binary,
    dump_matrix_market,
    load_binary,
    reduce_system,
    sibc_system,
)
from hoibc.basis import BasisSet
from hoibc.coefficients import CoatingSpec, hoibc_coefficients, sibc_coefficients
from hoibc.mesh import gen_icosphere
from hoibc.quadrature import gauss_rule

K = 2 * np.pi
COAT = CoatingSpec(5.0, 1.0, 0.0075, K)
HOIBC = hoibc_coefficients(COAT)
SIBC = sibc_coefficients(COAT)


@pytest.fixture(scope="module")
def ico():
    mesh = gen_icosphere(0.3, 1)
    basis = BasisSet(mesh)
    return mesh, basis, assemble_blocks(mesh, basis, K, HOIBC)


def test_gram_blocks(ico, rng):
    mesh, basis, b = ico
    D = b.D.toarray()
    np.testing.assert_allclose(D, D.T, atol=1e-14 * np.abs(D).max())
    x = rng.standard_normal(basis.n)
    assert x @ D @ x >= 0
    I = b.I.toarray()
    topo = mesh.topology
    tris = lambda e: {topo.tri_plus[e], topo.tri_minus[e]}
    for i in range(0, basis.n, 7):
        for j in range(basis.n):
            if not tris(i) & tris(j):
                assert I[i, j] == 0.0


def test_ch_diagonal(ico):
    mesh, basis, b = ico
    ch, ck, diag = assemble_CH_CK(mesh, basis)
    assert diag.ok and diag.max_diag_rel_error < 1e-12 and diag.max_offdiag_rel < 1e-12
    topo = mesh.topology
    A = mesh.areas
    ref = (A[topo.tri_plus] + A[topo.tri_minus]) / 3
    np.testing.assert_allclose(ch.diagonal(), ref, rtol=1e-12)
    np.testing.assert_allclose(closed_form_ch_diagonal(mesh), ref)


def test_ck_diagonal_against_refined_quadrature(ico):
    # C_K[n, n] = <g_n, n x f_n>, integrated on 4-way subdivided triangles with the 12-point rule
    mesh, basis, b = ico
    topo = mesh.topology
    rule = gauss_rule(12)
    for n in (0, 9, 77):
        total = 0.0
        for t, side in ((topo.tri_plus[n], 1), (topo.tri_minus[n], -1)):
            P = mesh.corners[t]
            a = list(basis.tri_edges[t]).index(n)
            m = 0.5 * (P[[1, 2, 0]] + P[[2, 0, 1]])  # midpoints opposite vertices 0, 1, 2
            subs = [np.array([P[0], m[2], m[1]]), np.array([m[2], P[1], m[0]]), np.array([m[1], m[0], P[2]]), m.copy()]
            for S in subs:
                x = rule.map(S)
                w = 0.25 * mesh.areas[t] * rule.weights
                e1, e2 = P[1] - P[0], P[2] - P[0]
                nrm = mesh.normals[t]
                # barycentric coordinate of the opposite vertex a
                lam = np.array([np.linalg.solve(np.c_[e1, e2, nrm], xi - P[0])[:2] for xi in x])
                bary = np.c_[1 - lam.sum(axis=1), lam]
                f = basis.coef[t, a] * (x - P[a])
                g = (1 - 2 * bary[:, a])[:, None] * np.cross(topo.direction[n], nrm)
                total += np.sum(w * np.einsum("qk,qk->q", g, np.cross(nrm, f)))
        assert b.C_K[n, n] == pytest.approx(total, rel=1e-8, abs=1e-14)


def test_kernel_blocks_symmetry(ico):
    _, _, b = ico
    BS, Q = b.BS, b.Q
    assert np.abs(BS - BS.T).max() <= 1e-5 * np.abs(BS).max()
    assert np.abs(Q - Q.T).max() <= 1e-4 * np.abs(Q).max()


def test_kernel_assembler_subblocks_match_dense(ico):
    mesh, basis, b = ico
    ka = KernelAssembler(mesh, basis, K)
    r, c = np.array([3, 50, 11]), np.array([7, 3, 100, 42])
    bs, q = ka.block(r, c)
    np.testing.assert_allclose(bs, b.BS[np.ix_(r, c)], rtol=1e-12, atol=1e-16)
    np.testing.assert_allclose(q, b.Q[np.ix_(r, c)], rtol=1e-12, atol=1e-16)
    smp = ka.sampler(r, c)
    row_bs, row_q = smp.row(1)
    np.testing.assert_allclose(row_bs, b.BS[50, c], rtol=1e-12, atol=1e-16)
    col_bs, col_q = smp.col(2)
    np.testing.assert_allclose(col_q, b.Q[r, 100], rtol=1e-12, atol=1e-16)


def test_rhs_zero_amplitude_and_constant_field(ico):
    mesh, basis, _ = ico
    w0 = PlaneWave(np.array([0, 0, -1.0]), np.array([1.0, 0, 0]), 1e-12, amplitude=0.0)
    assert np.all(assemble_rhs(mesh, basis, w0) == 0)
    w = PlaneWave(np.array([0, 0, -1.0]), np.array([1.0, 0, 0]), 1e-12)
    v = assemble_rhs(mesh, basis, w, full=False)
    topo = mesh.topology
    for n in range(0, basis.n, 13):
        cp = mesh.centroids[topo.tri_plus[n]]
        cm = mesh.centroids[topo.tri_minus[n]]
        vp = mesh.vertices[topo.opp_plus[n]]
        vm = mesh.vertices[topo.opp_minus[n]]
        # int f = (l/2) (c+ - v+) + (l/2) (v- - c-)
        ref = 0.5 * topo.length[n] * ((cp - vp) + (vm - cm))
        assert v[n] == pytest.approx(ref[0], rel=1e-9, abs=1e-15)


def test_rhs_rotation_invariance(ico):
    from scipy.spatial.transform import Rotation

    mesh, basis, _ = ico
    R = Rotation.from_euler("zyx", [0.3, -0.7, 1.1]).as_matrix()
    rot = mesh.transformed(rotation=R)
    w = PlaneWave.from_angles(30, 40, "theta", K)
    w_rot = PlaneWave(R @ w.direction, R @ w.polarization, K)
    a = assemble_rhs(mesh, basis, w)
    b = assemble_rhs(rot, BasisSet(rot), w_rot)
    np.testing.assert_allclose(np.abs(a), np.abs(b), rtol=1e-10, atol=1e-14)


def test_plane_wave_validation():
    with pytest.raises(ValueError):
        PlaneWave(np.array([0, 0, 1.0]), np.array([0, 0, 1.0]), 1.0)
    w = PlaneWave.from_angles(0, 0, "theta", K)
    np.testing.assert_allclose(w.direction, [0, 0, -1])
    np.testing.assert_allclose(w.polarization, [1, 0, 0])


def test_full_system_structure(ico):
    mesh, basis, b = ico
    n = basis.n
    rhs = assemble_rhs(mesh, basis, PlaneWave.from_angles(0, 0, "theta", K))
    fs = build_full_system(b, rhs)
    assert fs.matrix.shape == (6 * n, 6 * n) and fs.n == n
    blk = lambda i, j: fs.matrix[i * n : (i + 1) * n, j * n : (j + 1) * n]
    zeros = [(0, 2), (0, 5), (1, 3), (1, 4), (2, 0), (2, 3), (2, 5), (3, 1), (3, 2), (3, 4),
             (4, 1), (4, 3), (4, 4), (4, 5), (5, 0), (5, 2), (5, 4), (5, 5)]
    for i, j in zeros:
        assert np.all(blk(i, j) == 0), (i, j)


def test_sibc_decouples_auxiliary_unknowns(ico):
    mesh, basis, b = ico
    from dataclasses import replace

    bs = replace(b, coefficients=SIBC)
    rhs = assemble_rhs(mesh, basis, PlaneWave.from_angles(0, 0, "theta", K))
    fs = build_full_system(bs, rhs)
    n = basis.n
    blk = lambda i, j: fs.matrix[i * n : (i + 1) * n, j * n : (j + 1) * n]
    for i, j in ((0, 3), (1, 2), (2, 1), (2, 2), (3, 0), (3, 3)):
        assert np.all(blk(i, j) == 0)
    red = reduce_system(bs, rhs)
    direct = sibc_system(b.BS, b.Q, mesh, SIBC.a0)
    assert np.abs(red.dense() - direct).max() <= 1e-12 * np.abs(direct).max()


def _full_vs_reduced(mesh, coef):
    basis = BasisSet(mesh)
    b = assemble_blocks(mesh, basis, K, coef)
    rhs = assemble_rhs(mesh, basis, PlaneWave.from_angles(20, 10, "phi", K))
    fs = build_full_system(b, rhs)
    x_full = np.linalg.solve(fs.matrix, fs.rhs)
    red = reduce_system(b, rhs)
    x_red = np.linalg.solve(red.dense(), red.rhs)
    n = basis.n
    err = np.linalg.norm(x_full[: 2 * n] - x_red) / np.linalg.norm(x_full[: 2 * n])
    xe = red.expand(x_red)
    res = np.linalg.norm(fs.matrix @ xe - fs.rhs) / np.linalg.norm(fs.rhs)
    return err, res, xe, b, n


def test_full_vs_reduced_tetrahedron(tetra):
    err, res, xe, b, n = _full_vs_reduced(tetra, HOIBC)
    assert err <= 1e-10
    assert res <= 1e-10
    J, M, Jt, Mt = (xe[i * n : (i + 1) * n] for i in range(4))
    CH, CK = b.C_H, b.C_K
    assert np.linalg.norm(CK @ J - CH @ Jt) <= 1e-10 * np.linalg.norm(J)
    assert np.linalg.norm(CK @ M - CH @ Mt) <= 1e-10 * np.linalg.norm(M)


def test_dense_kernel_and_dumps(tmp_path, ico):
    _, _, b = ico
    dk = DenseKernel(b.BS, b.Q)
    x = np.arange(b.n, dtype=complex)
    np.testing.assert_allclose(dk.qt(x), b.Q.T @ x)
    dump_binary(tmp_path / "bs.bin", b.BS)
    np.testing.assert_array_equal(load_binary(tmp_path / "bs.bin"), b.BS)
    dump_matrix_market(tmp_path / "d.mtx", b.D)
    with pytest.raises(ValueError):
        (tmp_path / "x.bin").write_bytes(b"nope")
        load_binary(tmp_path / "x.bin")


def test_errors(ico):
    mesh, basis, b = ico
    with pytest.raises(AssemblyError):
        assemble_blocks(mesh, basis, -1.0, HOIBC, kernel=False)
    nk = assemble_blocks(mesh, basis, K, HOIBC, kernel=False)
    with pytest.raises(AssemblyError):
        build_full_system(nk, np.zeros(6 * basis.n))
    with pytest.raises(AssemblyError):
        reduce_system(nk, np.zeros(2 * basis.n))
