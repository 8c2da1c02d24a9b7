import numpy as np
import pytest

from dualmix import mesh as M
from dualmix.assembly import Dirac
from dualmix.experiments import h1_norm
from dualmix.fespace import p1_gradients, to_vertex_values
from dualmix.infsup import (fit_slope, infsup_decay_rate, infsup_spectrum, infsup_table,
                            laplace_eigenpairs, p1p0_infsup, representation, solve_split, split,
                            stable_subspace_check)
from dualmix.problems import DualMixed
from dualmix.solvers import SolverError

from conftest import jittered

# reference values: the four smallest eigenvalues per resolution
CROSSED = {2: [0.66666667, 0.5, 0.5, 0.22222222], 4: [0.16521696, 0.15643855, 0.15643855, 0.06604647],
           8: [0.04880971, 0.04191655, 0.04191655, 0.01698587]}
RIGHT = {4: [0.44698968, 0.41649077, 0.23888594, 0.23720409], 8: [0.14099494, 0.14089618, 0.06715927, 0.06707865]}
FIRST_EIGEN = lambda x, y: 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)  # noqa: E731


@pytest.mark.parametrize("family,table", [("crossed", CROSSED), ("right", RIGHT)])
def test_table_rows(family, table):
    rows = infsup_table(family, sorted(table))
    for row, n in zip(rows, sorted(table)):
        np.testing.assert_allclose(row["mu"], table[n], atol=1e-6)
        assert row["n_label"] == M.family(family, n).n_vertices
        assert row["beta_h"] == pytest.approx(np.sqrt(table[n][-1]), abs=1e-6)


def test_decay_rates():
    assert infsup_decay_rate("crossed", [2, 4, 8, 16]) == pytest.approx(1.0, abs=0.1)
    assert infsup_decay_rate("right", [4, 8, 16, 32]) == pytest.approx(1.0, abs=0.1)
    assert infsup_decay_rate("right", [4, 8, 16], "DRT0") == pytest.approx(0.0, abs=0.1)
    with pytest.raises(ValueError):
        infsup_decay_rate("right", [4, 8])


def test_drt0_uniformly_stable():
    mins = [infsup_spectrum(M.gen_crossed(n), "DRT0", k=1, vectors=False).mu[-1] for n in (2, 4, 8)]
    np.testing.assert_allclose(mins, 1.0, atol=1e-10)


def test_spectrum_properties(small_mesh):
    spec = infsup_spectrum(small_mesh)
    assert spec.mu[-1] > 1e-12
    assert spec.mu[0] <= 1 + 1e-9
    assert np.all(np.diff(spec.mu) <= 0)
    if len(spec.mu) == 1 or spec.mu[0] - spec.mu[1] > 1e-2 * spec.mu[0]:  # sign is defined only for a simple top eigenvalue
        u1 = spec.U[:, 0]
        assert u1.min() * u1.max() >= -1e-9 * np.abs(u1).max() ** 2
    # sigma_i = -A^-1 B^T u_i are A-orthogonal with (sigma_i, sigma_i) = mu_i
    G = spec.Sigma.T @ (spec.problem.A @ spec.Sigma)
    np.testing.assert_allclose(G, np.diag(spec.mu), atol=1e-10)


@pytest.mark.parametrize("maker", [M.gen_crossed, M.gen_right, M.gen_lshape])
@pytest.mark.parametrize("n", [3, 6, 8])
def test_largest_eigenfunction_constant_sign(maker, n):
    for seed in range(3):
        spec = infsup_spectrum(jittered(maker(n), 0.1, seed))
        assert spec.mu[0] <= 1 + 1e-9
        u1 = spec.U[:, 0]
        assert u1.min() * u1.max() >= -1e-9 * np.abs(u1).max() ** 2


def test_worst_sign_convention():
    U = infsup_spectrum(M.gen_right(4)).U
    idx = np.argmax(np.abs(U), axis=0)
    assert np.all(U[idx, np.arange(U.shape[1])] > 0)


def test_degenerate_pair_subspace():
    """The paired 0.5 eigenvalues on crossed(2): compare the eigenspace, not vectors."""
    spec = infsup_spectrum(M.gen_crossed(2))
    pair = np.flatnonzero(np.isclose(spec.mu, 0.5))
    assert len(pair) == 2
    S, K = spec.problem.schur, spec.problem.K.toarray()
    X = spec.U[:, pair]
    np.testing.assert_allclose(S @ X, 0.5 * K @ X, atol=1e-12)


def test_spectrum_request_errors():
    with pytest.raises(ValueError):
        infsup_spectrum(M.gen_crossed(2), k=99)


def test_drt0_equivalence_with_galerkin():
    for mesh in (M.gen_crossed(4), M.gen_right(6), jittered(M.gen_lshape(3), 0.1, 4)):
        p = DualMixed(mesh, "DRT0")
        f = lambda x, y: np.exp(x) * np.cos(3 * y)  # noqa: E731
        sol = p.solve(f)
        u_G = p.galerkin(f)
        assert h1_norm(mesh, sol.u - u_G) <= 1e-9
        grad = p1_gradients(mesh, u_G)
        coef = sol.sigma.reshape(-1, 3)
        from dualmix.fespace import rt0_values, QUAD5
        vals = rt0_values(p.V, sol.sigma, QUAD5)
        assert coef.shape[0] == mesh.n_triangles
        assert np.abs(vals + grad[:, None, :]).max() <= 1e-9


# -- splitting -----------------------------------------------------------------


@pytest.mark.parametrize("threshold", [0.3, 0.5, 0.7])
def test_splitting_identity(threshold):
    mesh = M.gen_crossed(4)
    problem = DualMixed(mesh)
    spec = infsup_spectrum(problem)
    sp = split(spec, threshold)
    for f in (FIRST_EIGEN, Dirac((1 / 3, 1 / 5)), lambda x, y: x - 3 * y + np.sin(x)):
        parts = solve_split(sp, f)
        sol = problem.solve(f)
        ds = sol.sigma - parts.sigma1 - parts.sigma2
        du = sol.u_dofs - parts.u1 - parts.u2
        assert np.sqrt(ds @ (problem.A @ ds)) + np.sqrt(du @ (problem.K @ du)) <= 1e-8
        for a, b, mu in (("A11", "B11", spec.mu[:sp.n_stable]), ("A22", "B22", spec.mu[sp.n_stable:])):
            np.testing.assert_allclose(parts.blocks[a], np.diag(mu), atol=1e-9)
            np.testing.assert_allclose(parts.blocks[b], -np.diag(mu), atol=1e-9)


def test_splitting_tiny_threshold():
    problem = DualMixed(M.gen_right(4))
    spec = infsup_spectrum(problem)
    sp = split(spec, 1e-9)
    assert sp.Q2.shape[1] == 0
    parts = solve_split(sp, FIRST_EIGEN)
    sol = problem.solve(FIRST_EIGEN)
    np.testing.assert_allclose(parts.u1, sol.u_dofs, atol=1e-10)
    np.testing.assert_allclose(parts.sigma1, sol.sigma, atol=1e-10)
    assert not np.any(parts.u2)
    with pytest.raises(ValueError):
        split(spec, 1.5)
    with pytest.raises(ValueError):
        split(infsup_spectrum(problem, k=2), 0.5)


# -- representation ------------------------------------------------------------


@pytest.mark.parametrize("mesh", [M.gen_crossed(4), M.gen_right(6), M.gen_lshape(3)], ids=["crossed", "right", "lshape"])
def test_representation_identities(mesh):
    problem = DualMixed(mesh)
    spec = infsup_spectrum(problem)
    rng = np.random.default_rng(5)
    from dualmix.assembly import PiecewiseConstant
    for _ in range(5):
        f = PiecewiseConstant(rng.uniform(-1, 1, mesh.n_triangles))
        rep = representation(spec, f)
        np.testing.assert_allclose(rep.u_h, problem.solve(f).u_dofs, atol=1e-8)
        u_G = problem.galerkin(f)
        np.testing.assert_allclose(to_vertex_values(problem.Q, rep.u_G), u_G, atol=1e-8)


def _upper_share(spec, f):
    a = np.abs(representation(spec, f).alpha)
    return a[len(a) // 2:].max() / a.max()


def test_alpha_concentration():
    right = infsup_spectrum(M.gen_right(8))
    assert _upper_share(right, FIRST_EIGEN) < 0.01
    assert _upper_share(right, Dirac((0.5, 0.5))) > 0.10
    for spec in (right, infsup_spectrum(M.gen_crossed(8)), infsup_spectrum(jittered(M.gen_right(8), 0.15, 2))):
        smooth = _upper_share(spec, FIRST_EIGEN)
        assert smooth < 0.01
        for point in ((0.5, 0.5), (1 / 3, 1 / 5)):
            assert _upper_share(spec, Dirac(point)) > 10 * smooth


def test_zero_load_representation():
    spec = infsup_spectrum(M.gen_right(4))
    rep = representation(spec, 0.0)
    assert not rep.alpha.any() and not rep.u_h.any()


# -- P1-P0 pairing ---------------------------------------------------------------


def test_p1p0_right_values():
    expected = {2: 0.66666667, 4: 0.33333333, 8: 0.11409783, 16: 0.03137791}
    for n, nu in expected.items():
        res = p1p0_infsup(M.gen_right(n))
        assert res.nu_min == pytest.approx(nu, abs=1e-6)
        assert res.zeta == pytest.approx(np.sqrt(nu), abs=1e-6)


def test_p1p0_slope():
    ns = [8, 16, 32]
    nus = [p1p0_infsup(M.gen_right(n)).nu_min for n in ns]
    assert fit_slope([1 / n for n in ns], nus) == pytest.approx(2.0, abs=0.1)


# -- Laplace eigenpairs and the stable subspace ------------------------------------


def test_laplace_eigenpairs():
    mesh = M.gen_crossed(32)
    lam, W = laplace_eigenpairs(mesh, 3)
    assert 2 * np.pi ** 2 <= lam[0] <= 1.02 * 2 * np.pi ** 2
    assert lam[0] < lam[1]
    problem = DualMixed(mesh)
    from dualmix.assembly import mass_p1
    Mm = mass_p1(problem.Q)
    np.testing.assert_allclose(W.T @ (Mm @ W), np.eye(3), atol=1e-9)
    np.testing.assert_allclose(W.T @ (problem.K @ W), np.diag(lam), atol=1e-9 * lam.max())


def test_stable_subspace_first_eigenfunction():
    rows = stable_subspace_check("crossed", [4, 8, 16, 32], k=1)
    ratios = np.array([r["ratio"] for r in rows])
    tail = ratios[-3:]
    assert tail.max() / tail.min() < 1.2
    assert np.all(ratios <= np.array([r["sup"] for r in rows]) + 1e-12)
    assert all(r["bound"] > 0.5 for r in rows)


def test_stable_subspace_combination():
    rows = stable_subspace_check("crossed", [4, 8, 16], combination=[1, 2])
    ratios = np.array([r["ratio"] for r in rows])
    assert ratios.min() > 0.5
    assert "bound" not in rows[0]


def test_stable_subspace_worst_tracks_beta():
    rows = stable_subspace_check("crossed", [4, 8, 16], combination="worst")
    for r in rows:
        assert r["sup"] == pytest.approx(r["beta_h"], rel=1e-8)
        assert r["ratio"] <= r["sup"] + 1e-12
    assert rows[-1]["ratio"] < 0.5 * rows[0]["ratio"]


def test_nonpositive_mu_raises(monkeypatch):
    import dualmix.infsup as I
    from dualmix.solvers import EigenResult

    def fake(*args, **kw):
        return EigenResult(np.array([1.0, 0.0]), np.zeros((0, 0)), np.zeros(0))

    monkeypatch.setattr(I, "gen_eig", fake)
    with pytest.raises(SolverError, match="not positive"):
        I.infsup_spectrum(M.gen_crossed(2), k=2, vectors=False)
