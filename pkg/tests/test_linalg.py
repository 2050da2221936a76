import numpy as np
import pytest
import scipy.io

from epiflow.linalg import (
    SingularMatrixError,
    csr_from_triplets,
    export_matrix_market,
    ilu0,
    solve_direct,
    solve_gmres,
)


def dense_gaussian_elimination(a, b):
    """Reference dense solve with partial pivoting, written independently."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(a[col:, col])))
        if a[pivot, col] == 0.0:
            raise ZeroDivisionError("singular")
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            b[[col, pivot]] = b[[pivot, col]]
        for row in range(col + 1, n):
            f = a[row, col] / a[col, col]
            a[row, col:] -= f * a[col, col:]
            b[row] -= f * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


class TestCsrFromTriplets:
    def test_empty(self):
        a = csr_from_triplets([], [], [], (3, 3))
        assert a.shape == (3, 3) and a.nnz == 0

    def test_duplicates_summed(self):
        a = csr_from_triplets([0, 0], [0, 0], [1.0, 2.0], (2, 2))
        assert a.nnz == 1
        assert a[0, 0] == 3.0

    def test_identity_matvec(self):
        n = 7
        a = csr_from_triplets(range(n), range(n), np.ones(n), (n, n))
        x = np.arange(n, dtype=float)
        assert np.array_equal(a @ x, x)

    def test_canonical_form(self):
        a = csr_from_triplets([1, 0, 1, 0], [1, 2, 0, 0], [1, 2, 3, 4], (2, 3))
        assert a.has_sorted_indices
        for row in range(2):
            cols = a.indices[a.indptr[row]:a.indptr[row + 1]]
            assert np.all(np.diff(cols) > 0)

    @pytest.mark.parametrize("rows,cols", [([3], [0]), ([0], [3]), ([-1], [0])])
    def test_out_of_range(self, rows, cols):
        with pytest.raises(ValueError):
            csr_from_triplets(rows, cols, [1.0], (3, 3))

    def test_matvec_linearity(self):
        rng = np.random.default_rng(7)
        n = 40
        a = csr_from_triplets(rng.integers(0, n, 300), rng.integers(0, n, 300),
                              rng.standard_normal(300), (n, n))
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        al, be = 0.37, -1.2
        lhs = a @ (al * x + be * y)
        rhs = al * (a @ x) + be * (a @ y)
        assert np.linalg.norm(lhs - rhs) <= 1e-13 * max(1.0, np.linalg.norm(rhs))


class TestSolveDirect:
    def test_identity(self):
        a = csr_from_triplets(range(4), range(4), np.ones(4), (4, 4))
        b = np.array([1.0, -2.0, 3.0, 0.5])
        assert np.allclose(solve_direct(a, b), b, rtol=1e-14)

    def test_two_by_two(self):
        a = csr_from_triplets([0, 0, 1, 1], [0, 1, 0, 1], [2.0, 1.0, 1.0, 3.0], (2, 2))
        x = solve_direct(a, np.array([3.0, 4.0]))
        assert np.allclose(x, [1.0, 1.0], atol=1e-12)

    def test_matches_dense_elimination_oracle(self):
        rng = np.random.default_rng(42)
        n = 50
        dense = rng.standard_normal((n, n)) + n * np.eye(n)
        b = rng.standard_normal(n)
        rows, cols = np.nonzero(dense)
        a = csr_from_triplets(rows, cols, dense[rows, cols], (n, n))
        x = solve_direct(a, b)
        x_ref = dense_gaussian_elimination(dense, b)
        assert np.linalg.norm(x - x_ref) <= 1e-9 * np.linalg.norm(x_ref)

    def test_residual_contract(self):
        rng = np.random.default_rng(3)
        n = 30
        dense = rng.standard_normal((n, n)) + n * np.eye(n)
        rows, cols = np.nonzero(dense)
        a = csr_from_triplets(rows, cols, dense[rows, cols], (n, n))
        b = rng.standard_normal(n)
        x = solve_direct(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_singular_raises(self):
        a = csr_from_triplets([0, 1], [0, 0], [1.0, 1.0], (2, 2))  # second column empty
        with pytest.raises(SingularMatrixError):
            solve_direct(a, np.ones(2))

    def test_zero_rhs(self):
        a = csr_from_triplets([0, 1], [0, 1], [2.0, 2.0], (2, 2))
        assert np.array_equal(solve_direct(a, np.zeros(2)), np.zeros(2))


class TestSolveGmres:
    def test_identity_converges_immediately(self):
        a = csr_from_triplets(range(5), range(5), np.ones(5), (5, 5))
        b = np.arange(5, dtype=float)
        x, rep = solve_gmres(a, b, tol=1e-12)
        assert rep.converged
        assert rep.iterations <= 1
        assert np.allclose(x, b, atol=1e-10)

    def test_diagonal_krylov_bound(self):
        d = np.arange(1.0, 11.0)
        a = csr_from_triplets(range(10), range(10), d, (10, 10))
        b = np.ones(10)
        x, rep = solve_gmres(a, b, tol=1e-12)
        assert rep.converged and rep.iterations <= 10
        assert np.allclose(x, 1.0 / d, atol=1e-9)

    def test_report_residual_consistent(self):
        rng = np.random.default_rng(11)
        n = 25
        dense = rng.standard_normal((n, n)) + n * np.eye(n)
        rows, cols = np.nonzero(dense)
        a = csr_from_triplets(rows, cols, dense[rows, cols], (n, n))
        b = rng.standard_normal(n)
        x, rep = solve_gmres(a, b, tol=1e-10)
        res = np.linalg.norm(a @ x - b) / np.linalg.norm(b)
        assert rep.converged and res <= 1e-10
        assert abs(res - rep.residual) <= 1e-13 * max(1.0, rep.residual)

    def test_nonconvergence_reported_not_raised(self):
        rng = np.random.default_rng(5)
        n = 60
        dense = rng.standard_normal((n, n)) + n * np.eye(n)
        rows, cols = np.nonzero(dense)
        a = csr_from_triplets(rows, cols, dense[rows, cols], (n, n))
        x, rep = solve_gmres(a, rng.standard_normal(n), tol=1e-14,
                             restart=2, max_iters=1)
        assert not rep.converged

    def test_poisson_agrees_with_direct(self):
        from epiflow.assembly import apply_dirichlet, assemble_stiffness_p1, boundary_dofs_scalar
        from epiflow.mesh import build_unit_square_mesh

        mesh = build_unit_square_mesh(16, 16)
        k = assemble_stiffness_p1(mesh, 1.0)
        rng = np.random.default_rng(0)
        b = rng.standard_normal(mesh.n_vertices)
        a, b = apply_dirichlet(k, b, boundary_dofs_scalar(mesh), 0.0)
        x_direct = solve_direct(a, b)
        x_gmres, rep = solve_gmres(a, b, tol=1e-12, restart=80, max_iters=500,
                                   preconditioner="ilu0")
        assert rep.converged
        denom = np.linalg.norm(x_direct)
        assert np.linalg.norm(x_gmres - x_direct) <= 1e-8 * denom


class TestIlu0:
    def test_exact_on_full_pattern(self):
        # with a dense pattern, ILU(0) is the exact LU factorization
        rng = np.random.default_rng(9)
        n = 12
        dense = rng.standard_normal((n, n)) + n * np.eye(n)
        rows, cols = np.nonzero(dense)
        a = csr_from_triplets(rows, cols, dense[rows, cols], (n, n))
        fac = ilu0(a)
        b = rng.standard_normal(n)
        assert np.allclose(fac.solve(b), np.linalg.solve(dense, b), atol=1e-10)

    def test_missing_diagonal_rejected(self):
        a = csr_from_triplets([0, 1], [1, 0], [1.0, 1.0], (2, 2))
        with pytest.raises(ValueError):
            ilu0(a)


def test_matrix_market_export(tmp_path):
    a = csr_from_triplets([0, 1, 2], [1, 2, 0], [1.5, -2.0, 3.0], (3, 3))
    path = tmp_path / "system.mtx"
    export_matrix_market(a, path)
    back = scipy.io.mmread(path).tocsr()
    assert np.allclose(back.toarray(), a.toarray())
