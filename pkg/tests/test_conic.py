import numpy as np
import pytest

from momentdesign.conic import ConicProgram, LMIBlock, SolverOptions, Status, solve, solve_or_raise, to_sdpa
from momentdesign.errors import SolverFailure


def _sym_basis(p):
    mats = []
    for i in range(p):
        for j in range(i, p):
            E = np.zeros((p, p))
            E[i, j] = E[j, i] = 1.0
            mats.append(E)
    return np.array(mats)


def test_scalar_lmi():
    # min x  s.t. [[x, 1], [1, 2]] >= 0  ->  x = 1/2
    blk = LMIBlock(np.array([[0.0, 1.0], [1.0, 2.0]]), np.array([[[1.0, 0.0], [0.0, 0.0]]]))
    sol = solve(ConicProgram(np.array([1.0]), (blk,), np.zeros((0, 1)), np.zeros(0)))
    assert sol.status is Status.OPTIMAL
    assert sol.z[0] == pytest.approx(0.5, abs=1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_trace_one_sdp_gives_least_eigenvalue(seed):
    # min <C, X> over X >= 0, tr X = 1 equals lambda_min(C).
    rng = np.random.default_rng(seed)
    p = 4
    C = rng.normal(size=(p, p))
    C = (C + C.T) / 2
    F = _sym_basis(p)
    c = np.einsum("kij,ij->k", F, C)
    A = np.einsum("kii->k", F)[None, :]
    sol = solve(ConicProgram(c, (LMIBlock(np.zeros((p, p)), F),), A, np.array([1.0])))
    assert sol.status is Status.OPTIMAL
    assert sol.primal_objective == pytest.approx(np.linalg.eigvalsh(C)[0], abs=1e-6)
    r = sol.residuals
    assert r["relative_stationarity"] <= 1e-6
    assert max(abs(v) for v in r["complementarity"]) <= 1e-6
    assert min(r["dual_min_eigenvalues"]) >= -1e-8
    assert sol.dual_objective == pytest.approx(sol.primal_objective, abs=1e-6)


def test_logdet_maximisation_on_simplex():
    # max log(z1 z2 z3) s.t. z1 + z2 + z3 = 1  ->  z = 1/3
    n = 3
    lin = np.array([np.diag(np.eye(n)[i]) for i in range(n)])
    ld = LMIBlock(np.zeros((n, n)), lin, name="information")
    nonneg = LMIBlock(np.zeros(n), np.eye(n), name="w", diagonal=True)
    prog = ConicProgram(np.zeros(n), (nonneg,), np.ones((1, n)), np.array([1.0]), logdet=ld, logdet_weight=1.0)
    sol = solve(prog, SolverOptions(gap_tol=1e-10))
    assert sol.status is Status.OPTIMAL
    np.testing.assert_allclose(sol.z, 1 / 3, atol=1e-7)
    # the log-det dual is the inverse information matrix
    np.testing.assert_allclose(sol.logdet_dual, np.linalg.inv(np.diag(sol.z)), rtol=1e-5)


def test_infeasible_program():
    blk = LMIBlock(np.array([-1.0, -1.0]), np.array([[1.0, -1.0]]), diagonal=True)  # z >= 1 and z <= -1
    sol = solve(ConicProgram(np.array([1.0]), (blk,), np.zeros((0, 1)), np.zeros(0)))
    assert sol.status is Status.INFEASIBLE
    assert not sol.ok
    with pytest.raises(SolverFailure):
        solve_or_raise(ConicProgram(np.array([1.0]), (blk,), np.zeros((0, 1)), np.zeros(0)))


def test_facial_reduction_handles_empty_interior():
    # [[1, z], [z, 0]] >= 0 forces z = 0; no strictly feasible point exists.
    blk = LMIBlock(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[[0.0, 1.0], [1.0, 0.0]]]), name="flat")
    other = LMIBlock(np.array([2.0]), np.array([[-1.0]]), diagonal=True, name="box")
    sol = solve(ConicProgram(np.array([-1.0]), (blk, other), np.zeros((0, 1)), np.zeros(0)))
    assert sol.status is Status.OPTIMAL
    assert abs(sol.z[0]) <= 1e-7
    assert "flat" in sol.reduced_blocks


def test_block_validation():
    with pytest.raises(ValueError):
        LMIBlock(np.zeros((2, 3)), np.zeros((1, 2, 3)))
    with pytest.raises(ValueError):
        LMIBlock(np.zeros((2, 2)), np.array([[[0.0, 1.0], [0.0, 0.0]]]))
    blk = LMIBlock(np.zeros((2, 2)), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        ConicProgram(np.zeros(3), (blk,), np.zeros((0, 3)), np.zeros(0))


def test_sdpa_export_header():
    blk = LMIBlock(np.array([[0.0, 1.0], [1.0, 2.0]]), np.array([[[1.0, 0.0], [0.0, 0.0]]]))
    prog = ConicProgram(np.array([1.0]), (blk,), np.array([[1.0]]), np.array([3.0]))
    lines = to_sdpa(prog).splitlines()
    assert lines[1] == "1"  # variables
    assert lines[2] == "2"  # blocks: the LMI plus the equality pair
    assert lines[3] == "2 -2"
    assert float(lines[4]) == 1.0
    assert any(line.startswith("1 1 1 1 ") for line in lines)


def test_opposite_inequalities_get_nonnegative_duals():
    # z1 - 1 >= 0 and 1 - z1 >= 0 pin z1 = 1; facial reduction removes both
    # blocks and the reconstructed multipliers must still be dual feasible.
    lin = np.array([[[1.0]], [[0.0]]])
    prog = ConicProgram(
        np.array([1.0, 0.0]),
        (
            LMIBlock(np.array([[-1.0]]), lin),
            LMIBlock(np.array([[1.0]]), -lin),
            LMIBlock(np.zeros((2, 2)), np.array([[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]])),
        ),
        np.array([[0.0, 1.0]]),
        np.array([1.0]),
    )
    sol = solve(prog)
    assert sol.status is Status.OPTIMAL
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-8)
    r = sol.residuals
    assert min(r["dual_min_eigenvalues"]) >= -1e-8
    assert r["relative_stationarity"] <= 1e-6
