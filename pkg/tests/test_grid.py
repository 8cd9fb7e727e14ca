import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_eigenpairs, dirichlet_laplacian_1d, dirichlet_laplacian_2d
from statflow.eos import DomainError, EosParams
from statflow.grid import (
    BoundaryData,
    FieldState,
    build_grid,
    build_spectral_basis,
    classify_boundary,
    ghost_extend,
    project_scalar,
    project_vector,
    read_snapshot,
    reconstruct_scalar,
    state_from_variables,
    state_variables,
    total_energy,
    write_snapshot,
)


def test_build_grid_examples():
    g = build_grid(1, 1.0, 8)
    assert g.spacing == (0.125,)
    g2 = build_grid(2, (1.0, 2.0), (8, 16))
    assert g2.spacing == (0.125, 0.125)
    assert g2.cell_volume == pytest.approx(0.125**2)
    with pytest.raises(DomainError):
        build_grid(1, 1.0, 0)
    with pytest.raises(DomainError):
        build_grid(1, 1.0, 3)
    with pytest.raises(DomainError):
        build_grid(1, -1.0, 8)


def test_boundary_face_layout():
    g = build_grid(2, (1.0, 2.0), (4, 6))
    assert g.n_boundary_faces == 2 * 6 + 2 * 4
    normals = g.boundary_normals()
    areas = g.boundary_areas()
    # closed surface: sum of n dA vanishes, total area is the perimeter
    assert np.allclose(np.sum(normals * areas[:, None], axis=0), 0.0)
    assert np.sum(areas) == pytest.approx(2 * (1.0 + 2.0))
    centers = g.boundary_centers()
    sl = g.side_slices()
    assert np.all(centers[sl["x+"], 0] == 1.0)
    assert np.all(centers[sl["y-"], 1] == 0.0)


def test_basis_matches_dense_eigensolver_1d():
    n = 12
    grid = build_grid(1, 1.0, n)
    basis = build_spectral_basis(grid, n)
    w, v = dense_eigenpairs(n)
    assert np.allclose(basis.eigenvalues, w, rtol=1e-12)
    A = dirichlet_laplacian_1d(n)
    for k in range(n):
        mode = basis.scalar_modes[k]
        assert np.allclose(A @ mode, basis.eigenvalues[k] * mode, atol=1e-9 * basis.eigenvalues[k])
    assert basis.eigenvalues[0] < basis.eigenvalues[1]
    assert np.all(np.diff(basis.eigenvalues) > 0)


def test_basis_matches_dense_eigensolver_2d():
    grid = build_grid(2, (1.0, 2.0), (6, 8))
    basis = build_spectral_basis(grid, 10)
    A = dirichlet_laplacian_2d(6, 8, 1.0, 2.0)
    w = np.linalg.eigvalsh(A)
    assert np.allclose(basis.eigenvalues, w[:10], rtol=1e-12)
    for k in range(10):
        mode = basis.scalar_modes[k].ravel()
        assert np.allclose(A @ mode, basis.eigenvalues[k] * mode, atol=1e-9 * basis.eigenvalues[k])
    assert np.all(np.diff(basis.eigenvalues) >= 0)


@pytest.mark.parametrize("grid", [build_grid(1, 2.0, 16), build_grid(2, (1.0, 1.5), (8, 10))])
def test_basis_orthonormal(grid):
    basis = build_spectral_basis(grid, 6)
    vol = grid.cell_volume
    r = basis.scalar_modes.reshape(6, -1)
    w = basis.vector_modes.reshape(6, -1)
    assert np.allclose(r @ r.T * vol, np.eye(6), atol=1e-10)
    assert np.allclose(w @ w.T * vol, np.eye(6), atol=1e-10)
    # modes vanish on the boundary: the odd ghost reflection has zero face average
    for k in range(6):
        faces = np.zeros(grid.n_boundary_faces)
        ext = ghost_extend(basis.scalar_modes[k], grid, faces)
        if grid.dim == 1:
            assert abs(ext[0] + ext[1]) < 1e-12 and abs(ext[-1] + ext[-2]) < 1e-12


def test_projections():
    grid = build_grid(1, 1.0, 16)
    basis = build_spectral_basis(grid, 4)
    r = basis.scalar_modes
    assert np.allclose(project_scalar(r[0], basis), [1, 0, 0, 0], atol=1e-12)
    assert np.allclose(project_scalar(np.zeros(16), basis), 0)
    assert np.allclose(project_scalar(2 * r[0] + 3 * r[1], basis), [2, 3, 0, 0], atol=1e-12)
    w = basis.vector_modes
    assert np.allclose(project_vector(w[0], basis), [1, 0, 0, 0], atol=1e-12)
    assert np.allclose(project_vector(np.zeros((16, 1)), basis), 0)
    assert np.allclose(project_vector(w[0] - w[2], basis), [1, 0, -1, 0], atol=1e-12)
    assert np.allclose(reconstruct_scalar([2, 3, 0, 0], basis), 2 * r[0] + 3 * r[1])
    with pytest.raises(DomainError):
        project_scalar(np.zeros(8), basis)


def test_basis_size_limits():
    grid = build_grid(1, 1.0, 8)
    with pytest.raises(DomainError):
        build_spectral_basis(grid, 0)
    with pytest.raises(DomainError):
        build_spectral_basis(grid, 9)


def test_classify_boundary():
    g = build_grid(1, 1.0, 8)
    part = classify_boundary(BoundaryData.from_functions(g), g)
    assert part.characteristic.all()
    bd = BoundaryData.from_functions(g, u_b=lambda x: np.ones_like(x))
    part = classify_boundary(bd, g)
    assert part.inflow.tolist() == [True, False]
    assert part.outflow.tolist() == [False, True]
    tiny = BoundaryData.from_functions(g, u_b=lambda x: np.full_like(x, 1e-14))
    assert classify_boundary(tiny, g).characteristic.all()


def test_boundary_floor():
    g = build_grid(1, 1.0, 8)
    with pytest.raises(DomainError):
        BoundaryData.from_functions(g, rho_b=0.0)


@settings(max_examples=30)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_ghost_extend_face_average_2d(a, b):
    grid = build_grid(2, (1.0, 1.0), (4, 5))
    rng = np.random.default_rng(0)
    values = rng.normal(size=grid.cells)
    faces = a + b * rng.normal(size=grid.n_boundary_faces)
    ext = ghost_extend(values, grid, faces)
    sl = grid.side_slices()
    assert np.allclose(0.5 * (ext[0, 1:-1] + ext[1, 1:-1]), faces[sl["x-"]])
    assert np.allclose(0.5 * (ext[1:-1, -1] + ext[1:-1, -2]), faces[sl["y+"]])
    corner = 0.25 * (ext[0, 0] + ext[1, 0] + ext[0, 1] + ext[1, 1])
    assert corner == pytest.approx(0.5 * (faces[sl["x-"]][0] + faces[sl["y-"]][0]))


def test_total_energy_infinite_for_moving_vacuum():
    g = build_grid(1, 1.0, 8)
    bd = BoundaryData.from_functions(g)
    rho = np.ones(8)
    rho[3] = 0.0
    mom = np.zeros((8, 1))
    assert np.isfinite(total_energy(FieldState(rho, mom), bd, EosParams(), g))
    mom[3] = 1.0
    assert total_energy(FieldState(rho, mom), bd, EosParams(), g) == np.inf


@settings(max_examples=20, deadline=None)
@given(dim=st.integers(1, 2), t=st.floats(0.0, 10.0), seed=st.integers(0, 2**32 - 1))
def test_snapshot_round_trip(dim, t, seed, tmp_path_factory):
    rng = np.random.default_rng(seed)
    grid = build_grid(dim, [1.0, 2.0][:dim], [5, 7][:dim])
    state = FieldState(rng.uniform(0.1, 2, grid.cells), rng.normal(size=grid.cells + (dim,)))
    path = tmp_path_factory.mktemp("snap") / "s.fsnp"
    write_snapshot(path, grid, t, state_variables(state, grid), extra={"note": 1})
    g2, t2, variables, header = read_snapshot(path)
    back = state_from_variables(variables, g2)
    assert g2 == grid and t2 == t
    assert np.array_equal(back.rho, state.rho) and np.array_equal(back.mom, state.mom)
    assert header["extra"] == {"note": 1}
    raw = path.read_bytes()
    assert raw[:4] == b"FSNP"
    # deterministic bytes
    write_snapshot(path, grid, t, state_variables(state, grid), extra={"note": 1})
    assert path.read_bytes() == raw
