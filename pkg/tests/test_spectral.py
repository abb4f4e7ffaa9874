import math

import numpy as np
import pytest

from core.errors import InvalidParameterError
from geometry.mesh import Mesh, generate_disk
from geometry.metric import BoundaryDensity, identity_metric
from spectral.eigen import (
    Problem,
    SpectrumResult,
    dirichlet_spectrum,
    neumann_spectrum,
    rayleigh_quotient,
    schrodinger_neumann_spectrum,
    steklov_spectrum,
)
from spectral.fem import assemble, cached_assemble, dirichlet_energy

# squared first zeros of J_1' and J_0
NEUMANN_DISK = 3.389957
DIRICHLET_DISK = 5.783186


@pytest.fixture(scope="module")
def disk32():
    mesh = generate_disk(1.0, 32)
    return mesh, assemble(mesh, identity_metric(mesh))


@pytest.fixture(scope="module")
def disk8():
    mesh = generate_disk(1.0, 8)
    return mesh, identity_metric(mesh)


def _tetrahedron():
    vertices = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    return Mesh(vertices, [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])


def test_stiffness_is_symmetric_with_constant_kernel(disk8):
    mesh, metric = disk8
    system = assemble(mesh, metric)
    K = system.stiffness
    assert abs(K - K.T).max() == pytest.approx(0.0, abs=1e-12)
    assert np.abs(K @ np.ones(mesh.n_vertices)).max() == pytest.approx(0.0, abs=1e-12)


def test_mass_integrates_area(disk8):
    mesh, metric = disk8
    ones = np.ones(mesh.n_vertices)
    consistent = assemble(mesh, metric)
    lumped = assemble(mesh, metric, lumped=True)
    assert ones @ consistent.interior_mass @ ones == pytest.approx(mesh.area, rel=1e-12)
    assert lumped.interior_mass.diagonal().sum() == pytest.approx(mesh.area, rel=1e-12)
    assert ones @ consistent.boundary_mass @ ones == pytest.approx(mesh.boundary_length(), rel=1e-12)


def test_stiffness_ignores_conformal_factor(disk8):
    mesh, metric = disk8
    flat = assemble(mesh, metric)
    curved = assemble(mesh, metric.with_factor(np.linspace(1.0, 3.0, mesh.n_vertices)))
    assert abs(flat.stiffness - curved.stiffness).max() == pytest.approx(0.0, abs=1e-14)


def test_dirichlet_energy_of_linear_function(disk8):
    mesh, metric = disk8
    system = assemble(mesh, metric)
    # |grad x|^2 = 1, integrated over the mesh
    assert dirichlet_energy(system, mesh.vertices[:, 0]) == pytest.approx(mesh.area, rel=1e-10)


def test_cached_assemble_reuses_system(disk8):
    mesh, metric = disk8
    assert cached_assemble(mesh, metric) is cached_assemble(mesh, metric)
    assert cached_assemble(mesh, metric) is not cached_assemble(mesh, metric, lumped=True)


def test_neumann_disk(disk32):
    _, system = disk32
    result = neumann_spectrum(system, 5)
    assert len(result.eigenvalues) == 6
    assert result.eigenvalues[0] == 0.0
    assert result.eigenvalues[1] == pytest.approx(NEUMANN_DISK, rel=1e-2)
    assert result.multiplicities()[:2] == [1, 2]


def test_dirichlet_disk(disk32):
    _, system = disk32
    result = dirichlet_spectrum(system, 3)
    assert result.eigenvalues[0] == pytest.approx(DIRICHLET_DISK, rel=1e-2)
    assert result.eigenvalues[1] == pytest.approx(result.eigenvalues[2], rel=1e-2)


def test_eigenvalue_error_is_second_order():
    errors = {"neumann": [], "dirichlet": []}
    neumann = {}
    for resolution in (16, 32, 64, 128):
        mesh = generate_disk(1.0, resolution)
        system = assemble(mesh, identity_metric(mesh))
        neumann[resolution] = neumann_spectrum(system, 1, keep_vectors=False).eigenvalues[1]
        if resolution == 128:
            continue
        dirichlet = dirichlet_spectrum(system, 1, keep_vectors=False).eigenvalues[0]
        errors["neumann"].append(abs(neumann[resolution] - NEUMANN_DISK))
        errors["dirichlet"].append(abs(dirichlet - DIRICHLET_DISK))
    for problem, e in errors.items():
        # halving the edge length should cut the error by about four
        orders = [math.log2(e[i] / e[i + 1]) for i in range(len(e) - 1)]
        assert min(orders) >= 1.5, (problem, orders)
    assert neumann[128] == pytest.approx(neumann[64], rel=1e-2)


def test_steklov_disk(disk32):
    _, system = disk32
    result = steklov_spectrum(system, 4)
    assert result.solver == "schur-dense"
    assert result.eigenvalues[0] == 0.0
    assert result.eigenvalues[1:] == pytest.approx([1.0, 1.0, 2.0, 2.0], rel=2e-2)


def test_steklov_density_rescales(disk8):
    mesh, metric = disk8
    plain = steklov_spectrum(assemble(mesh, metric), 2)
    heavy = steklov_spectrum(assemble(mesh, metric, BoundaryDensity.constant(mesh, 2.0)), 2)
    assert heavy.eigenvalues[1:] == pytest.approx(plain.eigenvalues[1:] / 2.0, rel=1e-10)


def test_spectra_scale_with_metric(disk8):
    mesh, metric = disk8
    c = 4.0
    base = assemble(mesh, metric)
    scaled = assemble(mesh, metric.scaled(c))
    n0, n1 = neumann_spectrum(base, 3), neumann_spectrum(scaled, 3)
    assert n1.eigenvalues[1:] == pytest.approx(n0.eigenvalues[1:] / c, rel=1e-8)
    d0, d1 = dirichlet_spectrum(base, 3), dirichlet_spectrum(scaled, 3)
    assert d1.eigenvalues == pytest.approx(d0.eigenvalues / c, rel=1e-8)
    s0, s1 = steklov_spectrum(base, 3), steklov_spectrum(scaled, 3)
    assert s1.eigenvalues[1:] == pytest.approx(s0.eigenvalues[1:] / math.sqrt(c), rel=1e-8)


def test_constant_potential_shifts_spectrum(disk8):
    mesh, metric = disk8
    system = assemble(mesh, metric)
    plain = neumann_spectrum(system, 3)
    shifted = schrodinger_neumann_spectrum(system, np.full(mesh.n_vertices, 2.5), 3)
    assert shifted.eigenvalues == pytest.approx(plain.eigenvalues + 2.5, rel=1e-8)


def test_potential_shape_is_checked(disk8):
    mesh, metric = disk8
    with pytest.raises(InvalidParameterError):
        schrodinger_neumann_spectrum(assemble(mesh, metric), np.zeros(3), 2)


def test_rayleigh_quotient_of_eigenvector(disk8):
    mesh, metric = disk8
    system = assemble(mesh, metric)
    result = neumann_spectrum(system, 2)
    f = result.eigenvectors[:, 1]
    q = rayleigh_quotient(system.stiffness, system.interior_mass, f)
    assert q == pytest.approx(result.eigenvalues[1], rel=1e-8)


def test_closed_surface_has_no_boundary_problems():
    mesh = _tetrahedron()
    system = assemble(mesh, identity_metric(mesh))
    with pytest.raises(InvalidParameterError):
        dirichlet_spectrum(system, 1)
    with pytest.raises(InvalidParameterError):
        steklov_spectrum(system, 1)
    assert neumann_spectrum(system, 1).eigenvalues[0] == 0.0


def test_k_must_be_positive(disk8):
    mesh, metric = disk8
    with pytest.raises(InvalidParameterError):
        neumann_spectrum(assemble(mesh, metric), 0)


def test_spectrum_result_json(disk8):
    mesh, metric = disk8
    result = neumann_spectrum(assemble(mesh, metric), 2, keep_vectors=False)
    back = SpectrumResult.from_json(result.to_json())
    assert back.problem is Problem.NEUMANN
    assert np.array_equal(back.eigenvalues, result.eigenvalues)
    assert back.mesh_fingerprint == mesh.fingerprint
    assert back.n_dof == mesh.n_vertices
