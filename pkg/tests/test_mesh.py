import math

import numpy as np
import pytest

from core.errors import ConfigError, InvalidParameterError
from geometry.mesh import (
    Mesh,
    format_mesh,
    generate_annulus,
    generate_boundary_graded_disk,
    generate_disk,
    generate_spherical_cap,
    parse_mesh,
    read_mesh,
    validate,
    write_mesh,
)


def test_disk_topology():
    for resolution in (1, 3, 8):
        mesh = generate_disk(1.0, resolution)
        report = validate(mesh, expected_euler=1)
        assert report.passed
        assert report.euler_characteristic == 1
        assert report.boundary_loops == 1


def test_minimal_fan():
    mesh = generate_disk(1.0, 1)
    assert mesh.n_vertices == 7
    assert mesh.n_triangles == 6
    assert len(mesh.interior_vertices) == 1


def test_disk_area_and_scaling():
    small = generate_disk(1.0, 32)
    big = generate_disk(2.0, 32)
    assert small.area == pytest.approx(math.pi, rel=5e-3)
    assert big.area == pytest.approx(4 * small.area, rel=1e-12)


def test_disk_refinement_is_second_order():
    deficits = [math.pi - generate_disk(1.0, n).area for n in (4, 8, 16)]
    assert deficits[0] / deficits[1] >= 3
    assert deficits[1] / deficits[2] >= 3


def test_disk_rejects_bad_parameters():
    with pytest.raises(InvalidParameterError):
        generate_disk(0.0, 4)
    with pytest.raises(InvalidParameterError):
        generate_disk(1.0, 0)


def test_annulus():
    mesh = generate_annulus(0.5, 1.0, 32)
    report = validate(mesh, expected_euler=0)
    assert report.passed
    assert report.boundary_loops == 2
    assert mesh.area == pytest.approx(0.75 * math.pi, rel=5e-3)


def test_annulus_boundary_lengths():
    mesh = generate_annulus(0.9, 1.0, 64)
    lengths = sorted(mesh.boundary_length(i) for i in range(2))
    assert lengths[0] == pytest.approx(2 * math.pi * 0.9, rel=5e-3)
    assert lengths[1] == pytest.approx(2 * math.pi, rel=5e-3)
    assert mesh.boundary_length() == pytest.approx(sum(lengths))


def test_annulus_rejects_inverted_radii():
    with pytest.raises(InvalidParameterError):
        generate_annulus(1.0, 0.5, 8)


def test_spherical_cap():
    mesh = generate_spherical_cap(math.pi / 2, 16)
    assert validate(mesh, expected_euler=1).passed
    assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)
    assert mesh.area == pytest.approx(2 * math.pi, rel=1e-2)


def test_validate_flags_degenerate_triangle():
    vertices = [[0, 0], [1, 0], [2, 0], [0, 1]]
    mesh = Mesh(vertices, [[0, 1, 3], [0, 1, 2]])
    report = validate(mesh)
    assert not report.passed
    assert report.degenerate_triangles == 1
    assert any("degenerate" in f for f in report.failures)


def test_validate_flags_disconnected_mesh():
    vertices = [[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]]
    report = validate(Mesh(vertices, [[0, 1, 2], [3, 4, 5]]))
    assert not report.connected
    assert not report.passed


def test_triangle_quality_of_equilateral():
    mesh = Mesh([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]], [[0, 1, 2]])
    assert mesh.triangle_qualities()[0] == pytest.approx(0.5)


def test_boundary_graded_disk():
    mesh, center = generate_boundary_graded_disk(1.0, 0.2, 1.0, 8)
    assert center == 0
    assert np.allclose(mesh.vertices[center], 0.0)
    assert center in mesh.boundary_vertices
    report = validate(mesh, expected_euler=1)
    assert report.passed
    assert report.boundary_loops == 1
    # every vertex lies in the disk of radius 1 around (-1, 0)
    assert np.all(np.linalg.norm(mesh.vertices + [1.0, 0.0], axis=1) <= 1.0 + 1e-12)
    assert mesh.area == pytest.approx(math.pi, rel=2e-2)
    tip = 0.2 * math.exp(-1.0 / 0.2)
    assert np.count_nonzero(np.linalg.norm(mesh.vertices, axis=1) <= tip) >= 8


def test_mesh_file_roundtrip(tmp_path):
    mesh = generate_annulus(0.5, 1.0, 4)
    path = tmp_path / "annulus.cslmesh"
    write_mesh(mesh, path)
    loaded = read_mesh(path)
    assert loaded.family == "annulus"
    assert loaded.fingerprint == mesh.fingerprint
    assert np.array_equal(loaded.triangles, mesh.triangles)


def test_parse_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_mesh("not a mesh\n")
    with pytest.raises(ConfigError):
        parse_mesh("")
    with pytest.raises(ConfigError):
        parse_mesh("CSLMESH 1\n3 1 2\n0 0\n1 0\n")
    with pytest.raises(ConfigError):
        parse_mesh("CSLMESH 1\n3 1 2\n0 0\n1 zero\n0 1\n0 1 2\n")


def test_magic_line_comes_first():
    body = "CSLMESH 1\n3 1 2\n0 0\n1 0\n0 1\n0 1 2\n"
    assert parse_mesh(body).n_triangles == 1
    assert parse_mesh(body.replace("\n", "\n# note\n", 1)).n_triangles == 1
    with pytest.raises(ConfigError):
        parse_mesh("# csl 0.1\n" + body)
    assert format_mesh(generate_disk(1.0, 2)).splitlines()[0] == "CSLMESH 1"


def test_non_ascii_file_is_a_config_error(tmp_path):
    path = tmp_path / "bad.cslmesh"
    path.write_bytes(b"CSLMESH 1\n3 1 2\n0 0\xff\n1 0\n0 1\n0 1 2\n")
    with pytest.raises(ConfigError):
        read_mesh(path)


def test_fingerprint_ignores_family_comment():
    mesh = generate_disk(1.0, 2)
    other = Mesh(mesh.vertices, mesh.triangles, family="custom")
    assert other.fingerprint == mesh.fingerprint


def test_mesh_arrays_are_read_only():
    mesh = generate_disk(1.0, 2)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 1.0
