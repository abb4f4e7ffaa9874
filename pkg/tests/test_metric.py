import math

import numpy as np
import pytest

from core.errors import DegenerateMetricError, InvalidParameterError
from geometry.mesh import Immersion, Mesh, generate_disk
from geometry.metric import (
    BoundaryDensity,
    ConformalMetric,
    area,
    boundary_mass,
    identity_metric,
    immersion_conformality,
    pullback,
    random_smooth_factor,
    read_vertex_values,
    sphere_factor,
    write_vertex_values,
)


def test_sphere_factor_values():
    assert sphere_factor(np.zeros(2)) == pytest.approx(4.0)
    assert sphere_factor(np.array([1.0, 0.0])) == pytest.approx(1.0)
    assert sphere_factor(np.array([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx([1.0, 4.0])


def test_flat_and_spherical_area_of_disk():
    mesh = generate_disk(1.0, 32)
    flat = identity_metric(mesh)
    assert area(mesh, flat) == pytest.approx(math.pi, rel=5e-3)
    # the unit disk is the lower hemisphere in the stereographic chart
    round_metric = flat.with_factor(sphere_factor(mesh.vertices))
    assert area(mesh, round_metric) == pytest.approx(2 * math.pi, rel=1e-2)


def test_scaling_multiplies_area():
    mesh = generate_disk(1.0, 8)
    metric = identity_metric(mesh)
    assert area(mesh, metric.scaled(3.0)) == pytest.approx(3.0 * area(mesh, metric), rel=1e-12)


def test_boundary_mass_of_constant_density():
    mesh = generate_disk(1.0, 32)
    mass = boundary_mass(mesh, identity_metric(mesh), BoundaryDensity.constant(mesh, 2.0))
    assert mass == pytest.approx(4 * math.pi, rel=5e-3)


def test_boundary_density_must_be_positive_on_boundary():
    mesh = generate_disk(1.0, 2)
    values = np.ones(mesh.n_vertices)
    values[mesh.boundary_vertices[0]] = 0.0
    with pytest.raises(InvalidParameterError):
        BoundaryDensity(values).check(mesh)
    with pytest.raises(InvalidParameterError):
        BoundaryDensity.constant(mesh, -1.0)


def test_random_smooth_factor_spans_range():
    mesh = generate_disk(1.0, 8)
    rng = np.random.default_rng(7)
    h = random_smooth_factor(mesh, rng, 0.5, 2.0)
    assert h.min() == pytest.approx(0.5)
    assert h.max() == pytest.approx(2.0)
    with pytest.raises(InvalidParameterError):
        random_smooth_factor(mesh, rng, 2.0, 0.5)


def test_random_smooth_factor_is_reproducible():
    mesh = generate_disk(1.0, 4)
    a = random_smooth_factor(mesh, np.random.default_rng(3), 0.5, 2.0)
    b = random_smooth_factor(mesh, np.random.default_rng(3), 0.5, 2.0)
    assert np.array_equal(a, b)


def test_degenerate_pullback_raises():
    mesh = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    collapsed = Immersion(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
    with pytest.raises(DegenerateMetricError):
        pullback(collapsed, mesh)


def test_metric_rejects_non_positive_factor():
    mesh = generate_disk(1.0, 1)
    metric = identity_metric(mesh)
    factor = np.ones(mesh.n_vertices)
    factor[0] = 0.0
    with pytest.raises(InvalidParameterError):
        metric.with_factor(factor)


def test_class_fingerprint_ignores_scale():
    mesh = generate_disk(1.0, 4)
    small = identity_metric(mesh)
    big = identity_metric(generate_disk(2.0, 4))
    assert small.class_fingerprint == big.class_fingerprint
    assert small.fingerprint != big.fingerprint


def test_identity_immersion_is_conformal():
    mesh = generate_disk(1.0, 4)
    dev = immersion_conformality(mesh, identity_metric(mesh), Immersion.identity(mesh))
    assert np.max(dev) == pytest.approx(0.0, abs=1e-12)


def test_vertex_value_sidecar(tmp_path):
    path = tmp_path / "factor.csv"
    values = np.linspace(1.0, 2.0, 10)
    write_vertex_values(path, values)
    assert path.read_text().splitlines()[0] == "vertex_index,value"
    assert np.array_equal(read_vertex_values(path, 10), values)

    write_vertex_values(path, values, indices=np.array([1, 3]))
    partial = read_vertex_values(path, 10, fill=0.0)
    assert partial[1] == values[1] and partial[3] == values[3]
    assert partial[0] == 0.0
    with pytest.raises(InvalidParameterError):
        read_vertex_values(path, 2)


def test_conformal_metric_validates_lengths():
    with pytest.raises(InvalidParameterError):
        ConformalMetric(np.array([1.0, -1.0]), np.ones(3))
