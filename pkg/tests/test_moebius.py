import math

import numpy as np
import pytest

from core.errors import ConvergenceError, InvalidImmersionError, InvalidParameterError, PointAtInfinityError
from geometry.mesh import Immersion, generate_disk, generate_spherical_cap
from geometry.metric import BoundaryDensity, identity_metric
from geometry.moebius import (
    SPHERE_AREA,
    MoebiusElement,
    SearchBudget,
    apply,
    boundary_measure,
    dilate,
    hersch_balance,
    reduce_dilation,
    rotate_in_chart,
    sphere_to_stereographic,
    spherical_volume,
    stereographic_to_sphere,
    sup_volume_search,
    volume_measure,
)
from geometry.ribbon import RibbonSpec, circle_skeleton, generate_ribbon


@pytest.fixture(scope="module")
def disk():
    mesh = generate_disk(1.0, 16)
    return mesh, Immersion.identity(mesh)


def _random_sphere_points(rng, n):
    y = rng.standard_normal((n, 3))
    return y / np.linalg.norm(y, axis=1, keepdims=True)


def test_stereographic_roundtrip():
    x = np.random.default_rng(0).standard_normal((50, 2)) * 3
    y = stereographic_to_sphere(x)
    assert np.allclose(np.linalg.norm(y, axis=1), 1.0)
    assert np.allclose(sphere_to_stereographic(y), x)
    assert np.allclose(stereographic_to_sphere(np.zeros(2)), [0.0, 0.0, -1.0])


def test_north_pole_has_no_chart_image():
    with pytest.raises(PointAtInfinityError):
        sphere_to_stereographic(np.array([[0.0, 0.0, 1.0]]))


def test_moebius_compose_and_inverse():
    g = MoebiusElement(2.0, np.array([1.0, -1.0]))
    h = MoebiusElement(0.5, np.array([0.0, 3.0]))
    x = np.array([[0.3, 0.7], [-1.0, 2.0]])
    assert np.allclose(g.compose(h)(x), g(h(x)))
    assert np.allclose(g.inverse()(g(x)), x)
    with pytest.raises(InvalidParameterError):
        MoebiusElement(0.0, np.zeros(2))


def test_disk_covers_a_hemisphere(disk):
    mesh, phi = disk
    assert spherical_volume(phi, mesh, quadrature="exact") == pytest.approx(2 * math.pi, rel=1e-2)
    assert spherical_volume(phi, mesh) == pytest.approx(2 * math.pi, rel=1e-2)


def test_scaled_disk_volume(disk):
    mesh, phi = disk
    # a disk of radius R covers 4 pi R^2 / (1 + R^2)
    vol = spherical_volume(apply(MoebiusElement(3.0, np.zeros(2)), phi), mesh, quadrature="exact")
    assert vol == pytest.approx(3.6 * math.pi, rel=1e-2)


def test_far_translation_shrinks_volume(disk):
    mesh, phi = disk
    far = apply(MoebiusElement(1.0, np.array([10.0, 0.0])), phi)
    assert spherical_volume(far, mesh, quadrature="exact") < 0.2


def test_exact_quadrature_stays_below_sphere_area(disk):
    mesh, phi = disk
    huge = apply(MoebiusElement(1000.0, np.zeros(2)), phi)
    assert spherical_volume(huge, mesh, quadrature="exact") <= SPHERE_AREA


def test_volume_invariant_under_pole_fixing_rotation(disk):
    mesh, phi = disk
    shifted = apply(MoebiusElement(2.0, np.array([0.4, -0.1])), phi)
    angle = 0.7
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    a = spherical_volume(shifted, mesh, quadrature="exact")
    b = spherical_volume(rotate_in_chart(shifted, rotation), mesh, quadrature="exact")
    assert a == pytest.approx(b, abs=1e-10)


def test_volume_under_general_rotation_up_to_discretisation(disk):
    # a rotation that moves the poles bends the flat chart triangles, so only
    # the continuum volume is invariant
    mesh, phi = disk
    angle = 0.3
    rotation = np.array([[1.0, 0.0, 0.0],
                         [0.0, math.cos(angle), -math.sin(angle)],
                         [0.0, math.sin(angle), math.cos(angle)]])
    moved = Immersion(sphere_to_stereographic(stereographic_to_sphere(phi.coords) @ rotation.T))
    a = spherical_volume(phi, mesh, quadrature="exact")
    b = spherical_volume(moved, mesh, quadrature="exact")
    assert b == pytest.approx(a, rel=2e-2)
    assert b == pytest.approx(2 * math.pi, rel=2e-2)


def test_unknown_quadrature(disk):
    mesh, phi = disk
    with pytest.raises(InvalidParameterError):
        spherical_volume(phi, mesh, quadrature="simpson")


@pytest.mark.parametrize("seed", range(20))
def test_balance_random_measures(seed):
    rng = np.random.default_rng(seed)
    y = _random_sphere_points(rng, 40)
    weights = rng.uniform(0.1, 1.0, size=40)
    result, balanced = hersch_balance(Immersion(y), weights)
    assert result.residual <= 1e-8
    assert result.iterations <= 200
    center = weights @ balanced.coords / weights.sum()
    assert np.linalg.norm(center) <= 1e-8
    assert np.allclose(np.linalg.norm(balanced.coords, axis=1), 1.0)


def test_balanced_measure_needs_no_iterations():
    y = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    result, _ = hersch_balance(Immersion(y), np.ones(2))
    assert result.iterations == 0
    assert result.dilation_parameter == 0.0


def test_balance_latitude_circle_moves_to_equator():
    theta = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    z = -0.5
    rho = math.sqrt(1 - z * z)
    y = np.column_stack([rho * np.cos(theta), rho * np.sin(theta), np.full(12, z)])
    result, balanced = hersch_balance(Immersion(y), np.ones(12))
    assert result.dilation_center == pytest.approx([0.0, 0.0, 1.0], abs=1e-8)
    assert np.abs(balanced.coords[:, 2]).max() <= 1e-7


def test_balance_rejects_bad_measures():
    y = _random_sphere_points(np.random.default_rng(1), 5)
    with pytest.raises(InvalidParameterError):
        hersch_balance(Immersion(y), np.zeros(5))
    with pytest.raises(InvalidParameterError):
        hersch_balance(Immersion(y), -np.ones(5))
    with pytest.raises(InvalidImmersionError):
        hersch_balance(Immersion(0.5 * y), np.ones(5))


def test_point_mass_cannot_be_balanced():
    y = _random_sphere_points(np.random.default_rng(3), 10)
    weights = np.zeros(10)
    weights[0] = 1.0
    with pytest.raises(ConvergenceError) as info:
        hersch_balance(Immersion(y), weights, max_iter=20)
    assert info.value.residual == pytest.approx(1.0, abs=1e-6)
    assert info.value.iterations <= 20


def test_dilation_fixes_the_sphere():
    y = _random_sphere_points(np.random.default_rng(2), 30)
    out = dilate(np.array([0.2, 0.5, -0.1]), y)
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0)
    assert np.allclose(dilate(np.zeros(3), y), y)


def test_reduce_dilation_matches_chart_map():
    xi = np.array([0.3, -0.2, 0.4])
    gamma, Q, r = reduce_dilation(xi)
    assert np.allclose(Q.T @ Q, np.eye(2))
    assert np.allclose(r.T @ r, np.eye(3))
    x = np.random.default_rng(4).standard_normal((25, 2))
    direct = sphere_to_stereographic(dilate(xi, stereographic_to_sphere(x)) @ r)
    assert np.allclose(direct, gamma(x) @ Q.T)


def test_sup_grid_refinement_is_monotone(disk):
    mesh, phi = disk
    coarse = sup_volume_search(phi, mesh, SearchBudget(n_scales=5, n_anchors=4, multistarts=0), seed=1)
    fine = sup_volume_search(phi, mesh, SearchBudget(n_scales=9, n_anchors=4, multistarts=0), seed=1)
    assert fine.volume >= coarse.volume - 1e-12
    assert coarse.volume == coarse.grid_volume


def test_sup_search_respects_budget(disk):
    mesh, phi = disk
    budget = SearchBudget(n_scales=9, n_anchors=4, multistarts=2, max_evaluations=60)
    result = sup_volume_search(phi, mesh, budget)
    assert result.evaluations <= 60
    assert len(result.trace) == result.evaluations
    assert result.volume >= result.grid_volume
    assert result.volume <= SPHERE_AREA
    head = result.trace_csv().splitlines()[0]
    assert head == "R,t_1,t_2,volume"
    assert result.to_dict()["margin"] == pytest.approx(SPHERE_AREA - result.volume)


def test_sup_search_is_reproducible(disk):
    mesh, phi = disk
    budget = SearchBudget(n_scales=5, n_anchors=3, multistarts=1, max_evaluations=80)
    a = sup_volume_search(phi, mesh, budget, seed=5)
    b = sup_volume_search(phi, mesh, budget, seed=5)
    assert np.array_equal(a.trace, b.trace)


def test_thin_ribbon_sup_stays_below_sphere_area():
    # with scales up to 1000 a blown-up point of the ribbon covers almost the
    # whole sphere, so only strictness survives the default budget
    mesh = generate_ribbon(RibbonSpec(circle_skeleton(1.0, 256), 0.05, n_along=256))
    budget = SearchBudget()
    result = sup_volume_search(Immersion.identity(mesh), mesh, budget)
    assert result.evaluations <= budget.max_evaluations == 10_000
    assert budget.r_max == 1e3
    assert 0.9 * SPHERE_AREA < result.volume < SPHERE_AREA


def test_thin_ribbon_keeps_margin_for_bounded_scales():
    mesh = generate_ribbon(RibbonSpec(circle_skeleton(1.0, 64), 0.05, half_twists=1, n_along=64))
    budget = SearchBudget(r_max=10.0, n_scales=7, n_anchors=4, multistarts=1, max_evaluations=200)
    result = sup_volume_search(Immersion.identity(mesh), mesh, budget)
    assert result.volume < 0.9 * SPHERE_AREA


def test_sphere_minus_cap_comes_close_to_sphere_area():
    mesh = generate_spherical_cap(math.pi - 0.3, 8)
    phi = Immersion(sphere_to_stereographic(mesh.vertices))
    budget = SearchBudget(r_max=100.0, n_scales=9, n_anchors=4, multistarts=1, max_evaluations=300)
    result = sup_volume_search(phi, mesh, budget)
    assert 0.95 * SPHERE_AREA <= result.volume < SPHERE_AREA


def test_measures_integrate_area_and_length():
    mesh = generate_disk(1.0, 8)
    metric = identity_metric(mesh)
    assert volume_measure(mesh, metric).sum() == pytest.approx(mesh.area, rel=1e-12)
    weights = boundary_measure(mesh, metric, BoundaryDensity.constant(mesh, 3.0))
    assert weights.sum() == pytest.approx(3.0 * mesh.boundary_length(), rel=1e-12)
    assert np.all(weights[mesh.interior_vertices] == 0.0)
