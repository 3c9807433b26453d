import functools

import numpy as np
import pytest

import cproj.prolongation as pr

from cproj.metrisability import flat_state_matrix, solve_flat, state_from_metric
from cproj.prolongation import (
    EPS,
    EPS_INV,
    ChartPath,
    InvariantBreachError,
    ProlongedState,
    from_real,
    holonomy_defect,
    propagator,
    prolonged_rhs,
    rhs_matrices,
    transport,
)
from cproj.structure import ProjectiveStructure, fubini_study, levi_civita, project

from _factories import random_hermitian3, random_potential, random_structure

ZERO = ProjectiveStructure.zero()
Z1SQ = ProjectiveStructure({"Pi1_22": "z1^2"})


def derivative(pi, state, p, v):
    return ProlongedState.from_real(prolonged_rhs(pi, p, v) @ state.to_real())


def test_epsilon_conventions():
    assert EPS[0, 1] == 1
    assert np.array_equal(EPS @ EPS_INV, np.eye(2))
    assert EPS_INV[0, 1] == -1


def test_state_round_trip_and_validation():
    s = ProlongedState([[1, 0.5 - 0.25j], [0.5 + 0.25j, -2]], [1j, 2 - 1j], 3.0)
    assert np.array_equal(ProlongedState.from_real(s.to_real()).to_real(), s.to_real())
    assert s.det == pytest.approx(-2 - 0.3125)
    with pytest.raises(InvariantBreachError):
        ProlongedState([[1, 1], [0, 1]], [0, 0], 0)
    with pytest.raises(InvariantBreachError):
        ProlongedState(np.eye(2), [0, 0], 1j)


def test_rhs_example_scalar_feeds_h2():
    d = derivative(ZERO, ProlongedState(np.eye(2), [0, 0], 1.0), (0, 0), (1, 0))
    assert np.all(d.hmat == 0)
    assert d.hvec[0] == 0 and d.hvec[1] == -1
    assert d.hscal == 0


def test_rhs_zero_state():
    rng = np.random.default_rng(0)
    pi, _ = random_structure(rng)
    assert np.all(derivative(pi, ProlongedState.zero(), (0.1, 0.2j), (1, 1j)).to_real() == 0)


def test_rhs_example_vector_feeds_hmat():
    # d h_{i jbar} = h_i conj(eps_{sj} v^s) + conj(h_j) eps_{si} v^s with h = (1, 0), v = (1, 0):
    # only eps_{12} v^1 = 1 survives, so d h_{1 bar2} = d h_{2 bar1} = +1
    d = derivative(ZERO, ProlongedState(np.zeros((2, 2)), [1, 0], 0.0), (0, 0), (1, 0))
    assert np.array_equal(d.hmat, [[0, 1], [1, 0]])
    assert np.all(d.hvec == 0)
    assert d.hscal == 0


def test_rhs_is_real_linear_in_velocity():
    rng = np.random.default_rng(1)
    pi, _ = random_structure(rng)
    p = (0.2 - 0.1j, 0.3j)
    v, w = np.array([1 + 2j, -0.5j]), np.array([0.3, 1 - 1j])
    a, b = 0.7, -1.3
    lhs = prolonged_rhs(pi, p, a * v + b * w)
    rhs = a * prolonged_rhs(pi, p, v) + b * prolonged_rhs(pi, p, w)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_rhs_keeps_hmat_hermitian_for_random_data():
    rng = np.random.default_rng(2)
    for _ in range(5):
        pi, _ = random_structure(rng)
        data = pi.gauge_data(rng.uniform(-0.8, 0.8, (20, 2)) + 1j * rng.uniform(-0.8, 0.8, (20, 2)))
        A = rhs_matrices(data, rng.normal(size=(20, 2)) + 1j * rng.normal(size=(20, 2)))
        assert A.shape == (20, 9, 9) and np.isfinite(A).all()


def test_transport_constant_path_is_identity():
    path = ChartPath.parametric("0.1", "0.2")
    s = ProlongedState([[1, 0], [0, 2]], [1, 1j], 0.5)
    assert np.allclose(transport(Z1SQ, s, path, 100).to_real(), s.to_real(), atol=0)


def test_transport_of_zero_state():
    path = ChartPath.polyline([(0, 0), (0.3, 0.2j), (0.5j, 0.1)])
    assert np.all(transport(Z1SQ, ProlongedState.zero(), path).to_real() == 0)


def test_flat_closed_form_matches_transport():
    rng = np.random.default_rng(3)
    for _ in range(5):
        C = random_hermitian3(rng)
        pts = rng.uniform(-0.4, 0.4, (3, 2)) + 1j * rng.uniform(-0.4, 0.4, (3, 2))
        path = ChartPath.polyline(pts)
        assert path.length <= 2
        moved = transport(ZERO, solve_flat(C, pts[0]), path, 1000)
        assert np.max(np.abs(moved.to_real() - solve_flat(C, pts[-1]).to_real())) < 1e-8


def test_flat_solution_along_curved_path():
    C = np.diag([1.0, -1.0, 2.0]).astype(complex)
    C[0, 2] = C[2, 0] = 0.3
    path = ChartPath.parametric("0.5*z1^2/(1+z1^2)", "i*z1*(1-z1)/2")
    moved = transport(ZERO, solve_flat(C, path.start), path, 1000)
    assert np.max(np.abs(moved.to_real() - solve_flat(C, path.end).to_real())) < 1e-10


def test_flat_layout_with_opposite_vector_signs_is_not_parallel():
    C = np.eye(3, dtype=complex)
    C[0, 1] = C[1, 0] = 0.5
    a, b = (0, 0), (0.4 + 0.1j, -0.3j)

    def flipped(p):
        s = solve_flat(C, p)
        return ProlongedState(s.hmat, -s.hvec, s.hscal)

    moved = transport(ZERO, flipped(a), ChartPath.polyline([a, b]), 500)
    assert np.max(np.abs(moved.to_real() - flipped(b).to_real())) > 1e-2


def test_flat_state_matrix_layout():
    s = solve_flat(np.eye(3), (1, 0))
    H = flat_state_matrix(s)
    assert np.allclose(H, [[1, -1, 0], [-1, 2, 0], [0, 0, 1]])
    assert s.hscal == 1 and s.hvec[1] == -1 and s.hvec[0] == 0
    assert np.allclose(s.hmat, [[-1, 0], [0, -2]])


def test_transport_is_linear():
    rng = np.random.default_rng(4)
    pi, _ = random_structure(rng)
    path = ChartPath.polyline([(0, 0), (0.2, 0.1j), (0.1 - 0.1j, 0.3)])
    s1 = ProlongedState.from_real(rng.normal(size=9))
    s2 = ProlongedState.from_real(rng.normal(size=9))
    a, b = 1.5, -0.25
    lhs = transport(pi, ProlongedState.from_real(a * s1.to_real() + b * s2.to_real()), path, 200)
    rhs = a * transport(pi, s1, path, 200).to_real() + b * transport(pi, s2, path, 200).to_real()
    assert np.max(np.abs(lhs.to_real() - rhs)) < 1e-12


def test_holonomy_examples():
    square = ChartPath.polyline([(0, 0), (0.2, 0), (0.2, 0.2), (0, 0.2), (0, 0)])
    assert holonomy_defect(ZERO, square) < 1e-9
    defect = holonomy_defect(Z1SQ, square)
    assert defect > 1e-6
    assert defect == pytest.approx(0.16, abs=0.01)
    back = ChartPath.polyline([(0, 0), (0.3, 0.1j), (0.2j, 0.3), (0.3, 0.1j), (0, 0)])
    assert holonomy_defect(Z1SQ, back) < 1e-9
    with pytest.raises(ValueError):
        holonomy_defect(Z1SQ, ChartPath.polyline([(0, 0), (0.1, 0)]))


def _kahler_structures():
    rng = np.random.default_rng(12)
    out = [("fubini-study", fubini_study())]
    for n in range(3):
        out.append((f"potential-{n}", random_potential(rng)[0]))
    return out


@pytest.mark.parametrize("name, g", _kahler_structures(), ids=lambda x: x if isinstance(x, str) else "")
def test_metric_state_is_parallel(name, g):
    pi = project(levi_civita(g))
    a, b, c = (0.1, -0.2j), (0.5 + 0.2j, 0.1 - 0.3j), (-0.3j, 0.4)
    path = ChartPath.polyline([a, b, c])
    moved = transport(pi, state_from_metric(g, a, pi), path, 400)
    assert np.max(np.abs(moved.to_real() - state_from_metric(g, c, pi).to_real())) < 1e-9


def test_scalar_equation_needs_full_k_coefficient(monkeypatch):
    g = _kahler_structures()[1][1]
    pi = project(levi_civita(g))
    a, b = (0.1, 0.05j), (0.4 + 0.2j, -0.1 + 0.1j)
    data = pi.gauge_data(np.array([a, b]))
    assert np.max(np.abs(data.k)) > 1e-3
    s0, s1 = state_from_metric(g, a, pi), state_from_metric(g, b, pi)
    path = ChartPath.polyline([a, b])
    full = propagator(pi, path, 400) @ s0.to_real()
    assert np.max(np.abs(full - s1.to_real())) < 1e-9
    monkeypatch.setattr(pr, "rhs_matrices", functools.partial(rhs_matrices, k_coeff=0.5))
    half = propagator(pi, path, 400) @ s0.to_real()
    assert abs(half[8] - s1.hscal) > 1e-4


def test_real_coordinates_match_complex_layout():
    x = np.arange(1.0, 10.0)
    hmat, hvec, hscal = from_real(x)
    assert hmat[0, 1] == 3 + 4j and hmat[1, 0] == 3 - 4j
    assert hvec[0] == 5 + 6j and hvec[1] == 7 + 8j and hscal == 9
