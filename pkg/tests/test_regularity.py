import numpy as np
import pytest
from numpy.testing import assert_allclose

from qd_model.errors import BudgetExceededError, DimensionMismatchError, InputError, NormKinkError
from qd_model.expression import parse
from qd_model.polytope import Polytope
from qd_model.quasidiff import Quasidifferential
from qd_model.regularity import (
    SolutionSetSampler,
    SystemSpec,
    check_condition4,
    check_uderzo_condition,
    compass_directions,
    estimate_error_bound,
    necessity_witness_path,
    psi_expr,
    random_outside_samples,
    regularity_margin_at,
    sampled_strong_slope,
    scan_margins,
    verify_regularity_grid,
)

SQRT2 = np.sqrt(2.0)


@pytest.fixture
def remark_system():
    return SystemSpec([parse("abs(x1) - abs(x2)", 2)], (), 2)


@pytest.fixture
def cubic_system():
    return SystemSpec([parse("min(x1, max(pow(x1, 3), 0))", 1)], (), 1)


@pytest.fixture
def identity_system():
    return SystemSpec([parse("x1", 1)], (), 1)


def test_system_validation():
    with pytest.raises(InputError):
        SystemSpec((), (), 2)
    with pytest.raises(DimensionMismatchError):
        SystemSpec([parse("x3", 3)], (), 2)
    s = SystemSpec([parse("x1 - p", 1)], [parse("x1", 1)], 1, {"p": 1})
    assert (s.l, s.m) == (1, 1)
    f, g = s.values(np.array([[2.0], [0.5]]))
    assert_allclose(f[:, 0], [1.0, -0.5])
    assert_allclose(g[:, 0], [2.0, 0.5])
    assert s.with_params(p=3).params == {"p": 3.0}


def test_psi_values(remark_system):
    psi = psi_expr(remark_system, [0.5])
    assert psi.value([0.0, 0.2]) == pytest.approx(0.7)
    with pytest.raises(DimensionMismatchError):
        psi_expr(remark_system, [0.5, 0.1])
    with pytest.raises(InputError):
        psi_expr(remark_system, [0.5], norm="linf")


@pytest.mark.parametrize("x, y, margin", [
    ([0.0, 0.2], 0.5, SQRT2),
    ([0.3, 0.0], 0.5, 1.0),
    ([0.0, 0.2], -0.5, 1.0),
    ([0.3, 0.0], 0.1, SQRT2),
    ([0.3, 0.2], 0.5, SQRT2),
    ([0.3, 0.2], -0.5, SQRT2),
])
def test_margins_for_difference_of_absolute_values(remark_system, x, y, margin):
    rep = regularity_margin_at(remark_system, x, [y], K=1.5)
    assert rep.outside_graph
    assert rep.condition4_margin == pytest.approx(margin, abs=1e-9)
    assert rep.holds
    assert rep.K_estimate == pytest.approx(1.0 / margin, abs=1e-9)


def test_margin_differs_from_uderzo_at_origin(remark_system):
    rep = regularity_margin_at(remark_system, [0.0, 0.0], [0.5])
    assert rep.condition4_margin == pytest.approx(1.0, abs=1e-9)
    assert rep.uderzo_distance == pytest.approx(0.0, abs=1e-7)


def test_margins_on_random_samples(remark_system):
    samples = random_outside_samples(remark_system, [0.0, 0.0], 0.5, 100, seed=3)
    table = scan_margins(remark_system, samples)
    assert len(table) == 100
    assert table["margin"].min() >= 1.0 - 1e-9
    assert {"x1", "x2", "y1", "psi", "margin"} <= set(table.columns)


@pytest.mark.parametrize("x", [0.05, 0.1, 0.2])
def test_cubic_margin_and_slope(cubic_system, x):
    rep = regularity_margin_at(cubic_system, [x], [0.0])
    assert rep.condition4_margin == pytest.approx(3.0 * x ** 2, rel=1e-9)
    psi = psi_expr(cubic_system, [0.0])
    slope = sampled_strong_slope(psi.values, [x])
    assert slope == pytest.approx(3.0 * x ** 2, rel=0.05)


def test_sampled_slope_of_squared_norm_and_constant():
    def squared(pts):
        return np.sum(pts ** 2, axis=1)

    assert sampled_strong_slope(squared, [0.3, 0.4]) == pytest.approx(1.0, rel=1e-3)
    assert sampled_strong_slope(squared, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-3)
    assert sampled_strong_slope(lambda pts: np.full(len(pts), 2.5), [1.0, -1.0, 0.5]) == 0.0


def test_abs_system_margin_on_equality_with_violated_inequality():
    # y = f(x), x1 > z: ∂̲ψ = co{(-1, 1), (1, -1)} + (1, 0)
    s = SystemSpec([parse("abs(x1) - x2", 2)], [parse("x1", 2)], 2)
    rep = regularity_margin_at(s, [0.5, 0.25], [0.25], [0.25])
    assert rep.outside_graph
    assert rep.psi == pytest.approx(0.25)
    assert rep.condition4_margin == pytest.approx(SQRT2 / 2.0, abs=1e-9)
    assert_allclose(rep.witness_w, [0.0, 0.0], atol=1e-12)


def test_cubic_witness_path(cubic_system):
    path = [(np.array([2.0 ** -k]), np.array([0.0]), None) for k in range(1, 7)]
    witness = necessity_witness_path(cubic_system, path)
    assert witness.all_outside
    assert witness.label == "consistent with non-regularity"
    assert witness.margins[-1] == pytest.approx(3.0 * 4.0 ** -6)


def test_identity_path_gives_no_witness(identity_system):
    path = [(np.array([2.0 ** -k]), np.array([1.0]), None) for k in range(1, 7)]
    witness = necessity_witness_path(identity_system, path)
    assert witness.label == "no witness"
    assert_allclose(witness.margins, 1.0)


def test_condition_checks():
    q = Quasidifferential(Polytope.point([0.5, 0.0]), Polytope.zeros(2))
    assert check_condition4(q, 3.0).holds
    assert not check_condition4(q, 1.5).holds
    with pytest.raises(InputError):
        check_condition4(q, 0.0)
    ok, dist = check_uderzo_condition(q, 0.4)
    assert ok
    assert dist == pytest.approx(0.5)


def test_euclidean_norm_kink():
    s = SystemSpec([parse("x1", 2), parse("x2", 2)], (), 2)
    with pytest.raises(NormKinkError):
        psi_expr(s, [0.0, 0.0], norm="l2").qd([0.0, 0.0])
    rep = regularity_margin_at(s, [0.0, 0.0], [1.0, 0.0], norm="l2")
    assert rep.condition4_margin == pytest.approx(1.0, abs=1e-9)
    assert rep.psi == pytest.approx(1.0)


def test_compass_directions():
    assert compass_directions(1).shape == (2, 1)
    assert compass_directions(2).shape == (8, 2)
    assert compass_directions(3).shape == (26, 3)
    assert_allclose(np.linalg.norm(compass_directions(3), axis=1), 1.0)


def test_solution_set_distance_for_identity(identity_system):
    sampler = SolutionSetSampler(identity_system, [0.0], 0.4)
    d = sampler.distance(np.array([[0.1], [-0.05], [0.3]]), [0.02], None)
    assert_allclose(d, [0.08, 0.07, 0.28], atol=1e-9)


def test_solution_set_with_inequality():
    # S(0, 0) = {x : x1 = x2, x1 <= 0}
    s = SystemSpec([parse("x1 - x2", 2)], [parse("x1", 2)], 2)
    sampler = SolutionSetSampler(s, [0.0, 0.0], 0.4, resolution=401)
    d = sampler.distance(np.array([[-0.1, -0.1], [-0.2, 0.0], [0.1, 0.1]]), [0.0], [0.0])
    assert_allclose(d, [0.0, 0.2 / SQRT2, 0.1 * SQRT2], atol=1e-6)


def test_identity_grid(identity_system):
    ok = verify_regularity_grid(identity_system, [0.0], K=1.1, r=0.1, grid=11)
    assert ok.certified
    assert ok.worst_ratio == pytest.approx(1.0, abs=1e-6)
    assert ok.checked == 110
    assert ok.empty_count == 0
    bad = verify_regularity_grid(identity_system, [0.0], K=0.9, r=0.1, grid=11)
    assert not bad.certified
    assert bad.violator["ratio"] == pytest.approx(1.0, abs=1e-6)
    assert bool(bad.table["violated"].any())


def test_cubic_grid_ratio_grows(cubic_system):
    targets = [([t], None) for t in (1e-2, 1e-3, 1e-4)]
    rep = verify_regularity_grid(cubic_system, [0.0], K=100.0, r=0.1, grid=1, targets=targets)
    assert_allclose(rep.table["ratio"], [t ** (-2.0 / 3.0) for t in (1e-2, 1e-3, 1e-4)], rtol=1e-6)
    assert not rep.certified
    assert rep.violator["y1"] == pytest.approx(1e-4)


def test_grid_budget(identity_system):
    with pytest.raises(BudgetExceededError):
        verify_regularity_grid(identity_system, [0.0], K=1.0, r=0.1, grid=1001)


def test_error_bound_for_identity(identity_system):
    eb = estimate_error_bound(identity_system, [0.0], 0.1)
    assert eb.tau == pytest.approx(1.0, abs=1e-6)
    assert eb.checked == 10
