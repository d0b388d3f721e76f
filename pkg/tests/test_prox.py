import numpy as np
import pytest

from rcdsolve.errors import ConfigurationError
from rcdsolve.prox import (ProxSpec, apply_prox, gaussian_smooth, gaussian_taps,
                           soft_threshold, unit_columns)

NONEXPANSIVE = [
    ProxSpec("soft_threshold", threshold=0.3),
    ProxSpec("nonneg_soft_threshold", threshold=0.3),
    ProxSpec("box_project", lo=-0.5, hi=0.7),
    ProxSpec("identity"),
]


def test_soft_threshold_closed_form():
    spec = ProxSpec("soft_threshold", threshold=1.0)
    np.testing.assert_array_equal(apply_prox(spec, np.array([0.5, 1.5, -1.5])), [0.0, 0.5, -0.5])


def test_zero_threshold_is_identity(rng):
    x = rng.standard_normal(50)
    np.testing.assert_array_equal(apply_prox(ProxSpec("soft_threshold"), x), x)


def test_nonneg_variant(rng):
    x = rng.standard_normal(100)
    got = apply_prox(ProxSpec("nonneg_soft_threshold", threshold=0.2), x)
    np.testing.assert_array_equal(got, np.maximum(x - 0.2, 0.0))


def test_unit_columns_three_four_five():
    got = apply_prox(ProxSpec("l1_then_unit_columns"), np.array([[3.0], [4.0]]))
    np.testing.assert_allclose(got, [[0.6], [0.8]], rtol=0, atol=1e-15)


def test_zero_column_reset_to_first_basis_vector():
    a = np.array([[0.1, 2.0], [-0.2, 0.0], [0.05, 1.0]])
    got = apply_prox(ProxSpec("l1_then_unit_columns", threshold=0.5), a)
    np.testing.assert_array_equal(got[:, 0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(np.linalg.norm(got, axis=0), 1.0, atol=1e-12)
    np.testing.assert_array_equal(unit_columns(np.zeros((2, 1))), [[1.0], [0.0]])


@pytest.mark.parametrize("spec", NONEXPANSIVE, ids=lambda s: s.kind)
def test_nonexpansive(rng, spec):
    for _ in range(100):
        x, y = rng.standard_normal((2, 7, 5)) * 2
        assert np.linalg.norm(apply_prox(spec, x) - apply_prox(spec, y)) <= np.linalg.norm(x - y)


def test_box_then_smooth_nonexpansive(rng):
    # both clamping and a normalized nonnegative blur are nonexpansive
    spec = ProxSpec("box_then_smooth", smooth_sigma=0.8)
    for _ in range(100):
        x, y = rng.standard_normal((2, 12, 10, 3))
        assert np.linalg.norm(apply_prox(spec, x) - apply_prox(spec, y)) <= np.linalg.norm(x - y)


def test_l1_family_fixes_zero():
    for kind in ("soft_threshold", "nonneg_soft_threshold"):
        assert not apply_prox(ProxSpec(kind, threshold=0.4), np.zeros((3, 3))).any()


@pytest.mark.parametrize("spec", [ProxSpec("box_project"), ProxSpec("soft_threshold")], ids=str)
def test_idempotent(rng, spec):
    x = rng.standard_normal((6, 6)) * 3
    once = apply_prox(spec, x)
    np.testing.assert_array_equal(apply_prox(spec, once), once)


def test_fixed_points(rng):
    inside = rng.random((5, 5, 3))
    np.testing.assert_array_equal(apply_prox(ProxSpec("box_project"), inside), inside)
    const = np.full((9, 9, 3), 0.4)
    np.testing.assert_allclose(apply_prox(ProxSpec("box_then_smooth", smooth_sigma=1.2), const),
                               const, rtol=0, atol=1e-15)
    cols = unit_columns(rng.standard_normal((4, 3)))
    np.testing.assert_allclose(apply_prox(ProxSpec("l1_then_unit_columns"), cols), cols, atol=1e-15)


def test_gaussian_taps():
    g = gaussian_taps(1.0)
    assert g.size == 7 and g.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(g, g[::-1])
    assert np.array_equal(gaussian_smooth(np.eye(3), 0.0), np.eye(3))


def test_box_then_smooth_clamps_first():
    x = np.zeros((9, 9, 1))
    x[4, 4, 0] = 10.0
    got = apply_prox(ProxSpec("box_then_smooth", smooth_sigma=1.0), x)
    assert got.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kwargs", [dict(kind="tv"), dict(kind="soft_threshold", threshold=-1.0),
                                    dict(kind="box_project", lo=1.0, hi=0.0),
                                    dict(kind="box_then_smooth", smooth_sigma=-0.1),
                                    dict(kind="identity", threshold=float("nan"))])
def test_invalid_specs(kwargs):
    with pytest.raises(ConfigurationError):
        ProxSpec(**kwargs)


def test_apply_rejects_non_spec():
    with pytest.raises(ConfigurationError):
        apply_prox("soft_threshold", np.zeros(3))


def test_soft_threshold_helper_symmetry(rng):
    x = rng.standard_normal(30)
    np.testing.assert_array_equal(soft_threshold(-x, 0.3), -soft_threshold(x, 0.3))
