import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmn import oracles
from dmn.errors import NonPhysicalMaterial
from dmn.mandel import (HYDROSTATIC, IsotropicElastic, display_angle, from_tensor, is_spd,
                        iso_stiffness, mandel_to_voigt_stiffness, ortho_stiffness, rotate_stiffness,
                        rotate_vec, rotation_matrix, rotation_matrix_grad, to_tensor,
                        voigt_to_mandel_stiffness)

from conftest import random_ortho, random_spd

angle = st.floats(-10.0, 10.0, allow_nan=False)
angles = st.tuples(angle, angle, angle)
vec6 = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=6, max_size=6).map(np.array)


def test_iso_nu_zero_is_identity():
    np.testing.assert_array_equal(iso_stiffness(IsotropicElastic(1.0, 0.0)), np.eye(6))


def test_iso_lame_entries():
    C = iso_stiffness(IsotropicElastic(1.0, 0.3))
    lam = 0.3 / (1.3 * 0.4)
    mu = 1.0 / 2.6
    assert C[0, 0] == pytest.approx(lam + 2 * mu, rel=1e-14)
    assert C[0, 1] == pytest.approx(lam, rel=1e-14)
    np.testing.assert_allclose(np.diag(C)[3:], 2 * mu, rtol=1e-14)
    assert lam == pytest.approx(0.5769230769, rel=1e-9)


def test_iso_spd_for_steel():
    assert np.all(np.linalg.eigvalsh(iso_stiffness(IsotropicElastic(210e3, 0.3))) > 0)


@pytest.mark.parametrize("E,nu", [(0.0, 0.3), (-1.0, 0.3), (1.0, 0.5), (1.0, -1.0), (1.0, 0.7),
                                  (float("nan"), 0.2)])
def test_iso_rejects_nonphysical(E, nu):
    with pytest.raises(NonPhysicalMaterial):
        IsotropicElastic(E, nu)


def test_moduli():
    m = IsotropicElastic(2.6, 0.3)
    assert m.shear_modulus == pytest.approx(1.0)
    assert m.bulk_modulus == pytest.approx(2.6 / 1.2)


@given(vec6)
def test_tensor_round_trip(v):
    T = to_tensor(v)
    np.testing.assert_array_equal(T, T.T)
    np.testing.assert_allclose(from_tensor(T), v, rtol=1e-15, atol=1e-12)


def test_energy_is_dot_product(rng):
    a, b = rng.normal(size=6), rng.normal(size=6)
    assert a @ b == pytest.approx(np.sum(to_tensor(a) * to_tensor(b)), rel=1e-13)


def test_voigt_round_trip(rng):
    C = random_spd(rng)
    np.testing.assert_allclose(voigt_to_mandel_stiffness(mandel_to_voigt_stiffness(C)), C, rtol=1e-15)
    assert mandel_to_voigt_stiffness(iso_stiffness(IsotropicElastic(2.6, 0.3)))[3, 3] == pytest.approx(1.0)


def test_rotation_zero_is_identity():
    np.testing.assert_array_equal(rotation_matrix(0.0, 0.0, 0.0), np.eye(6))


def test_rotation_x_quarter_turn_by_hand():
    # r_p(pi/2) = [[0,1,0],[1,0,0],[0,0,-1]], r_v(pi/2) = [[0,-1],[1,0]] on slots (2,3,4) and (5,6)
    expected = np.zeros((6, 6))
    expected[0, 0] = 1.0
    expected[1, 2] = expected[2, 1] = 1.0
    expected[3, 3] = -1.0
    expected[4, 5], expected[5, 4] = -1.0, 1.0
    np.testing.assert_allclose(rotation_matrix(np.pi / 2, 0.0, 0.0), expected, atol=1e-15)


@given(angles)
def test_rotation_orthogonal(a):
    R = rotation_matrix(*a)
    np.testing.assert_allclose(R.T @ R, np.eye(6), atol=1e-12)


def test_rotation_matches_tensor_oracle(rng):
    for a, b, g in rng.uniform(-np.pi, np.pi, (50, 3)):
        R = rotation_matrix(a, b, g)
        ref = oracles.mandel_rotation_oracle(oracles.tait_bryan(a, b, g))
        np.testing.assert_allclose(R, ref, atol=1e-12)


def test_rotation_vectorized(rng):
    ang = rng.uniform(-3, 3, (5, 3))
    R = rotation_matrix(ang[:, 0], ang[:, 1], ang[:, 2])
    assert R.shape == (5, 6, 6)
    for k in range(5):
        np.testing.assert_array_equal(R[k], rotation_matrix(*ang[k]))


def test_rotation_grad_matches_fd(rng):
    a = rng.uniform(-3, 3, 3)
    _, *grads = rotation_matrix_grad(*a)
    h = 1e-6
    for k in range(3):
        ap, am = a.copy(), a.copy()
        ap[k] += h
        am[k] -= h
        fd = (rotation_matrix(*ap) - rotation_matrix(*am)) / (2 * h)
        np.testing.assert_allclose(grads[k], fd, atol=1e-9)


@given(angles)
def test_isotropic_invariant_under_rotation(a):
    C = iso_stiffness(IsotropicElastic(3.0, 0.27))
    np.testing.assert_allclose(rotate_stiffness(C, *a), C, atol=1e-12 * np.max(C))


def test_rotate_stiffness_zero_angles(rng):
    C = random_spd(rng)
    np.testing.assert_allclose(rotate_stiffness(C, 0, 0, 0), C, rtol=0, atol=0)


def test_ortho_gamma_quarter_turn_swaps_axes():
    C = ortho_stiffness(5.0, 2.0, 1.0, 0.25, 0.2, 0.3, 1.5, 0.7, 0.4)
    Cr = rotate_stiffness(C, 0.0, 0.0, np.pi / 2)
    ref = oracles.rotate_stiffness_tensor_oracle(C, oracles.tait_bryan(0.0, 0.0, np.pi / 2).T)
    np.testing.assert_allclose(Cr, ref, atol=1e-12)
    assert Cr[0, 0] == pytest.approx(C[1, 1])
    assert Cr[1, 1] == pytest.approx(C[0, 0])
    assert Cr[3, 3] == pytest.approx(C[4, 4])


def test_rotate_stiffness_matches_4th_order_oracle(rng):
    for _ in range(30):
        C = random_ortho(rng) if rng.random() < 0.5 else random_spd(rng)
        a, b, g = rng.uniform(-np.pi, np.pi, 3)
        ref = oracles.rotate_stiffness_tensor_oracle(C, oracles.tait_bryan(a, b, g).T)
        np.testing.assert_allclose(rotate_stiffness(C, a, b, g), ref, atol=1e-12)


@given(angles)
def test_rotate_stiffness_preserves_spectrum_and_norm(a):
    C = random_spd(np.random.default_rng(int(abs(a[0]) * 1e6) % 2**32))
    Cr = rotate_stiffness(C, *a)
    np.testing.assert_allclose(Cr, Cr.T, atol=1e-12)
    assert is_spd(Cr)
    np.testing.assert_allclose(np.linalg.eigvalsh(Cr), np.linalg.eigvalsh(C), rtol=1e-10)
    assert np.linalg.norm(Cr) == pytest.approx(np.linalg.norm(C), rel=1e-10)


def test_rotate_vec_identity_and_hydrostatic(rng):
    v = rng.normal(size=6)
    np.testing.assert_array_equal(rotate_vec(v, 0, 0, 0), v)
    np.testing.assert_allclose(rotate_vec(HYDROSTATIC, *rng.uniform(-3, 3, 3)), HYDROSTATIC, atol=1e-14)


def test_rotate_vec_matches_tensor_oracle():
    v = np.array([0.3, -1.2, 0.8, 0.5, -0.4, 0.9])
    a = (0.3, -0.7, 1.1)
    Q = oracles.tait_bryan(*a)
    ref = oracles.tensor_to_vec(Q @ oracles.vec_to_tensor(v) @ Q.T)
    np.testing.assert_allclose(rotate_vec(v, *a), ref, atol=1e-14)


@given(vec6, angles)
def test_rotate_vec_round_trip_and_norm(v, a):
    w = rotate_vec(v, *a)
    scale = max(1.0, np.linalg.norm(v))
    assert np.linalg.norm(w) == pytest.approx(np.linalg.norm(v), rel=1e-12, abs=1e-12 * scale)
    np.testing.assert_allclose(rotate_vec(w, *a, inverse=True), v, atol=1e-12 * scale)


def test_display_angle():
    assert display_angle(-np.pi / 2) == pytest.approx(1.5 * np.pi)
    assert display_angle(7.0) == pytest.approx(7.0 - 2 * np.pi)
