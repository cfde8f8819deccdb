import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cavity_forge import dressed
from cavity_forge.dressed import CavityGeometry, Regime
from cavity_forge.qcore import TWO_PI_MHZ, InvalidParameterError, make_params

rates = st.floats(0.5, 50.0)


def fock_ladder(n_max):
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), 1)


def jc_full_spectrum(g, delta, n_max):
    """Two-level atom (|g>, |x>) times a truncated Fock space, brute force."""
    a = fock_ladder(n_max)
    eye_f = np.eye(n_max + 1)
    sm = np.array([[0, 1], [0, 0]])  # |g><x|
    h = delta * np.kron(sm.T @ sm, eye_f) + g * (np.kron(sm.T, a) + np.kron(sm, a.T))
    return np.linalg.eigvalsh(h)


def lambda_full_spectrum(g, omega, delta, n_max):
    """Three-level atom (|e>, |x>, |g>) times a truncated Fock space, brute force."""
    a = fock_ladder(n_max)
    eye_f = np.eye(n_max + 1)
    ket = np.eye(3)
    ex = np.outer(ket[0], ket[1])
    gx = np.outer(ket[2], ket[1])
    xx = np.outer(ket[1], ket[1])
    h = (delta * np.kron(xx, eye_f)
         - 0.5 * omega * np.kron(ex + ex.T, eye_f)
         - g * (np.kron(gx, a.T) + np.kron(gx.T, a)))
    return np.linalg.eigvalsh(h)


def test_finesse_examples():
    assert dressed.finesse(0.99999) == pytest.approx(math.pi / 1e-5, rel=1e-5)
    assert dressed.finesse(0.5) == pytest.approx(4.442882938, rel=1e-9)
    assert dressed.finesse(0.99999) > dressed.finesse(0.999989)
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(InvalidParameterError):
            dressed.finesse(bad)


def test_kappa_from_finesse_hand_formula():
    length, F = 100e-6, 3e5
    kappa = dressed.kappa_from_finesse(length, F)
    assert kappa == pytest.approx(math.pi * dressed.SPEED_OF_LIGHT / (2 * length * F), rel=1e-14)
    assert dressed.kappa_from_finesse(length, 2 * F) == pytest.approx(kappa / 2)
    assert dressed.kappa_from_finesse(2 * length, F) == pytest.approx(kappa / 2)


def test_kappa_from_geometry_uses_reflectivity():
    geom = CavityGeometry(length=100e-6, reflectivity=0.99999)
    assert dressed.kappa_from_geometry(geom) == pytest.approx(
        dressed.kappa_from_finesse(100e-6, dressed.finesse(0.99999)))
    with pytest.raises(InvalidParameterError):
        CavityGeometry(length=-1, reflectivity=0.9)


@pytest.mark.parametrize("n,factor", [(1, 2.0), (4, 4.0), (9, 6.0)])
def test_doublet_resonant_splitting(n, factor):
    p = make_params(15, 3, 3)
    d = dressed.doublet(p, n)
    assert d.splitting == pytest.approx(factor * p.g, rel=1e-14)
    assert d.omega_plus >= d.omega_minus


def test_doublet_decoupled_limit_and_n0():
    d = dressed.doublet_frequencies(0.0, 2.5e7, 3)
    assert d.splitting == pytest.approx(2.5e7)
    with pytest.raises(InvalidParameterError):
        dressed.doublet(make_params(1, 1, 1), 0)


@given(g=rates, delta=st.floats(-40, 40), n=st.integers(1, 5))
def test_doublet_matches_truncated_jc(g, delta, n):
    spec = jc_full_spectrum(g, delta, n_max=6)
    d = dressed.doublet_frequencies(g, delta, n)
    for w in (d.omega_plus, d.omega_minus):
        assert np.min(np.abs(spec - w)) < 1e-9 * max(1.0, abs(w))


@given(g=rates, om=st.floats(0, 60), delta=st.floats(-40, 40), n=st.integers(1, 4))
def test_triplet_matches_truncated_lambda_system(g, om, delta, n):
    p = make_params(g, 1, 1, delta, delta)
    t = dressed.triplet(p, n, om * TWO_PI_MHZ)
    spec = lambda_full_spectrum(p.g, om * TWO_PI_MHZ, p.delta_cav, n_max=5)
    for w in t.eigenvalues:
        assert np.min(np.abs(spec - w)) < 1e-6 * max(1.0, abs(w)) + 1e-3


@given(g=rates, om=st.floats(0, 60), delta=st.floats(-40, 40), n=st.integers(1, 6))
def test_triplet_eigenvectors_against_eigh(g, om, delta, n):
    p = make_params(g, 1, 1, delta, delta)
    t = dressed.triplet(p, n, om * TWO_PI_MHZ)
    h = dressed.triplet_hamiltonian(p.g, om * TWO_PI_MHZ, p.delta_cav, n)
    vecs = t.eigenvectors
    # each column is an eigenvector with the stated eigenvalue
    resid = h @ vecs - vecs * t.eigenvalues
    assert np.max(np.abs(resid)) < 1e-9 * max(1.0, np.max(np.abs(h)))
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(3), atol=1e-12)
    assert np.sort(t.eigenvalues) == pytest.approx(np.linalg.eigvalsh(h),
                                                   rel=1e-10, abs=1e-6 * np.max(np.abs(h)))
    # trace sum rule
    assert t.eigenvalues.sum() == pytest.approx(np.trace(h), rel=1e-10, abs=1e-4)
    assert t.dark_state[1] == 0.0
    assert t.dark_state[2] <= 0.0


def test_triplet_dark_state_limits():
    p = make_params(15, 3, 3)
    assert np.array_equal(dressed.triplet(p, 2, 0.0).dark_state, [1.0, 0.0, -0.0])
    strong = dressed.triplet(p, 1, 1e8 * p.g)
    np.testing.assert_allclose(strong.dark_state, [0, 0, -1], atol=1e-6)


@given(om=st.floats(0.1, 100), n=st.integers(1, 5))
def test_dark_state_population_ratio(om, n):
    p = make_params(15, 3, 3)
    t = dressed.triplet(p, n, om * TWO_PI_MHZ)
    ratio = t.dark_state[0] ** 2 / t.dark_state[2] ** 2
    assert ratio == pytest.approx(4 * n * p.g ** 2 / (om * TWO_PI_MHZ) ** 2, rel=1e-10)


@given(delta=st.floats(-40, 40), n=st.integers(1, 5))
def test_triplet_reduces_to_doublet(delta, n):
    p = make_params(15, 3, 3, delta, delta)
    d = dressed.doublet(p, n)
    t = dressed.triplet(p, n, 1e-9)
    assert t.omega_plus == pytest.approx(d.omega_plus, rel=1e-8, abs=1e-3)
    assert t.omega_minus == pytest.approx(d.omega_minus, rel=1e-8, abs=1e-3)


def test_triplet_requires_raman_resonance():
    with pytest.raises(InvalidParameterError):
        dressed.triplet(make_params(15, 3, 3, 1.0, 0.0), 1, 1e6)
    with pytest.raises(InvalidParameterError):
        dressed.triplet(make_params(15, 3, 3), 0, 1e6)


def test_purcell_example_values():
    p = make_params(15, 20, 3)
    f = dressed.purcell_factor_rates(p)
    assert f == pytest.approx(3.75, rel=1e-14)
    assert dressed.beta_factor(f) == pytest.approx(0.78947368, rel=1e-7)
    assert dressed.emission_limit(p) == pytest.approx(dressed.beta_factor(f), abs=1e-15)


def test_purcell_geometric_form():
    geom = CavityGeometry(length=1e-4, reflectivity=0.9999, wavelength=780e-9,
                          mode_volume=1e-13, quality_factor=1e8)
    assert dressed.purcell_factor(geom) == pytest.approx(
        3 * 1e8 * 780e-9 ** 3 / (4 * math.pi ** 2 * 1e-13))


@given(rates, rates, rates)
def test_purcell_is_twice_cooperativity(g, k, gm):
    p = make_params(g, k, gm)
    f = dressed.purcell_factor_rates(p)
    assert f == pytest.approx(2 * dressed.cooperativity(p), rel=1e-14)
    assert dressed.beta_factor(f) == pytest.approx(dressed.emission_limit(p), abs=1e-12)


def test_lossless_atom_limits():
    p = make_params(15, 2, 0)
    assert math.isinf(dressed.purcell_factor_rates(p))
    assert dressed.emission_limit(p) == 1.0


@pytest.mark.parametrize("triple,regime", [
    ((15, 2, 3), Regime.STRONG_COUPLING),
    ((15, 20, 3), Regime.BAD_CAVITY),
    ((5, 5, 5), Regime.NEITHER),
    ((5, 50, 0.3), Regime.BAD_CAVITY),
    ((100, 2, 1), Regime.STRONG_COUPLING),
])
def test_classify_regime(triple, regime):
    assert dressed.classify_regime(make_params(*triple)) is regime
