import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from subsea_capacity.capacity import dbm_to_w
from subsea_capacity.edf import (
    ASE_FORWARD,
    PUMP,
    SIGNAL,
    BeamSet,
    EdfSpec,
    SolverError,
    ase_accumulated,
    effective_amplifier_input,
    load_edf_table,
    noise_figure,
    photon_energy,
    saturation_parameter,
    semi_analytical_gain,
    solve_output_flux,
    solve_scd_exact,
)

from .conftest import ER_DENSITY, ER_RADIUS, LIFETIME, make_edf

SIG_WL = np.linspace(1530e-9, 1562e-9, 9)


def no_ase_reference(edf, pump_w, sig_wl, sig_p):
    """Direct integration of the two-level model without ASE."""
    a_s, g_s, _ = edf.coefficients(sig_wl)
    a = np.concatenate([[edf.pump_absorption], a_s])
    ag = np.concatenate([[edf.pump_absorption + edf.pump_gain], a_s + g_s])
    hnu = photon_energy(np.concatenate([[edf.pump_wavelength], sig_wl]))
    zeta = np.pi * edf.er_radius**2 * edf.er_density / edf.lifetime

    def rhs(z, p):
        n2 = np.sum(a * p / hnu) / zeta / (1 + np.sum(ag * p / hnu) / zeta)
        return (ag * n2 - a) * p

    p0 = np.concatenate([[pump_w], sig_p])
    sol = solve_ivp(rhs, (0, edf.length), p0, rtol=1e-11, atol=1e-30, method="DOP853")
    return sol.y[:, -1] / p0


def test_saturation_parameter_value():
    # pi r^2 n_t / tau for the fixture fibre
    assert saturation_parameter(ER_RADIUS, ER_DENSITY, LIFETIME) == pytest.approx(3.296549826272517e15, rel=1e-12)


@pytest.mark.parametrize("args", [(0, 1e24, 1e-2), (1e-6, -1, 1e-2), (1e-6, 1e24, 0)])
def test_saturation_parameter_rejects_nonpositive(args):
    with pytest.raises(ValueError):
        saturation_parameter(*args)


def test_photon_energy_1550():
    assert float(photon_energy(1550e-9)) == pytest.approx(1.2815753e-19, rel=1e-7)


def test_load_table_converts_db_to_neper(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# comment\nwavelength_nm,absorption_dB_per_m,gain_dB_per_m\n1530,10,4.342944819\n1540,5,0\n")
    wl, a, g = load_edf_table(p)
    np.testing.assert_allclose(wl, [1530e-9, 1540e-9])
    np.testing.assert_allclose(a, [10 * np.log(10) / 10, 5 * np.log(10) / 10])
    assert g[0] == pytest.approx(1.0, rel=1e-9)


def test_load_table_requires_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("lambda,a,g\n1530,1,1\n")
    with pytest.raises(ValueError, match="header"):
        load_edf_table(p)


def test_coefficients_refuse_extrapolation(edf):
    with pytest.raises(ValueError, match="outside"):
        edf.coefficients([1400e-9])


def test_edfspec_validation(edf):
    with pytest.raises(ValueError):
        EdfSpec(edf.wavelength_grid[::-1], edf.absorption, edf.gain, ER_RADIUS, ER_DENSITY, LIFETIME, 980e-9, 0.96)
    with pytest.raises(ValueError):
        edf.with_length(-1.0)


def test_fixture_bandwidth_matches_reference_fibre(edf):
    # absorption peak near 1530 nm, gain peak at longer wavelength
    a, g, _ = edf.coefficients(edf.wavelength_grid)
    assert 1527e-9 < edf.wavelength_grid[np.argmax(a)] < 1533e-9
    assert edf.wavelength_grid[np.argmax(g)] > edf.wavelength_grid[np.argmax(a)]


class TestSemiAnalytical:
    def test_matches_direct_integration_without_ase(self, edf):
        p = np.full(SIG_WL.size, dbm_to_w(-12.0))
        g = semi_analytical_gain(edf, BeamSet.forward_pumped(980e-9, 0.06, SIG_WL, p))
        ref = no_ase_reference(edf, 0.06, SIG_WL, p)
        np.testing.assert_allclose(g, ref, rtol=1e-7)

    def test_zero_length_gives_unity(self, edf):
        g = semi_analytical_gain(edf.with_length(0.0), BeamSet.forward_pumped(980e-9, 0.05, SIG_WL, 1e-4))
        np.testing.assert_array_equal(g, 1.0)

    def test_pump_only_single_beam_root(self, edf):
        beams = BeamSet.forward_pumped(980e-9, 0.04, [], [])
        g = semi_analytical_gain(edf, beams)
        zeta, a, l = edf.zeta, edf.pump_absorption, edf.length
        q = 0.04 / float(photon_energy(980e-9)) / zeta
        # q e^{a X - a L} = q - X
        x = solve_output_flux([q * zeta], np.array([a]), np.array([a]), zeta, l)
        assert q * np.exp(a * x - a * l) == pytest.approx(q - x, rel=1e-12)
        assert g[0] == pytest.approx(np.exp(a * x - a * l), rel=1e-12)

    def test_root_residual(self, edf):
        wl = np.concatenate([[980e-9], SIG_WL])
        a_s, g_s, _ = edf.coefficients(SIG_WL)
        a = np.concatenate([[edf.pump_absorption], a_s])
        ag = np.concatenate([[edf.pump_absorption], a_s + g_s])
        q_in = np.concatenate([[0.08], np.full(SIG_WL.size, 2e-4)]) / photon_energy(wl)
        x = solve_output_flux(q_in, a, ag, edf.zeta, edf.length)
        q_out = np.sum(q_in * np.exp(ag * x - a * edf.length))
        assert abs(q_out - (q_in.sum() - x * edf.zeta)) / q_in.sum() < 1e-12

    def test_small_signal_bound(self, edf):
        p = np.full(SIG_WL.size, 1e-4)
        g = semi_analytical_gain(edf, BeamSet.forward_pumped(980e-9, 0.06, SIG_WL, p))
        a_s, g_s, _ = edf.coefficients(SIG_WL)
        q_in = (0.06 / photon_energy(980e-9) + np.sum(p / photon_energy(SIG_WL))) / edf.zeta
        bound = np.exp((a_s + g_s) * q_in - a_s * edf.length)
        assert np.all(g[1:] <= bound)

    def test_energy_conservation(self, edf):
        p = np.full(SIG_WL.size, 1e-4)
        beams = BeamSet.forward_pumped(980e-9, 0.06, SIG_WL, p)
        g = semi_analytical_gain(edf, beams)
        flux_in = beams.boundary_power / photon_energy(beams.wavelength)
        assert np.sum(flux_in * g) <= np.sum(flux_in)

    @settings(max_examples=25, deadline=None)
    @given(
        k=st.integers(min_value=0, max_value=SIG_WL.size - 1),
        base_dbm=st.floats(min_value=-30, max_value=-5),
        boost_db=st.floats(min_value=0.1, max_value=15),
    )
    def test_gain_compression_monotone(self, k, base_dbm, boost_db):
        edf = make_edf()
        p = np.full(SIG_WL.size, dbm_to_w(base_dbm))
        g0 = semi_analytical_gain(edf, BeamSet.forward_pumped(980e-9, 0.05, SIG_WL, p))
        p[k] *= 10 ** (boost_db / 10)
        g1 = semi_analytical_gain(edf, BeamSet.forward_pumped(980e-9, 0.05, SIG_WL, p))
        assert np.all(g1 <= g0 * (1 + 1e-12))

    def test_bracket_failure_raises(self):
        with pytest.raises(SolverError):
            # negative flux breaks the sign change on [0, Q_in]
            solve_output_flux(np.array([-1e18, 1e17]), np.ones(2), np.ones(2), 1e15, 5.0)


class TestExact:
    def test_no_ase_limit_matches_semi_analytical(self, edf):
        p = np.full(SIG_WL.size, dbm_to_w(-5.0))
        beams = BeamSet.forward_pumped(980e-9, 0.06, SIG_WL, p)
        semi = semi_analytical_gain(edf, beams)
        # ASE generation vanishes as the bin width goes to zero
        ex = solve_scd_exact(edf, beams, delta_f=1e-3, tol=1e-6, rtol=1e-10)
        np.testing.assert_allclose(ex.gains, semi[1:], rtol=1e-6)
        assert ex.pump_gain == pytest.approx(semi[0], rel=1e-6)

    def test_inversion_bounds_and_nonnegative_ase(self, edf):
        ex = solve_scd_exact(edf, BeamSet.forward_pumped(980e-9, 0.1, SIG_WL, 1e-6), 50e9)
        n2 = ex.profile.normalized_inversion
        assert np.all((n2 >= 0) & (n2 <= 1))
        assert np.all(ex.forward_ase >= 0) and np.all(ex.backward_ase >= 0)
        assert ex.residual_db < 1e-3

    def test_zero_length(self, edf):
        ex = solve_scd_exact(edf.with_length(0.0), BeamSet.forward_pumped(980e-9, 0.1, SIG_WL, 1e-5), 50e9)
        np.testing.assert_array_equal(ex.gains, 1.0)

    def test_incoming_ase_is_amplified(self, edf):
        n = SIG_WL.size
        p = np.full(n, dbm_to_w(-15.0))
        ase_in = np.full(n, 1e-7)
        beams = BeamSet(
            (PUMP,) + (SIGNAL,) * n + (ASE_FORWARD,) * n,
            np.concatenate([[980e-9], SIG_WL, SIG_WL]),
            np.concatenate([[0.06], p, ase_in]),
            np.concatenate([[0.0], np.zeros(n), np.full(n, 50e9)]),
        )
        ex = solve_scd_exact(edf, beams, 50e9)
        fresh = solve_scd_exact(edf, BeamSet.forward_pumped(980e-9, 0.06, SIG_WL, p), 50e9)
        # output ASE exceeds the amplified input ASE alone
        assert np.all(ex.forward_ase > ase_in * ex.gains)
        # the extra 1e-7 W per channel saturates the gain slightly
        assert np.all(ex.gains < fresh.gains)

    def test_rejects_mismatched_ase_beams(self, edf):
        beams = BeamSet((PUMP, SIGNAL, ASE_FORWARD), [980e-9, 1550e-9, 1540e-9], [0.05, 1e-4, 1e-7], [0, 0, 5e10])
        with pytest.raises(ValueError, match="forward-ase"):
            solve_scd_exact(edf, beams, 50e9)


class TestNoiseBookkeeping:
    def test_noise_figure_value(self):
        # 2 * 1.4 * (1 - 10^-0.975)
        assert float(noise_figure(1.4, 9.75)) == pytest.approx(2.503408956950359, rel=1e-12)

    def test_ase_after_full_chain(self):
        p = float(ase_accumulated(1.4, 9.75, 287, 1550e-9, 50e9))
        assert p == pytest.approx(4.603930267156071e-06, rel=1e-9)
        assert 10 * np.log10(p / 1e-3) == pytest.approx(-23.37, abs=0.01)

    def test_no_amplifiers_no_ase(self):
        assert float(ase_accumulated(1.4, 9.75, 0, 1550e-9, 50e9)) == 0.0

    def test_effective_input(self):
        nf = noise_figure(1.4, 9.75)
        p = dbm_to_w(-16.7)
        extra = float(effective_amplifier_input(p, 287, nf, 1550e-9, 33e9)) - p
        assert extra == pytest.approx(3.0280065408654352e-06, rel=1e-9)
        assert float(effective_amplifier_input(p, 1, nf, 1550e-9, 33e9)) == p

    @pytest.mark.parametrize("args", [(1.4, 9.75, -1, 1550e-9, 5e10), (0.5, 9.75, 3, 1550e-9, 5e10),
                                      (1.4, 9.75, 3, 1550e-9, 0.0)])
    def test_domain_checks(self, args):
        with pytest.raises(ValueError):
            ase_accumulated(*args)
