import numpy as np
import pytest

from subsea_capacity.capacity import LinkSpec, PowerAllocation, smoothed_capacity, w_to_dbm
from subsea_capacity.chain import (
    EXACT,
    SEMI,
    crosscheck_se,
    floor_unused,
    propagate_chain,
    simulate_pump_failure,
)

PUMP = 0.06


@pytest.fixture(scope="module")
def short_link(fiber, edf):
    """Ten channels over ten spans."""
    return LinkSpec(fiber, edf, total_length_km=500.0, n_channels=10, first_wavelength=1545e-9)


@pytest.fixture(scope="module")
def alloc(short_link):
    # 1 dB under the energy bound, with a fibre long enough for net gain
    return PowerAllocation(w_to_dbm(short_link.power_bound(PUMP, 10)) - 1.0, 7.0)


def test_transparent_amplifier_round_trip(short_link, alloc):
    att = short_link.attenuation

    def amp(pump, sig, ase):
        return att.copy(), ase.copy()

    st = propagate_chain(alloc, short_link, PUMP, model=amp)
    np.testing.assert_allclose(st.signal, np.broadcast_to(alloc.watts, st.signal.shape), rtol=1e-14)
    assert not st.ase.any()
    np.testing.assert_allclose(st.gff_db, 0.0, atol=1e-14)
    np.testing.assert_array_equal(st.spans, np.arange(1, 11))


def test_filter_is_passive_and_flattens(short_link, alloc):
    st = propagate_chain(alloc, short_link, PUMP, model=SEMI)
    assert np.all(st.gff_db <= 0)
    assert np.all(st.gain_db > short_link.attenuation_db)
    # net gain is clipped to the span loss, so the signal is stationary
    np.testing.assert_allclose(st.signal[-1], alloc.watts, rtol=1e-12)


def test_semi_ase_accumulates_one_noise_figure_per_span(short_link, alloc):
    st = propagate_chain(alloc, short_link, PUMP, model=SEMI)
    assert np.all(np.diff(st.ase, axis=0) > 0)
    np.testing.assert_allclose(st.end_ase, short_link.ase_power, rtol=1e-12)


def test_exact_end_ase_near_noise_figure_estimate(short_link, alloc):
    st = propagate_chain(alloc, short_link, PUMP, spans_to_record=[5, 10], model=EXACT)
    ratio_db = 10 * np.log10(st.end_ase / short_link.ase_power)
    assert np.all(np.abs(ratio_db) < 1.0)
    assert np.all(np.diff(st.ase, axis=0) > 0)


def test_semi_and_exact_gains_agree(short_link, alloc):
    semi = propagate_chain(alloc, short_link, PUMP, spans_to_record=[1, 10], model=SEMI)
    ex = propagate_chain(alloc, short_link, PUMP, spans_to_record=[1, 10], model=EXACT)
    assert np.max(np.abs(semi.gain_db - ex.gain_db)) < 0.3


def test_recorded_spans_do_not_change_the_result(short_link, alloc):
    full = propagate_chain(alloc, short_link, PUMP, model=SEMI)
    some = propagate_chain(alloc, short_link, PUMP, spans_to_record=[3, 7], model=SEMI)
    np.testing.assert_array_equal(some.signal, full.signal[[2, 6]])
    np.testing.assert_array_equal(some.end_ase, full.end_ase)
    rows = some.rows()
    assert len(rows) == 2 * 10
    assert rows[0][0] == 3 and rows[0][1] == pytest.approx(1545.0)


def test_unknown_model(short_link, alloc):
    with pytest.raises(ValueError, match="model"):
        propagate_chain(alloc, short_link, PUMP, model="linear")


def test_floor_unused(alloc):
    used = np.arange(10) % 2 == 0
    f = floor_unused(alloc, used)
    np.testing.assert_array_equal(f.powers_dbm[used], alloc.powers_dbm[used])
    assert np.all(f.powers_dbm[~used] == -126.0)
    assert f.edf_length == alloc.edf_length


def test_crosscheck_against_semi_chain(short_link, alloc):
    rep = smoothed_capacity(alloc, short_link, None, PUMP)
    st = propagate_chain(alloc, short_link, PUMP, spans_to_record=[10], model=SEMI)
    diff, se = crosscheck_se(st, rep, short_link.coding_gap)
    # the semi chain reproduces the model's signal and ASE exactly
    np.testing.assert_allclose(diff, 0.0, atol=1e-12)
    none = rep.__class__(**{**rep.__dict__, "used": np.zeros(10, bool), "se": np.zeros(10)})
    d0, s0 = crosscheck_se(st, none, short_link.coding_gap)
    assert not s0.any() and not d0.any()


class TestPumpFailure:
    def test_no_failure_no_deviation(self, short_link, alloc):
        rep = simulate_pump_failure(alloc, short_link, PUMP, PUMP, 3, window=4, model=SEMI)
        np.testing.assert_array_equal(rep.deviation_db, 0.0)
        np.testing.assert_array_equal(rep.end_ase_increase_db, 0.0)
        assert rep.recovered_after == 0
        np.testing.assert_array_equal(rep.spans, [3, 4, 5, 6, 7])

    def test_half_pump_dips_then_recovers(self, short_link, alloc):
        rep = simulate_pump_failure(alloc, short_link, PUMP, PUMP / 2, 2, window=8, model=SEMI)
        assert np.all(rep.deviation_db[0] < 0)
        worst = np.max(np.abs(rep.deviation_db), axis=1)
        assert worst[-1] < worst[0]
        assert np.all(rep.end_ase_increase_db > 0)

    def test_window_clipped_at_chain_end(self, short_link, alloc):
        rep = simulate_pump_failure(alloc, short_link, PUMP, PUMP / 2, 9, window=5, model=SEMI)
        np.testing.assert_array_equal(rep.spans, [9, 10])

    def test_used_selection(self, short_link, alloc):
        used = np.zeros(10, bool)
        used[:4] = True
        rep = simulate_pump_failure(alloc, short_link, PUMP, PUMP / 2, 2, window=2, model=SEMI, used=used)
        assert rep.deviation_db.shape == (3, 4)

    @pytest.mark.parametrize("args", [(0.05, 0.06, 3), (0.06, -0.01, 3), (0.06, 0.03, 0), (0.06, 0.03, 11)])
    def test_validation(self, short_link, alloc, args):
        with pytest.raises(ValueError):
            simulate_pump_failure(alloc, short_link, *args, model=SEMI)
