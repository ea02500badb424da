"""Span-by-span propagation of signal and ASE through the amplified chain.

Each span is: amplifier (exact confined-doping model or the semi-analytical
gain), a gain-flattening filter ``F = min(1, A / G)``, and the span loss
``A``. Powers are recorded at amplifier inputs, the reference point of the
capacity model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .capacity import DB, POWER_FLOOR_DBM, CapacityReport, LinkSpec, PowerAllocation
from .edf import ASE_FORWARD, PUMP, SIGNAL, BeamSet, semi_analytical_gain, solve_scd_exact

log = logging.getLogger(__name__)

EXACT, SEMI = "exact", "semi"


@dataclass
class ChainState:
    """Per-span records, rows indexed by ``spans`` (1-based amplifier index).

    ``signal`` and ``ase`` are W per channel at the input of the next
    amplifier; ``gain_db`` and ``gff_db`` belong to the recorded amplifier.
    """

    spans: np.ndarray
    wavelengths: np.ndarray
    signal: np.ndarray
    ase: np.ndarray
    gain_db: np.ndarray
    gff_db: np.ndarray
    end_signal: np.ndarray
    end_ase: np.ndarray

    def rows(self):
        """Flat records (span, wavelength nm, signal dBm, ASE dBm, gain dB, GFF dB)."""
        out = []
        for i, s in enumerate(self.spans):
            sig = 10 * np.log10(np.maximum(self.signal[i], 1e-300) / 1e-3)
            ase = 10 * np.log10(np.maximum(self.ase[i], 1e-300) / 1e-3)
            for j, wl in enumerate(self.wavelengths):
                out.append((int(s), wl * 1e9, sig[j], ase[j], self.gain_db[i, j], self.gff_db[i, j]))
        return out


def _amplify(link: LinkSpec, edf, pump_power, signal, ase, model, tol):
    wl = link.wavelengths
    if callable(model):
        return model(pump_power, signal, ase)
    if model == EXACT:
        n = wl.size
        beams = BeamSet(
            (PUMP,) + (SIGNAL,) * n + (ASE_FORWARD,) * n,
            np.concatenate([[link.pump_wavelength], wl, wl]),
            np.concatenate([[pump_power], signal, ase]),
            np.concatenate([[0.0], np.zeros(n), np.full(n, link.delta_f)]),
        )
        res = solve_scd_exact(edf, beams, link.delta_f, tol=tol)
        return res.gains, res.forward_ase
    if model == SEMI:
        beams = BeamSet.forward_pumped(link.pump_wavelength, pump_power, wl, signal + ase)
        g = semi_analytical_gain(edf, beams)[1:]
        return g, (ase + link.noise_figure * link.photon_energy * link.delta_f) * g
    raise ValueError(f"unknown amplifier model {model!r}")


def _run_chain(alloc, link, pumps, record, model, tol, gff=None):
    m = link.spans
    edf = link.edf.with_length(alloc.edf_length)
    att = link.attenuation
    sig = alloc.watts.copy()
    ase = np.zeros_like(sig)
    rec = set(int(s) for s in record)
    out = {k: [] for k in ("spans", "signal", "ase", "gain_db", "gff_db")}
    gffs = []
    for s in range(1, m + 1):
        g, ase_out = _amplify(link, edf, pumps[s - 1], sig, ase, model, tol)
        f = np.minimum(1.0, att / g) if gff is None else gff[s - 1]
        gffs.append(f)
        sig = sig * g * f / att
        ase = ase_out * f / att
        if np.any(sig < 0) or np.any(ase < 0):
            raise ArithmeticError("negative power in chain propagation")
        if s in rec:
            out["spans"].append(s)
            out["signal"].append(sig.copy())
            out["ase"].append(ase.copy())
            out["gain_db"].append(DB * np.log(g))
            out["gff_db"].append(DB * np.log(f))
    n = link.n_channels
    state = ChainState(
        np.asarray(out["spans"], dtype=int),
        link.wavelengths,
        np.asarray(out["signal"]).reshape(-1, n),
        np.asarray(out["ase"]).reshape(-1, n),
        np.asarray(out["gain_db"]).reshape(-1, n),
        np.asarray(out["gff_db"]).reshape(-1, n),
        sig,
        ase,
    )
    return state, gffs


def floor_unused(alloc: PowerAllocation, used) -> PowerAllocation:
    """Allocation with unused channels set to the power floor."""
    p = np.where(np.asarray(used, dtype=bool), alloc.powers_dbm, POWER_FLOOR_DBM)
    return PowerAllocation(p, alloc.edf_length)


def propagate_chain(
    alloc: PowerAllocation,
    link: LinkSpec,
    pump_power: float,
    spans_to_record=None,
    model: str = EXACT,
    tol: float = 1e-3,
) -> ChainState:
    """Propagate through all ``M`` spans; records the listed spans
    (default: every span).

    ``model`` is ``"exact"``, ``"semi"`` or a callable
    ``(pump_power, signal, ase) -> (gain, ase_out)`` on per-channel arrays.
    """
    record = range(1, link.spans + 1) if spans_to_record is None else spans_to_record
    pumps = np.full(link.spans, float(pump_power))
    state, _ = _run_chain(alloc, link, pumps, record, model, tol)
    return state


def crosscheck_se(chain: ChainState, approx: CapacityReport, coding_gap: float):
    """Per-channel SE (bit/s/Hz, both polarisations) from the propagated
    chain minus the model value, on the model's used channels.

    Returns ``(difference, chain_se)``; the chain SE reuses the model NL.
    """
    used = approx.used
    snr = chain.end_signal / (chain.end_ase + approx.nl)
    se_chain = np.where(used, 2.0 * np.log2(1.0 + coding_gap * snr), 0.0)
    return se_chain - approx.se, se_chain


@dataclass
class FailureReport:
    spans: np.ndarray  # failure span, failure span + 1, ...
    deviation_db: np.ndarray  # (window + 1, N) signal deviation from nominal
    end_ase_increase_db: np.ndarray
    recovered_after: int | None  # spans after the failure until |dev| < threshold


def simulate_pump_failure(
    alloc: PowerAllocation,
    link: LinkSpec,
    pump_nominal: float,
    pump_failed: float,
    failure_span: int,
    window: int = 5,
    model: str = EXACT,
    used=None,
    threshold_db: float = 0.1,
    tol: float = 1e-4,
) -> FailureReport:
    """One amplifier at ``pump_failed``, all others nominal.

    The gain-flattening filters are passive: they are set from the nominal
    chain and kept unchanged in the failed chain. Deviations are reported on
    ``used`` channels (default: all) at the input of each amplifier following
    the failed one.
    """
    if not 0 <= pump_failed <= pump_nominal:
        raise ValueError("need 0 <= pump_failed <= pump_nominal")
    m = link.spans
    if not 1 <= failure_span <= m:
        raise ValueError(f"failure_span must lie in [1, {m}]")
    record = range(failure_span, min(m, failure_span + window) + 1)
    pumps = np.full(m, float(pump_nominal))
    nominal, gff = _run_chain(alloc, link, pumps, record, model, tol)
    pumps[failure_span - 1] = pump_failed
    failed, _ = _run_chain(alloc, link, pumps, record, model, tol, gff=gff)
    sel = np.ones(link.n_channels, bool) if used is None else np.asarray(used, bool)
    dev = DB * np.log(failed.signal / nominal.signal)[:, sel]
    ase_inc = DB * np.log(failed.end_ase / nominal.end_ase)[sel]
    # first record from which every later record stays below threshold
    bad = np.max(np.abs(dev), axis=1) >= threshold_db
    recovered = None
    for i in range(len(bad)):
        if not bad[i:].any():
            recovered = i
            break
    return FailureReport(nominal.spans, dev, ase_inc, recovered)
