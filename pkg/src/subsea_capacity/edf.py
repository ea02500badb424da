"""Erbium-doped fibre amplifier models.

Two models of a forward-pumped EDFA built from the same macroscopic fibre
parameters (absorption and gain coefficients and the saturation parameter):

* :func:`solve_scd_exact` integrates the two-level confined-doping rate
  equations for pump, signals and forward/backward ASE as a boundary-value
  problem, by relaxation between forward and backward sweeps;
* :func:`semi_analytical_gain` neglects ASE saturation, which collapses the
  propagation equations to one implicit equation in the total output photon
  flux.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import h as H_PLANCK
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

log = logging.getLogger(__name__)

DB_PER_NEPER = 10.0 / np.log(10.0)

PUMP, SIGNAL, ASE_FORWARD, ASE_BACKWARD = "pump", "signal", "forward-ase", "backward-ase"


class SolverError(RuntimeError):
    """An amplifier solver failed to converge or to bracket its root."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericalError(RuntimeError):
    """Non-finite or unphysical values appeared during a solve."""


def photon_energy(wavelength):
    return H_PLANCK * C_LIGHT / np.asarray(wavelength, dtype=float)


def saturation_parameter(er_radius: float, er_density: float, lifetime: float) -> float:
    """Saturation parameter ``pi r^2 n_t / tau`` in photons per second per metre."""
    if er_radius <= 0 or er_density <= 0 or lifetime <= 0:
        raise ValueError("er_radius, er_density and lifetime must all be > 0")
    return np.pi * er_radius**2 * er_density / lifetime


@dataclass(frozen=True)
class EdfSpec:
    """Macroscopic description of an erbium-doped fibre.

    Coefficients are in natural units (1/m) on ``wavelength_grid`` (m).
    """

    wavelength_grid: np.ndarray
    absorption: np.ndarray
    gain: np.ndarray
    er_radius: float
    er_density: float
    lifetime: float
    pump_wavelength: float
    pump_absorption: float
    pump_gain: float = 0.0
    length: float = 8.0
    excess_loss: np.ndarray | None = None
    pump_excess_loss: float = 0.0

    def __post_init__(self):
        wl = np.asarray(self.wavelength_grid, dtype=float)
        a = np.asarray(self.absorption, dtype=float)
        g = np.asarray(self.gain, dtype=float)
        if wl.ndim != 1 or wl.shape != a.shape or wl.shape != g.shape:
            raise ValueError("wavelength_grid, absorption and gain must be 1-D arrays of equal length")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("wavelength_grid must be strictly increasing")
        if np.any(a < 0) or np.any(g < 0):
            raise ValueError("absorption and gain coefficients must be >= 0")
        if self.length < 0:
            raise ValueError("EDF length must be >= 0")
        if self.pump_absorption < 0 or self.pump_gain < 0:
            raise ValueError("pump coefficients must be >= 0")
        loss = np.zeros_like(wl) if self.excess_loss is None else np.asarray(self.excess_loss, dtype=float)
        if loss.shape != wl.shape or np.any(loss < 0):
            raise ValueError("excess_loss must match wavelength_grid and be >= 0")
        # validates r, n_t, tau
        saturation_parameter(self.er_radius, self.er_density, self.lifetime)
        object.__setattr__(self, "wavelength_grid", wl)
        object.__setattr__(self, "absorption", a)
        object.__setattr__(self, "gain", g)
        object.__setattr__(self, "excess_loss", loss)

    @property
    def zeta(self) -> float:
        return saturation_parameter(self.er_radius, self.er_density, self.lifetime)

    def with_length(self, length: float) -> "EdfSpec":
        return replace(self, length=float(length))

    def coefficients(self, wavelengths):
        """(alpha, g*, excess loss) linearly interpolated at ``wavelengths``."""
        wl = np.atleast_1d(np.asarray(wavelengths, dtype=float))
        grid = self.wavelength_grid
        if wl.min() < grid[0] * (1 - 1e-12) or wl.max() > grid[-1] * (1 + 1e-12):
            raise ValueError(
                f"wavelengths {wl.min() * 1e9:.2f}-{wl.max() * 1e9:.2f} nm outside EDF table "
                f"{grid[0] * 1e9:.2f}-{grid[-1] * 1e9:.2f} nm"
            )
        return (
            np.interp(wl, grid, self.absorption),
            np.interp(wl, grid, self.gain),
            np.interp(wl, grid, self.excess_loss),
        )


def load_edf_table(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read ``wavelength_nm, absorption_dB_per_m, gain_dB_per_m`` columns.

    Returns wavelength (m), absorption and gain coefficients (1/m).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in fh if r.strip() and not r.lstrip().startswith("#")]
    reader = csv.DictReader(rows)
    need = {"wavelength_nm", "absorption_dB_per_m", "gain_dB_per_m"}
    if reader.fieldnames is None or not need <= {f.strip() for f in reader.fieldnames}:
        raise ValueError(f"{path}: header must contain {sorted(need)}")
    wl, a, g = [], [], []
    for rec in reader:
        rec = {k.strip(): v for k, v in rec.items()}
        wl.append(float(rec["wavelength_nm"]))
        a.append(float(rec["absorption_dB_per_m"]))
        g.append(float(rec["gain_dB_per_m"]))
    wl = np.asarray(wl) * 1e-9
    return wl, np.asarray(a) / DB_PER_NEPER, np.asarray(g) / DB_PER_NEPER


@dataclass(frozen=True)
class BeamSet:
    """Beams launched into the EDF.

    ``kind`` holds one of ``pump``, ``signal``, ``forward-ase`` or
    ``backward-ase`` per beam; ``boundary_power`` is the power at z=0 for
    forward beams and at z=L for backward beams.
    """

    kind: tuple
    wavelength: np.ndarray
    boundary_power: np.ndarray
    ase_bandwidth: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelength, dtype=float)
        p = np.asarray(self.boundary_power, dtype=float)
        bw = np.broadcast_to(np.asarray(self.ase_bandwidth, dtype=float), wl.shape).copy()
        kinds = tuple(self.kind)
        if len(kinds) != wl.size or p.shape != wl.shape:
            raise ValueError("kind, wavelength and boundary_power must have equal length")
        bad = set(kinds) - {PUMP, SIGNAL, ASE_FORWARD, ASE_BACKWARD}
        if bad:
            raise ValueError(f"unknown beam kinds {sorted(bad)}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("boundary powers must be finite and >= 0")
        object.__setattr__(self, "kind", kinds)
        object.__setattr__(self, "wavelength", wl)
        object.__setattr__(self, "boundary_power", p)
        object.__setattr__(self, "ase_bandwidth", bw)

    @property
    def direction(self) -> np.ndarray:
        return np.array([-1 if k == ASE_BACKWARD else 1 for k in self.kind])

    def mask(self, kind) -> np.ndarray:
        return np.array([k == kind for k in self.kind])

    @classmethod
    def forward_pumped(cls, pump_wavelength, pump_power, signal_wavelengths, signal_powers):
        """Pump plus signals, no ASE beams."""
        sw = np.atleast_1d(np.asarray(signal_wavelengths, dtype=float))
        sp = np.broadcast_to(np.asarray(signal_powers, dtype=float), sw.shape)
        kinds = (PUMP,) + (SIGNAL,) * sw.size
        return cls(
            kinds,
            np.concatenate([[pump_wavelength], sw]),
            np.concatenate([[pump_power], sp]),
            np.zeros(sw.size + 1),
        )


@dataclass
class InversionProfile:
    positions: np.ndarray
    normalized_inversion: np.ndarray


@dataclass
class ScdResult:
    """Solution of the confined-doping boundary-value problem."""

    gains: np.ndarray  # per signal, linear
    pump_gain: float
    forward_ase: np.ndarray  # W per signal channel at z=L
    backward_ase: np.ndarray  # W per signal channel at z=0
    profile: InversionProfile
    iterations: int
    residual_db: float


def _inversion(p_over_hnu_zeta_a, p_over_hnu_zeta_ag):
    return p_over_hnu_zeta_a / (1.0 + p_over_hnu_zeta_ag)


def solve_scd_exact(
    edf: EdfSpec,
    beams: BeamSet,
    delta_f: float,
    tol: float = 1e-3,
    rtol: float = 1e-8,
    max_iter: int = 50,
    n_profile: int = 101,
) -> ScdResult:
    """Steady state of the two-level confined-doping model.

    ``beams`` holds the pump, the signals and optionally incoming forward ASE
    (one ``forward-ase`` beam per signal, in the same order). ASE is binned on
    the signal wavelengths with bandwidth ``delta_f``; the backward ASE vanishes
    at z = L. Forward and backward sweeps alternate until the largest change of
    any signal gain falls below ``tol`` dB.
    """
    if delta_f <= 0:
        raise ValueError("delta_f must be > 0")
    kinds = np.array(beams.kind)
    sig = kinds == SIGNAL
    pump = kinds == PUMP
    if pump.sum() != 1:
        raise ValueError("exactly one pump beam is required")
    if np.any(kinds == ASE_BACKWARD):
        raise ValueError("backward ASE is generated internally; do not pass it")
    sig_wl = beams.wavelength[sig]
    n_sig = sig_wl.size
    fwd_in = np.zeros(n_sig)
    fa = kinds == ASE_FORWARD
    if fa.any():
        if fa.sum() != n_sig or not np.allclose(beams.wavelength[fa], sig_wl, rtol=1e-9, atol=0.0):
            raise ValueError("forward-ase beams must match the signal wavelengths one to one")
        fwd_in = beams.boundary_power[fa]

    a_s, g_s, l_s = edf.coefficients(sig_wl)
    a_p, g_p, l_p = edf.pump_absorption, edf.pump_gain, edf.pump_excess_loss
    zeta = edf.zeta
    hnu_s = photon_energy(sig_wl)
    hnu_p = float(photon_energy(beams.wavelength[pump][0]))
    L = edf.length

    p_pump0 = float(beams.boundary_power[pump][0])
    p_sig0 = beams.boundary_power[sig]

    if L == 0:
        prof = InversionProfile(np.zeros(1), np.zeros(1))
        return ScdResult(np.ones(n_sig), 1.0, fwd_in.copy(), np.zeros(n_sig), prof, 0, 0.0)

    # saturation weights
    wa_s = a_s / (hnu_s * zeta)
    wag_s = (a_s + g_s) / (hnu_s * zeta)
    wa_p = a_p / (hnu_p * zeta)
    wag_p = (a_p + g_p) / (hnu_p * zeta)
    spont = 2.0 * g_s * hnu_s * delta_f
    tiny = 1e-300
    ln0 = np.log(np.maximum(np.concatenate([[p_pump0], p_sig0]), tiny))

    def forward_rhs(backward):
        def rhs(z, y):
            lnp = y[: n_sig + 1]
            ase = y[n_sig + 1 :]
            pw = np.exp(lnp)
            bw = backward(z)
            num = pw[0] * wa_p + pw[1:] @ wa_s + (ase + bw) @ wa_s
            den = 1.0 + pw[0] * wag_p + pw[1:] @ wag_s + (ase + bw) @ wag_s
            n2 = num / den
            d = np.empty_like(y)
            d[0] = (a_p + g_p) * n2 - a_p - l_p
            d[1 : n_sig + 1] = (a_s + g_s) * n2 - a_s - l_s
            d[n_sig + 1 :] = ((a_s + g_s) * n2 - a_s - l_s) * ase + spont * n2
            return d

        return rhs

    def backward_rhs(forward_sol):
        def rhs(z, bw):
            y = forward_sol(z)
            pw = np.exp(y[: n_sig + 1])
            ase = y[n_sig + 1 :]
            num = pw[0] * wa_p + pw[1:] @ wa_s + (ase + bw) @ wa_s
            den = 1.0 + pw[0] * wag_p + pw[1:] @ wag_s + (ase + bw) @ wag_s
            n2 = num / den
            # u = -1
            return -(((a_s + g_s) * n2 - a_s - l_s) * bw + spont * n2)

        return rhs

    scale = max(float(np.max(spont)) * L, float(np.max(fwd_in, initial=0.0)), 1e-30)
    atol_ase = 1e-10 * scale
    atol = np.concatenate([np.full(n_sig + 1, 1e-12), np.full(n_sig, atol_ase)])

    def zero_bw(z):
        return np.zeros(n_sig)

    backward = zero_bw
    prev_gain_db = None
    residual = np.inf
    for it in range(1, max_iter + 1):
        fsol = solve_ivp(
            forward_rhs(backward), (0.0, L), np.concatenate([ln0, fwd_in]),
            method="RK45", rtol=rtol, atol=atol, dense_output=True,
        )
        if not fsol.success:
            raise SolverError(f"forward sweep failed: {fsol.message}", residual)
        yl = fsol.y[:, -1]
        if not np.all(np.isfinite(yl)):
            raise NumericalError("non-finite powers in forward sweep")
        if np.min(fsol.y[n_sig + 1 :]) < -1e3 * atol_ase:
            raise NumericalError("negative forward ASE power encountered")
        gain_db = (yl[1 : n_sig + 1] - ln0[1:]) * DB_PER_NEPER
        bsol = solve_ivp(
            backward_rhs(fsol.sol), (L, 0.0), np.zeros(n_sig),
            method="RK45", rtol=rtol, atol=atol_ase, dense_output=True,
        )
        if not bsol.success:
            raise SolverError(f"backward sweep failed: {bsol.message}", residual)
        if np.min(bsol.y) < -1e3 * atol_ase:
            raise NumericalError("negative backward ASE power encountered")
        backward = _clip_dense(bsol.sol)
        if prev_gain_db is not None:
            residual = float(np.max(np.abs(gain_db - prev_gain_db)))
            if residual < tol:
                break
        prev_gain_db = gain_db
    else:
        raise SolverError(f"SCD relaxation did not converge in {max_iter} iterations", residual)

    # final forward sweep is consistent with `backward` to within tol
    z = np.linspace(0.0, L, n_profile)
    yz = fsol.sol(z)
    bz = backward(z) if n_sig else np.zeros((0, z.size))
    pw = np.exp(yz[: n_sig + 1])
    asez = yz[n_sig + 1 :] + bz
    num = pw[0] * wa_p + wa_s @ pw[1:] + wa_s @ asez
    den = 1.0 + pw[0] * wag_p + wag_s @ pw[1:] + wag_s @ asez
    prof = InversionProfile(z, num / den)
    return ScdResult(
        gains=np.exp(yl[1 : n_sig + 1] - ln0[1:]),
        pump_gain=float(np.exp(yl[0] - ln0[0])),
        forward_ase=np.maximum(yl[n_sig + 1 :], 0.0),
        backward_ase=np.maximum(np.asarray(backward(0.0)), 0.0),
        profile=prof,
        iterations=it,
        residual_db=residual,
    )


def _clip_dense(sol):
    def f(z):
        return np.maximum(sol(z), 0.0)

    return f


def solve_output_flux(q_in, alpha, alpha_g, zeta, length):
    """Solve the implicit output-flux equation.

    Works in ``X = (Q_in - Q_out) / zeta`` (metres), for which
    ``g(X) = sum q_k exp(A_k X - alpha_k L) + X - sum q_k`` is increasing and
    convex with a root in ``[0, sum q_k]``. Returns ``X``.
    """
    q = np.asarray(q_in, dtype=float) / zeta
    total = float(q.sum())
    if not np.isfinite(total):
        raise NumericalError("non-finite input photon flux")
    if total == 0.0 or length == 0.0:
        return 0.0
    bl = alpha * length

    def g(x):
        with np.errstate(over="ignore"):  # inf is handled by the bracket search
            return float(q @ np.exp(alpha_g * x - bl)) + x - total

    g_hi = g(total)
    if not np.isfinite(g_hi):
        # huge small-signal gain: shrink the bracket from above
        hi = total
        while not np.isfinite(g_hi):
            hi *= 0.5
            g_hi = g(hi)
        if g_hi < 0:
            raise SolverError("could not bracket the output-flux root")
    else:
        hi = total
    g_lo = g(0.0)
    if g_lo > 0 or g_hi < 0:
        raise SolverError("output-flux equation has no sign change on [0, Q_in]", min(abs(g_lo), abs(g_hi)))
    if g_lo == 0.0:
        return 0.0
    x = brentq(g, 0.0, hi, xtol=1e-14 * total, rtol=1e-15, maxiter=200)
    for _ in range(2):  # Newton polish
        e = q * np.exp(alpha_g * x - bl)
        x -= (float(e.sum()) + x - total) / (1.0 + float(alpha_g @ e))
    return x


def semi_analytical_gain(edf: EdfSpec, beams: BeamSet) -> np.ndarray:
    """Gains (linear) of every beam under the ASE-free saturation model."""
    kinds = np.array(beams.kind)
    if not np.any(kinds == PUMP):
        raise ValueError("beams must include the pump")
    if np.any((kinds == ASE_FORWARD) | (kinds == ASE_BACKWARD)):
        raise ValueError("the semi-analytical model takes no ASE beams")
    wl = beams.wavelength
    is_pump = kinds == PUMP
    a = np.empty(wl.size)
    ag = np.empty(wl.size)
    a[is_pump] = edf.pump_absorption
    ag[is_pump] = edf.pump_absorption + edf.pump_gain
    if (~is_pump).any():
        a_s, g_s, _ = edf.coefficients(wl[~is_pump])
        a[~is_pump] = a_s
        ag[~is_pump] = a_s + g_s
    q = beams.boundary_power / photon_energy(wl)
    x = solve_output_flux(q, a, ag, edf.zeta, edf.length)
    expo = ag * x - a * edf.length
    if not np.all(np.isfinite(expo)):
        raise NumericalError("non-finite gain exponent")
    return np.exp(expo)


def noise_figure(n_sp, span_attenuation_db):
    """Gain-independent noise figure with ``(G-1)/G`` replaced by ``1 - 1/A``."""
    return 2.0 * np.asarray(n_sp, dtype=float) * (1.0 - 10 ** (-np.asarray(span_attenuation_db) / 10))


def ase_accumulated(n_sp, span_attenuation_db, spans, wavelength, delta_f):
    """ASE power (W) in ``delta_f`` after a chain of ``spans`` amplifiers."""
    if spans < 0:
        raise ValueError("spans must be >= 0")
    if np.any(np.asarray(n_sp) < 1):
        raise ValueError("n_sp must be >= 1")
    if delta_f <= 0:
        raise ValueError("delta_f must be > 0")
    nf = noise_figure(n_sp, span_attenuation_db)
    return spans * nf * photon_energy(wavelength) * delta_f


def effective_amplifier_input(power, spans, nf, wavelength, delta_f):
    """Signal plus the ASE accumulated before the last amplifier of the chain."""
    if spans < 1:
        raise ValueError("spans must be >= 1")
    return np.asarray(power, dtype=float) + (spans - 1) * np.asarray(nf) * photon_energy(wavelength) * delta_f
