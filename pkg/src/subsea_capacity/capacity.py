"""Channel SNR, capacity objective and its analytical gradient.

Conventions: ``P_n`` is the signal power at the amplifier input (W), the
launched power is ``A(lambda_n) P_n``, and every amplifier is loaded as the
last one of the chain (signal plus the ASE accumulated over ``M - 1`` spans).
The decision vector used by the optimiser is ``[P_1 .. P_N (dBm), L_EDF (m)]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.constants import c as C_LIGHT

from .edf import EdfSpec, NumericalError, ase_accumulated, noise_figure, photon_energy, solve_output_flux
from .gn import FiberSpec, NonlinearTensor, nonlinear_noise, nonlinear_noise_gradient

DB = 10.0 / np.log(10.0)
POWER_FLOOR_DBM = -126.0
EDF_LENGTH_BOUNDS = (0.0, 20.0)


def dbm_to_w(p_dbm):
    return 1e-3 * 10 ** (np.asarray(p_dbm, dtype=float) / 10)


def w_to_dbm(p_w, floor=POWER_FLOOR_DBM):
    p = np.asarray(p_w, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10 * np.log10(p / 1e-3)
    return np.maximum(out, floor)


@dataclass(frozen=True)
class FeedSpec:
    """Shore power feed and its conversion to optical pump power."""

    voltage_v: float = 12e3
    resistance_ohm_per_km: float = 1.0
    efficiency: float = 0.4
    overhead_w: float = 0.1
    spatial_dims: int = 1

    def __post_init__(self):
        if self.voltage_v <= 0 or self.resistance_ohm_per_km <= 0 or self.efficiency <= 0:
            raise ValueError("voltage, resistance and efficiency must be > 0")
        if self.overhead_w < 0:
            raise ValueError("overhead_w must be >= 0")
        if self.spatial_dims < 1:
            raise ValueError("spatial_dims must be >= 1")


def pump_power_from_budget(feed: FeedSpec, length_km: float, spans: int, spatial_dims: int | None = None) -> float:
    """Optical pump power per amplifier allowed by the feed (W).

    The electrical budget ``V^2 / (4 L rho)`` is shared by ``2 S M``
    amplifiers, each converting ``eta (P - P_o)`` into pump light.
    """
    s = feed.spatial_dims if spatial_dims is None else spatial_dims
    if length_km <= 0 or spans < 1 or s < 1:
        raise ValueError("length_km > 0, spans >= 1 and spatial_dims >= 1 are required")
    total = feed.voltage_v**2 / (4 * length_km * feed.resistance_ohm_per_km)
    return max(0.0, feed.efficiency * (total / (2 * s * spans) - feed.overhead_w))


def channel_grid(first_wavelength: float, delta_f: float, n_channels: int) -> np.ndarray:
    """Wavelengths (m) of a grid uniform in frequency, ascending in wavelength."""
    f = C_LIGHT / first_wavelength - delta_f * np.arange(n_channels)
    if np.any(f <= 0):
        raise ValueError("channel grid extends to non-positive frequency")
    return C_LIGHT / f


@dataclass(frozen=True)
class LinkSpec:
    """Repeatered link: transmission fibre, amplifier fibre, channel grid."""

    fiber: FiberSpec
    edf: EdfSpec
    pump_wavelength: float = 980e-9
    total_length_km: float = 14350.0
    n_channels: int = 150
    delta_f: float = 50e9
    first_wavelength: float = 1522e-9
    n_sp: float = 1.4
    coding_gap: float = 10 ** (-0.1)
    sigmoid_sharpness: float = 2.0
    feed: FeedSpec = field(default_factory=FeedSpec)

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if self.delta_f <= 0:
            raise ValueError("delta_f must be > 0")
        if not 0 < self.coding_gap <= 1:
            raise ValueError("coding_gap must lie in (0, 1]")
        if self.sigmoid_sharpness <= 0:
            raise ValueError("sigmoid_sharpness must be > 0")
        if self.n_sp < 1:
            raise ValueError("n_sp must be >= 1")
        m = self.total_length_km / self.fiber.span_length_km
        if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 1:
            raise ValueError(
                f"total_length_km={self.total_length_km} is not a whole number of "
                f"{self.fiber.span_length_km} km spans"
            )

    @property
    def spans(self) -> int:
        return int(round(self.total_length_km / self.fiber.span_length_km))

    @cached_property
    def wavelengths(self) -> np.ndarray:
        return channel_grid(self.first_wavelength, self.delta_f, self.n_channels)

    @cached_property
    def photon_energy(self) -> np.ndarray:
        return photon_energy(self.wavelengths)

    @cached_property
    def attenuation_db(self) -> np.ndarray:
        return np.full(self.n_channels, self.fiber.span_attenuation_db)

    @cached_property
    def attenuation(self) -> np.ndarray:
        return 10 ** (self.attenuation_db / 10)

    @cached_property
    def noise_figure(self) -> np.ndarray:
        return noise_figure(self.n_sp, self.attenuation_db)

    @cached_property
    def ase_power(self) -> np.ndarray:
        """ASE in ``delta_f`` at the receiver, after ``M`` amplifiers (W)."""
        return ase_accumulated(self.n_sp, self.attenuation_db, self.spans, self.wavelengths, self.delta_f)

    @cached_property
    def ase_loading(self) -> np.ndarray:
        """ASE entering the last amplifier, added to the signal (W)."""
        return ase_accumulated(self.n_sp, self.attenuation_db, self.spans - 1, self.wavelengths, self.delta_f)

    @cached_property
    def _edf_coefficients(self):
        a_s, g_s, _ = self.edf.coefficients(self.wavelengths)
        alpha = np.concatenate([[self.edf.pump_absorption], a_s])
        ag = np.concatenate([[self.edf.pump_absorption + self.edf.pump_gain], a_s + g_s])
        hnu = np.concatenate([[float(photon_energy(self.pump_wavelength))], self.photon_energy])
        return alpha, ag, hnu

    def power_bound(self, pump_power: float, expected_channels: float) -> np.ndarray:
        """Largest per-channel amplifier input power allowed by energy
        conservation, ``lambda_p P_p / (N_bar lambda_n A)`` (W)."""
        if pump_power <= 0 or expected_channels <= 0:
            raise ValueError("pump_power and expected_channels must be > 0")
        return self.pump_wavelength * pump_power / (expected_channels * self.wavelengths * self.attenuation)


@dataclass(frozen=True)
class PowerAllocation:
    """Per-channel amplifier-input powers (dBm) and EDF length (m)."""

    powers_dbm: np.ndarray
    edf_length: float

    def __post_init__(self):
        p = np.asarray(self.powers_dbm, dtype=float).copy()
        if p.ndim != 1 or not np.all(np.isfinite(p)):
            raise ValueError("powers_dbm must be a finite 1-D array")
        lo, hi = EDF_LENGTH_BOUNDS
        if not lo <= self.edf_length <= hi:
            raise ValueError(f"edf_length must lie in [{lo}, {hi}] m")
        p.setflags(write=False)
        object.__setattr__(self, "powers_dbm", p)
        object.__setattr__(self, "edf_length", float(self.edf_length))

    @property
    def watts(self) -> np.ndarray:
        return dbm_to_w(self.powers_dbm)

    @classmethod
    def from_watts(cls, powers_w, edf_length):
        return cls(w_to_dbm(powers_w), edf_length)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.powers_dbm, [self.edf_length]])

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[:-1], x[-1])


@dataclass
class CapacityReport:
    """Per-channel link budget and total capacities (bit/s)."""

    wavelengths: np.ndarray
    power: np.ndarray
    gain: np.ndarray
    gain_db: np.ndarray
    ase: np.ndarray
    nl: np.ndarray
    snr: np.ndarray
    se: np.ndarray
    used: np.ndarray
    attenuation_db: np.ndarray
    smoothed_capacity: float
    hard_capacity: float

    @property
    def gain_margin_db(self):
        return self.gain_db - self.attenuation_db

    def ase_to_nl_db(self) -> float:
        """Band-average ASE over band-average NL power on used channels, dB."""
        if not self.used.any():
            return float("nan")
        nl = self.nl[self.used].mean()
        if nl == 0:
            return float("inf")
        return float(10 * np.log10(self.ase[self.used].mean() / nl))

    def used_band(self):
        """(first, last) used wavelength in m, or None."""
        if not self.used.any():
            return None
        w = self.wavelengths[self.used]
        return float(w.min()), float(w.max())


def sigmoid(x, sharpness):
    """Smooth indicator ``0.5 (tanh(D x) + 1)``."""
    return 0.5 * (np.tanh(sharpness * np.asarray(x, dtype=float)) + 1.0)


def sigmoid_derivative(x, sharpness):
    t = np.tanh(sharpness * np.asarray(x, dtype=float))
    return 0.5 * sharpness * (1.0 - t * t)


def channel_snr(power, ase, nl, gain_db, attenuation_db):
    """SNR per channel, zero where the gain does not exceed the attenuation."""
    p = np.asarray(power, dtype=float)
    den = np.asarray(ase, dtype=float) + np.asarray(nl, dtype=float)
    if np.any(p < 0) or np.any(den < 0):
        raise ValueError("powers must be >= 0")
    used = np.asarray(gain_db) > np.asarray(attenuation_db)
    if np.any(used & (den == 0) & (p > 0)):
        raise ValueError("zero noise power with non-zero signal")
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(den > 0, p / np.where(den > 0, den, 1.0), 0.0)
    return np.where(used, snr, 0.0)


@dataclass
class _State:
    power: np.ndarray
    q: np.ndarray  # input fluxes / zeta, pump first
    alpha: np.ndarray
    ag: np.ndarray
    hnu: np.ndarray
    x: float
    gains_all: np.ndarray
    nl: np.ndarray
    den: np.ndarray
    snr: np.ndarray
    margin: np.ndarray


def _evaluate(alloc: PowerAllocation, link: LinkSpec, tensor: NonlinearTensor | None, pump_power: float) -> _State:
    if pump_power < 0:
        raise ValueError("pump_power must be >= 0")
    n = link.n_channels
    if alloc.powers_dbm.size != n:
        raise ValueError(f"allocation has {alloc.powers_dbm.size} channels, link has {n}")
    if tensor is not None and tensor.n_channels != n:
        raise ValueError("tensor channel count does not match the link")
    if tensor is not None and tensor.spans != link.spans:
        raise ValueError("tensor span count does not match the link")
    p = alloc.watts
    alpha, ag, hnu = link._edf_coefficients
    zeta = link.edf.zeta
    p_in = np.concatenate([[pump_power], p + link.ase_loading])  # last-amplifier loading
    q = p_in / hnu / zeta
    length = alloc.edf_length
    x = solve_output_flux(q * zeta, alpha, ag, zeta, length)
    expo = ag * x - alpha * length
    if not np.all(np.isfinite(expo)):
        raise NumericalError("non-finite gain exponent")
    g_all = np.exp(expo)
    if tensor is None:
        nl = np.zeros(n)
    else:
        nl = nonlinear_noise(tensor, p, link.attenuation)
    den = link.ase_power + nl
    snr = p / den
    margin = DB * expo[1:] - link.attenuation_db
    return _State(p, q, alpha, ag, hnu, x, g_all, nl, den, snr, margin)


def smoothed_capacity(
    alloc: PowerAllocation, link: LinkSpec, tensor: NonlinearTensor | None, pump_power: float
) -> CapacityReport:
    """Capacity report with both the sigmoid-smoothed and the hard total.

    ``tensor=None`` disables nonlinear noise (ASE-limited link).
    """
    st = _evaluate(alloc, link, tensor, pump_power)
    gam = link.coding_gap
    log_term = np.log2(1.0 + gam * st.snr)
    s = sigmoid(st.margin, link.sigmoid_sharpness)
    used = st.margin > 0
    se = np.where(used, 2.0 * log_term, 0.0)
    gains = st.gains_all[1:]
    rep = CapacityReport(
        wavelengths=link.wavelengths,
        power=st.power,
        gain=gains,
        gain_db=DB * np.log(gains),
        ase=link.ase_power,
        nl=st.nl,
        snr=st.snr,
        se=se,
        used=used,
        attenuation_db=link.attenuation_db,
        smoothed_capacity=float(2.0 * link.delta_f * np.sum(s * log_term)),
        hard_capacity=float(link.delta_f * np.sum(se)),
    )
    return rep


def smoothed_objective(x, link, tensor, pump_power) -> float:
    """Smoothed capacity (bit/s) at decision vector ``x``."""
    return smoothed_capacity(PowerAllocation.from_vector(x), link, tensor, pump_power).smoothed_capacity


def capacity_gradient(
    alloc: PowerAllocation, link: LinkSpec, tensor: NonlinearTensor | None, pump_power: float
) -> np.ndarray:
    """Gradient of the smoothed capacity (bit/s) with respect to
    ``[P_1 .. P_N (dBm), L_EDF (m)]``."""
    st = _evaluate(alloc, link, tensor, pump_power)
    gam = link.coding_gap
    dsig = link.sigmoid_sharpness
    s = sigmoid(st.margin, dsig)
    ds = sigmoid_derivative(st.margin, dsig)
    ln_term = np.log1p(gam * st.snr)
    zeta = link.edf.zeta
    g_all = st.gains_all
    sat = 1.0 + float(np.dot(st.q * st.ag, g_all))
    absorbed = float(np.dot(st.q * st.alpha, g_all))
    ag_s = st.ag[1:]
    hnu_s = st.hnu[1:]
    gs = g_all[1:]

    # d(gain dB)_k / dP_m = DB * ag_k * (1 - G_m) / ((1 + S) hnu_m zeta)
    u = ds * ln_term * DB * ag_s
    grad_gain = u.sum() * (1.0 - gs) / (sat * hnu_s * zeta)

    # SNR terms
    w = s * gam / (1.0 + gam * st.snr)
    grad_snr = w / st.den
    if tensor is not None:
        jac = nonlinear_noise_gradient(tensor, st.power, link.attenuation)
        grad_snr -= (w * st.power / st.den**2) @ jac

    dp = (2.0 * link.delta_f / np.log(2.0)) * (grad_gain + grad_snr)
    dp_dbm = dp * st.power * np.log(10.0) / 10.0

    # EDF length: d(gain dB)_k / dL = DB * (ag_k T / (1 + S) - alpha_k)
    dgdl = DB * (ag_s * absorbed / sat - st.alpha[1:])
    dl = (2.0 * link.delta_f / np.log(2.0)) * float(np.sum(ds * ln_term * dgdl))
    return np.concatenate([dp_dbm, [dl]])


def symmetric_fd_hessian(gradient, x, steps, lower=None, upper=None):
    """Finite-difference Hessian of ``gradient`` at ``x``.

    Central differences are used except where the stencil would leave
    ``[lower, upper]``; those columns use a one-sided difference. Returns the
    symmetrised matrix and ``max|H - H^T|`` before symmetrising.
    """
    x = np.asarray(x, dtype=float)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), x.shape)
    if np.any(steps <= 0):
        raise ValueError("finite-difference steps must be > 0")
    lo = np.full(x.shape, -np.inf) if lower is None else np.broadcast_to(lower, x.shape)
    hi = np.full(x.shape, np.inf) if upper is None else np.broadcast_to(upper, x.shape)
    n = x.size
    h = np.empty((n, n))
    g0 = None
    for j in range(n):
        e = np.zeros(n)
        e[j] = steps[j]
        if x[j] - steps[j] < lo[j] or x[j] + steps[j] > hi[j]:
            if g0 is None:
                g0 = np.asarray(gradient(x))
            sgn = 1.0 if x[j] + steps[j] <= hi[j] else -1.0
            h[:, j] = sgn * (np.asarray(gradient(x + sgn * e)) - g0) / steps[j]
        else:
            h[:, j] = (np.asarray(gradient(x + e)) - np.asarray(gradient(x - e))) / (2 * steps[j])
    asym = float(np.max(np.abs(h - h.T))) if n else 0.0
    return 0.5 * (h + h.T), asym


def hessian_via_gradient_fd(
    alloc: PowerAllocation,
    link: LinkSpec,
    tensor: NonlinearTensor | None,
    pump_power: float,
    h: float = 1e-3,
    return_asymmetry: bool = False,
):
    """Hessian of the smoothed capacity by finite differences of the
    analytical gradient; ``h`` applies in dBm to powers and in m to length."""

    def grad(x):
        return capacity_gradient(PowerAllocation.from_vector(x), link, tensor, pump_power)

    x0 = alloc.to_vector()
    lower = np.full(x0.size, -np.inf)
    upper = np.full(x0.size, np.inf)
    lower[-1], upper[-1] = EDF_LENGTH_BOUNDS
    hess, asym = symmetric_fd_hessian(grad, x0, h, lower, upper)
    return (hess, asym) if return_asymmetry else hess
