"""Gaussian-noise model of Kerr nonlinear interference.

The single-span coefficients are triple integrals over the unit cube of a
Lorentzian-like kernel ``rho`` that, for dispersive fibre, concentrates on a
narrow ridge along the XPM axes and carries a fast oscillating numerator.
Plain tensor-product quadrature does not resolve either feature, so the
integral is reorganised:

* change variables to ``u = x + di - z`` and ``c = y + dj - z``; the kernel
  depends only on the product ``u * c`` and the remaining ``z`` integral is a
  piecewise-linear (trapezoidal) weight ``m(u, c)``;
* integrate over ``u`` in closed form (arctan, log and complex exponential
  integrals);
* integrate over ``c`` with composite Gauss-Legendre on panels split at every
  kink of ``m`` and geometrically graded towards the ridge and towards the
  points where a trapezoid corner crosses ``u = 0``.

At ``beta2 = 0`` the kernel is constant and the scheme is exact.
"""
from __future__ import annotations

import hashlib
import json
import logging
from functools import lru_cache
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.constants import c as C_LIGHT
from scipy.special import exp1, expi

log = logging.getLogger(__name__)

DB = 10.0 / np.log(10.0)
TENSOR_FORMAT_VERSION = 1

# series branch of the antiderivatives below this |t|
_T_SERIES = 0.1
_N_SERIES = 12
# trapezoid weights with |index| above this are integrated without
# resolving the numerator oscillation (its share falls below ~1e-4)
_OSC_RESOLVE_MAX = 8


@dataclass(frozen=True)
class FiberSpec:
    """Transmission fibre of one span, in conventional units.

    SI values used by the physics are exposed as properties.
    """

    attenuation_db_km: float = 0.165
    dispersion_ps_nm_km: float = 20.0
    gamma_per_w_km: float = 0.8
    span_length_km: float = 50.0
    margin_db: float = 1.5
    epsilon: float = 0.07
    reference_wavelength_nm: float = 1550.0

    def __post_init__(self):
        if self.attenuation_db_km <= 0:
            raise ValueError("attenuation_db_km must be > 0")
        if self.gamma_per_w_km < 0:
            raise ValueError("gamma_per_w_km must be >= 0")
        if self.span_length_km <= 0:
            raise ValueError("span_length_km must be > 0")
        if self.margin_db < 0:
            raise ValueError("margin_db must be >= 0")

    @property
    def alpha(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.attenuation_db_km / DB / 1e3

    @property
    def beta2(self) -> float:
        """Group-velocity dispersion in s^2/m at the reference wavelength."""
        lam = self.reference_wavelength_nm * 1e-9
        d_si = self.dispersion_ps_nm_km * 1e-6  # ps/(nm km) -> s/m^2
        return -(lam**2) * d_si / (2 * np.pi * C_LIGHT)

    @property
    def gamma(self) -> float:
        return self.gamma_per_w_km * 1e-3

    @property
    def span_length(self) -> float:
        return self.span_length_km * 1e3

    @property
    def effective_length(self) -> float:
        a = self.alpha
        return -np.expm1(-a * self.span_length) / a

    @property
    def span_attenuation_db(self) -> float:
        """Fibre loss plus margin, in dB."""
        return self.attenuation_db_km * self.span_length_km + self.margin_db

    @property
    def span_attenuation(self) -> float:
        return 10 ** (self.span_attenuation_db / 10)


@njit(cache=True)
def _e1_scalar(z):
    if abs(z) < 4.0 or (z.real < 0.0 and abs(z.imag) < 8.0 and abs(z) < 50.0):
        # power series, principal branch; the continued fraction is slow near
        # the negative real axis
        acc = 0.0 + 0.0j
        term = 1.0 + 0.0j
        for k in range(1, 400):
            term *= -z / k
            add = term / k
            acc += add
            if abs(add) < 1e-17 * abs(acc):
                break
        return -0.5772156649015329 - np.log(z) - acc
    # modified Lentz continued fraction
    b = z + 1.0
    c = 1e300 + 0.0j
    d = 1.0 / b
    h = d
    for i in range(1, 2000):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        de = c * d
        h *= de
        if abs(de - 1.0) < 1e-16:
            break
    return h * np.exp(-z)


@njit(cache=True)
def _e1_array(z):
    out = np.empty_like(z)
    for i in range(z.size):
        out.flat[i] = _e1_scalar(z.flat[i])
    return out


def _e1(z):
    z = np.asarray(z, dtype=np.complex128)
    return _e1_array(z.ravel()).reshape(z.shape)


class _SpanKernel:
    """Closed-form pieces of the u-integral for one span and channel spacing.

    With ``t = K p / alpha`` the kernel reads ``rho = h(t) / alpha**2`` where
    ``h(t) = (A0 - B0 cos(a t)) / (1 + t**2)`` and ``a = alpha * l``.
    ``Phi`` and ``Lam`` are the antiderivatives of ``h(t)`` and ``t h(t)``.
    """

    def __init__(self, alpha: float, beta2: float, span_length: float, delta_f: float):
        self.alpha = alpha
        self.a = alpha * span_length
        self.K = 4 * np.pi**2 * abs(beta2) * delta_f**2
        self.kl = self.K * span_length  # numerator phase per unit product
        e = np.exp(-self.a)
        self.A0 = 1 + e * e
        self.B0 = 2 * e
        # Taylor coefficients of h(t) in powers of t**2
        n = np.empty(_N_SERIES)
        n[0] = self.A0 - self.B0
        fact = 1.0
        for i in range(1, _N_SERIES):
            fact *= (2 * i - 1) * (2 * i)
            n[i] = -self.B0 * (-1) ** i * self.a ** (2 * i) / fact
        cser = np.empty(_N_SERIES)
        for j in range(_N_SERIES):
            cser[j] = sum(n[i] * (-1) ** (j - i) for i in range(j + 1))
        self.cser = cser
        a = self.a
        self.c_inf = 0.5 * np.pi * e
        self.s_inf = 0.5 * (np.exp(a) * exp1(a) - e * expi(a))
        self.phi_inf = 0.5 * np.pi * self.A0 - self.B0 * self.c_inf

    def _tails(self, tau):
        """Return (T_C, T_S): tails from tau to infinity of cos(a s)/(1+s^2)
        and s cos(a s)/(1+s^2), for tau >= _T_SERIES."""
        a = self.a
        fp = np.exp(a) * _e1(a - 1j * a * tau)
        fm = np.exp(-a) * _e1(-a - 1j * a * tau)
        tc = (0.5j * (fp - fm)).real
        ts = (0.5 * (fp + fm)).real
        return tc, ts

    def _phi_series(self, t):
        t2 = t * t
        acc = np.zeros_like(t)
        for j in range(_N_SERIES - 1, -1, -1):
            acc = acc * t2 + self.cser[j] / (2 * j + 1)
        return acc * t

    def _lam_series(self, t):
        t2 = t * t
        acc = np.zeros_like(t)
        for j in range(_N_SERIES - 1, -1, -1):
            acc = acc * t2 + self.cser[j] / (2 * j + 2)
        return acc * t2

    def _pieces(self, t):
        """Per-point data: small mask, series values, tails."""
        tau = np.abs(t)
        small = tau < _T_SERIES
        tau_safe = np.where(small, 1.0, tau)
        tc, ts = self._tails(tau_safe)
        tail_phi = self.A0 * np.arctan(1.0 / tau_safe) - self.B0 * tc
        g_lam = 0.5 * self.A0 * np.log1p(tau_safe**-2) + self.B0 * ts
        phi = np.where(
            small, self._phi_series(t), np.sign(t) * (self.phi_inf - tail_phi)
        )
        lam = np.where(
            small,
            self._lam_series(t),
            self.A0 * np.log(tau_safe) - self.B0 * self.s_inf + g_lam,
        )
        return small, tau_safe, tail_phi, g_lam, phi, lam

    def _delta(self, t):
        """Successive differences of Phi and Lam along axis 0, cancellation-safe."""
        small, tau, tphi, glam, phi, lam = self._pieces(t)
        big = ~small[:-1] & ~small[1:]
        sg = np.sign(t)
        same = big & (sg[:-1] == sg[1:])
        dphi = np.where(same, sg[1:] * (tphi[:-1] - tphi[1:]), phi[1:] - phi[:-1])
        dlam = np.where(
            big, self.A0 * np.log(tau[1:] / tau[:-1]) + (glam[1:] - glam[:-1]), lam[1:] - lam[:-1]
        )
        return dphi, dlam

    def _series_moments(self, k, ua, ub):
        k2 = k * k
        i0 = np.zeros_like(ua)
        i1 = np.zeros_like(ua)
        for j in range(_N_SERIES - 1, -1, -1):
            i0 = i0 * k2 + self.cser[j] * (ub ** (2 * j + 1) - ua ** (2 * j + 1)) / (2 * j + 1)
            i1 = i1 * k2 + self.cser[j] * (ub ** (2 * j + 2) - ua ** (2 * j + 2)) / (2 * j + 2)
        return i0, i1

    def weighted_u_integral(self, cc, di, dj, q):
        """Integral over u of h(K u cc / alpha) * m(u, cc) at nodes ``cc``."""
        tau = cc - dj
        lo = np.maximum(-0.5, -tau - 0.5)
        hi = np.minimum(0.5, -tau + 0.5)
        s = -q - tau
        A = di + np.maximum(0.0, s) - 0.5
        B = di + np.minimum(0.0, s) + 0.5
        valid = (hi > lo) & (B > A)
        p1 = A - hi
        p4 = B - lo
        p2 = np.minimum(B - hi, A - lo)
        p3 = np.maximum(B - hi, A - lo)
        height = p2 - p1
        k = self.K * np.abs(cc) / self.alpha

        umax = np.maximum(np.abs(p1), np.abs(p4))
        use_series = (k * umax < _T_SERIES) & valid
        direct = ~use_series & valid
        shape = np.broadcast(cc, p1).shape
        out = np.zeros(shape)
        p1, p2, p3, p4, height, k = (np.broadcast_to(v, shape) for v in (p1, p2, p3, p4, height, k))
        if use_series.any():
            m = use_series
            a1, b1, c1, d1, kk = p1[m], p2[m], p3[m], p4[m], k[m]
            i0a, i1a = self._series_moments(kk, a1, b1)
            i0b, _ = self._series_moments(kk, b1, c1)
            i0c, i1c = self._series_moments(kk, c1, d1)
            out[m] = (i1a - a1 * i0a) + height[m] * i0b + (d1 * i0c - i1c)
        if direct.any():
            m = direct
            a1, d1, kk = p1[m], p4[m], k[m]
            t = kk * np.stack([a1, p2[m], p3[m], d1])
            dphi, dlam = self._delta(t)
            i0 = dphi / kk
            i1 = dlam / kk**2
            out[m] = (i1[0] - a1 * i0[0]) + height[m] * i0[1] + (d1 * i0[2] - i1[2])
        return out


@lru_cache(maxsize=None)
def _gl(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _graded_edges(a, b, toward_a, toward_b, scale_a, scale_b):
    """Sub-panel edges of [a, b], geometrically refined at flagged ends."""
    edges = [a, b]
    mid = 0.5 * (a + b)
    if toward_a and scale_a < 0.5 * (b - a):
        d = scale_a
        while a + d < mid:
            edges.append(a + d)
            d *= 2
    if toward_b and scale_b < 0.5 * (b - a):
        d = scale_b
        while b - d > mid:
            edges.append(b - d)
            d *= 2
    return np.unique(edges)


def _split_max_width(edges, width):
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, int(np.ceil((b - a) / width)))
        out.extend(np.linspace(a, b, n + 1)[1:])
    return np.asarray(out)


def _trapezoid_corners(tau, di, q):
    lo = np.maximum(-0.5, -tau - 0.5)
    hi = np.minimum(0.5, -tau + 0.5)
    s = -q - tau
    A = di + np.maximum(0.0, s) - 0.5
    B = di + np.minimum(0.0, s) + 0.5
    return np.stack([A - hi, np.minimum(B - hi, A - lo), np.maximum(B - hi, A - lo), B - lo])


def _base_breakpoints(q):
    t_lo = max(-1.0, -q - 1.0)
    t_hi = min(1.0, -q + 1.0)
    pts = [t_lo, t_hi] + [p for p in (0.0, -q, -q / 2) if t_lo < p < t_hi]
    return np.unique(pts), t_lo, t_hi


def _coefficient_integral(kern: _SpanKernel, di: int, dj: int, q: int, order: int) -> float:
    """Integral of h * m over (u, c) for one index pair, |di| <= |dj|."""
    base, t_lo, t_hi = _base_breakpoints(q)
    graded = {}  # tau -> grading scale
    if kern.K > 0:
        if t_lo < -dj < t_hi:
            graded[float(-dj)] = kern.alpha / (kern.K * (abs(di) + 1.5))
        # trapezoid corners crossing u = 0 inside linear pieces
        for a, b in zip(base[:-1], base[1:]):
            pa = _trapezoid_corners(np.array(a), di, q)
            pb = _trapezoid_corners(np.array(b), di, q)
            for va, vb in zip(pa, pb):
                if va == 0.0:
                    r = a
                elif vb == 0.0:
                    r = b
                elif va * vb < 0:
                    r = a + (b - a) * va / (va - vb)
                else:
                    continue
                cc = abs(dj + r)
                graded[float(r)] = min(
                    graded.get(float(r), np.inf), kern.alpha / (kern.K * max(cc, 0.1))
                )
    edges = np.unique(np.concatenate([base, list(graded)]))
    edges = edges[(edges >= t_lo) & (edges <= t_hi)]
    sub = []
    for a, b in zip(edges[:-1], edges[1:]):
        sa = graded.get(float(a))
        sb = graded.get(float(b))
        sub.append(
            _graded_edges(
                a, b, sa is not None, sb is not None, sa or 0.0, sb or 0.0
            )
        )
    edges = np.unique(np.concatenate(sub))
    if kern.K > 0 and abs(dj) <= _OSC_RESOLVE_MAX:
        period = 2 * np.pi / (kern.kl * (abs(di) + 1.5))
        edges = _split_max_width(edges, 2 * period)
    x, w = _gl(order)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b) + half * x).ravel()
    weights = (half * w).ravel()
    vals = kern.weighted_u_integral(nodes + dj, di, dj, q)
    return float(np.dot(weights, vals))


def single_span_coefficient(
    fiber: FiberSpec, delta_f: float, di: int, dj: int, q: int, order: int = 16
) -> float:
    """Single-span GN coefficient ``D_q(di, dj)`` in 1/W^2.

    ``di = n1 - n`` and ``dj = n2 - n`` are channel-index offsets and ``q`` in
    {-1, 0, 1} selects the central (0) or corner (+-1) contribution. ``order``
    is the Gauss-Legendre order used on every sub-panel.
    """
    if abs(q) > 1:
        raise ValueError("q must be -1, 0 or 1")
    if order < 4:
        raise ValueError("order must be >= 4")
    if fiber.gamma == 0:
        return 0.0
    kern = _SpanKernel(fiber.alpha, fiber.beta2, fiber.span_length, delta_f)
    if abs(di) > abs(dj) or (abs(di) == abs(dj) and di > dj):
        di, dj = dj, di
    val = _coefficient_integral(kern, int(di), int(dj), int(q), order)
    return 16.0 / 27.0 * fiber.gamma**2 / fiber.alpha**2 * val


def _far_field_batch(kern, di, djs, q, order):
    """Vectorised coefficients for |di| >= 2 and |dj| > _OSC_RESOLVE_MAX."""
    base, _, _ = _base_breakpoints(q)
    x, w = _gl(order)
    a = base[:-1, None]
    b = base[1:, None]
    half = 0.5 * (b - a)
    tau = (0.5 * (a + b) + half * x).ravel()
    weights = (half * w).ravel()
    djs = np.asarray(djs, dtype=float)[:, None]
    vals = kern.weighted_u_integral(tau[None, :] + djs, float(di), djs, q)
    return vals @ weights


@dataclass
class NonlinearTensor:
    """GN coefficients ``D_q(di, dj)`` for q = -1, 0, 1, scaled to M spans.

    ``coeffs[q + 1, di + N - 1, dj + N - 1]`` in 1/W^2.
    """

    coeffs: np.ndarray
    n_channels: int
    delta_f: float
    spans: int
    epsilon: float
    order: int
    fiber_hash: str
    meta: dict = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return float(self.spans) ** (1.0 + self.epsilon)

    def single_span(self) -> np.ndarray:
        return self.coeffs / self.scale

    def rescaled(self, spans: int) -> "NonlinearTensor":
        """Same fibre and grid scaled to a different number of spans."""
        new = NonlinearTensor(
            self.single_span() * float(spans) ** (1.0 + self.epsilon),
            self.n_channels, self.delta_f, spans, self.epsilon, self.order,
            self.fiber_hash, dict(self.meta),
        )
        return new

    def key(self) -> str:
        return _tensor_key(self.n_channels, self.delta_f, self.fiber_hash, self.spans, self.epsilon, self.order)


def fiber_hash(fiber: FiberSpec) -> str:
    blob = json.dumps(asdict(fiber), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _tensor_key(n, delta_f, fhash, spans, epsilon, order):
    blob = json.dumps(
        dict(n=n, delta_f=repr(float(delta_f)), fiber=fhash, spans=spans,
             epsilon=repr(float(epsilon)), order=order, v=TENSOR_FORMAT_VERSION),
        sort_keys=True,
    ).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def single_span_tensor(fiber: FiberSpec, delta_f: float, n_channels: int, order: int = 16) -> np.ndarray:
    """All single-span coefficients, shape (3, 2N-1, 2N-1)."""
    n = int(n_channels)
    size = 2 * n - 1
    out = np.zeros((3, size, size))
    if fiber.gamma == 0:
        return out
    kern = _SpanKernel(fiber.alpha, fiber.beta2, fiber.span_length, delta_f)
    scale = 16.0 / 27.0 * fiber.gamma**2 / fiber.alpha**2
    idx = np.arange(-(n - 1), n)
    for qi, q in enumerate((-1, 0, 1)):
        for di in idx:
            # fill the half |di| <= |dj| and mirror
            djs = idx[(np.abs(idx) > abs(di)) | ((np.abs(idx) == abs(di)) & (idx >= di))]
            if abs(di) >= 2 and kern.K > 0:
                far = djs[np.abs(djs) > _OSC_RESOLVE_MAX]
                near = djs[np.abs(djs) <= _OSC_RESOLVE_MAX]
                if far.size:
                    vals = _far_field_batch(kern, di, far, q, order)
                    out[qi, di + n - 1, far + n - 1] = vals
            else:
                near = djs
            for dj in near:
                out[qi, di + n - 1, dj + n - 1] = _coefficient_integral(kern, int(di), int(dj), q, order)
        half = out[qi]
        ai = np.abs(idx)
        mask = (ai[:, None] > ai[None, :]) | ((ai[:, None] == ai[None, :]) & (idx[:, None] > idx[None, :]))
        half[mask] = half.T[mask]
    out *= scale
    return np.maximum(out, 0.0)


def build_tensor(
    fiber: FiberSpec,
    delta_f: float,
    n_channels: int,
    spans: int,
    order: int = 16,
    cache_dir: str | Path | None = None,
) -> NonlinearTensor:
    """GN tensor for ``n_channels`` on a uniform grid, scaled to ``spans``.

    With ``cache_dir`` the tensor is loaded from / written to a text cache
    keyed by the metadata hash.
    """
    if n_channels < 1 or spans < 1:
        raise ValueError("need n_channels >= 1 and spans >= 1")
    fhash = fiber_hash(fiber)
    # the cache holds the single-span tensor; span scaling is applied on load
    key = _tensor_key(n_channels, delta_f, fhash, 1, fiber.epsilon, order)
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"gn_tensor_{key}.txt"
        if path.exists():
            log.info("loading GN tensor cache %s", path)
            t = load_tensor(path)
            if t.key() != key:
                raise IntegrityError(f"tensor cache {path} does not match requested metadata")
            return t.rescaled(spans)
    log.info("building GN tensor: N=%d, delta_f=%.6g Hz, order=%d", n_channels, delta_f, order)
    single = single_span_tensor(fiber, delta_f, n_channels, order)
    t = NonlinearTensor(
        single, int(n_channels), float(delta_f), 1, float(fiber.epsilon), int(order), fhash,
        meta=dict(fiber=asdict(fiber)),
    )
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_tensor(t, path)
    return t.rescaled(spans)


class IntegrityError(RuntimeError):
    """Cached data does not match the metadata it is loaded for."""


def save_tensor(t: NonlinearTensor, path: str | Path) -> None:
    """Write the tensor as a key-value header followed by ``q di dj value`` rows."""
    n = t.n_channels
    header = dict(
        format_version=TENSOR_FORMAT_VERSION,
        n_channels=n,
        delta_f=repr(t.delta_f),
        spans=t.spans,
        epsilon=repr(t.epsilon),
        order=t.order,
        fiber_hash=t.fiber_hash,
        key=t.key(),
        fiber=json.dumps(t.meta.get("fiber", {}), sort_keys=True),
    )
    lines = [f"# {k} = {v}" for k, v in header.items()]
    lines.append("# q di dj value")
    idx = np.arange(-(n - 1), n)
    for qi, q in enumerate((-1, 0, 1)):
        block = t.coeffs[qi]
        for a, di in enumerate(idx):
            row = block[a]
            lines.extend(f"{q} {di} {dj} {v!r}" for dj, v in zip(idx, row.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_tensor(path: str | Path) -> NonlinearTensor:
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].split("=", 1)
                    header[k.strip()] = v.strip()
                continue
            if line.strip():
                rows.append(line)
    if int(header.get("format_version", -1)) != TENSOR_FORMAT_VERSION:
        raise IntegrityError(f"{path}: unsupported tensor format version")
    n = int(header["n_channels"])
    size = 2 * n - 1
    data = np.loadtxt(rows, dtype=float, ndmin=2) if rows else np.zeros((0, 4))
    if data.shape[0] != 3 * size * size:
        raise IntegrityError(f"{path}: expected {3 * size * size} rows, found {data.shape[0]}")
    coeffs = np.zeros((3, size, size))
    qi = data[:, 0].astype(int) + 1
    di = data[:, 1].astype(int) + n - 1
    dj = data[:, 2].astype(int) + n - 1
    # np.loadtxt parses repr() floats exactly
    coeffs[qi, di, dj] = data[:, 3]
    t = NonlinearTensor(
        coeffs, n, float(header["delta_f"]), int(header["spans"]),
        float(header["epsilon"]), int(header["order"]), header["fiber_hash"],
        meta=dict(fiber=json.loads(header.get("fiber", "{}"))),
    )
    if header.get("key") and header["key"] != t.key():
        raise IntegrityError(f"{path}: metadata hash mismatch")
    return t


# ---------------------------------------------------------------------------
# nonlinear noise evaluation


@njit(cache=True, nogil=True, fastmath=True)
def _nl_kernel(pt, coeffs):
    n = pt.shape[0]
    off = n - 1
    out = np.zeros(n)
    for k in range(n):
        acc = 0.0
        for qi in range(3):
            q = qi - 1
            for n1 in range(n):
                p1 = pt[n1]
                if p1 == 0.0:
                    continue
                row = coeffs[qi, n1 - k + off]
                # keep the third index n1 + n2 - k + q inside the grid
                lo = max(0, k - n1 - q)
                hi = min(n, n + k - n1 - q)
                part = 0.0
                for n2 in range(lo, hi):
                    part += pt[n2] * pt[n1 + n2 - k + q] * row[n2 - k + off]
                acc += p1 * part
        out[k] = acc
    return out


@njit(cache=True, nogil=True, fastmath=True)
def _nl_jacobian_kernel(pt, coeffs):
    n = pt.shape[0]
    off = n - 1
    jac = np.zeros((n, n))
    for k in range(n):
        for qi in range(3):
            q = qi - 1
            for n1 in range(n):
                p1 = pt[n1]
                row = coeffs[qi, n1 - k + off]
                lo = max(0, k - n1 - q)
                hi = min(n, n + k - n1 - q)
                d1 = 0.0
                for n2 in range(lo, hi):
                    m = n1 + n2 - k + q
                    d = row[n2 - k + off]
                    p2 = pt[n2]
                    p3 = pt[m]
                    d1 += d * p2 * p3
                    jac[k, n2] += d * p1 * p3
                    jac[k, m] += d * p1 * p2
                jac[k, n1] += d1
    return jac


def _check(tensor: NonlinearTensor, powers):
    p = np.asarray(powers, dtype=float)
    if p.shape != (tensor.n_channels,):
        raise ValueError(f"expected {tensor.n_channels} channel powers, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError("channel powers must be >= 0")
    return p


def nonlinear_noise(tensor: NonlinearTensor, powers, attenuation) -> np.ndarray:
    """Nonlinear noise power per channel (W) referred to the amplifier input.

    ``powers`` are amplifier-input powers in W and ``attenuation`` the linear
    span attenuation per channel (scalar or array).
    """
    p = _check(tensor, powers)
    att = np.broadcast_to(np.asarray(attenuation, dtype=float), p.shape)
    launched = att * p
    return _nl_kernel(launched, tensor.coeffs) / att


def nonlinear_noise_gradient(tensor: NonlinearTensor, powers, attenuation) -> np.ndarray:
    """Jacobian ``d NL_k / d P_m`` with respect to amplifier-input powers."""
    p = _check(tensor, powers)
    att = np.broadcast_to(np.asarray(attenuation, dtype=float), p.shape)
    jac = _nl_jacobian_kernel(att * p, tensor.coeffs)
    return jac * att[None, :] / att[:, None]
