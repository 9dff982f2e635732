"""Closed-form multi-span link budget with a modulation-dependent NLI term.

Powers are per channel and summed over both polarizations; the ASE term is
the dual-polarization noise power in the symbol-rate bandwidth, so
``P / (A + eta P^3)`` is directly the SNR per complex dimension.
"""

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import constants

from .constellation import ModulationMoments, moments
from .errors import BadParam, DegenerateFit, NonPositiveEta, UnreachableAtOneSpan
from .gmi import gmi_gh, sigma_from_snr_db

LINEAR_REGIME_ETA = 1e-12
DB_PER_NEPER = 10.0 * np.log10(np.e)


@dataclass(frozen=True)
class FiberParams:
    atten_db_per_km: float = 0.21
    dispersion_ps_nm_km: float = 16.9
    gamma_per_w_km: float = 1.31
    span_km: float = 80.0

    def __post_init__(self):
        if not self.span_km > 0:
            raise BadParam(f"span length must be > 0 km, got {self.span_km}")
        if self.atten_db_per_km < 0 or self.gamma_per_w_km < 0:
            raise BadParam("attenuation and nonlinear coefficient must be >= 0")

    @property
    def alpha_per_m(self):
        """Power attenuation coefficient in 1/m."""
        return self.atten_db_per_km / DB_PER_NEPER / 1e3

    @property
    def gamma_per_w_m(self):
        return self.gamma_per_w_km / 1e3

    @property
    def span_m(self):
        return self.span_km * 1e3

    @property
    def span_loss_db(self):
        return self.atten_db_per_km * self.span_km

    def beta2(self, wavelength_nm):
        """Group-velocity dispersion in s^2/m."""
        lam = wavelength_nm * 1e-9
        d_si = self.dispersion_ps_nm_km * 1e-6
        return -d_si * lam**2 / (2 * np.pi * constants.c)

    def effective_length_m(self, length_m=None):
        length_m = self.span_m if length_m is None else length_m
        a = self.alpha_per_m
        return length_m if a == 0 else -math.expm1(-a * length_m) / a


@dataclass(frozen=True)
class LinkSpec:
    fiber: FiberParams = field(default_factory=FiberParams)
    n_spans: int = 1
    edfa_nf_db: float = 5.0
    symbol_rate_ghz: float = 45.0
    n_channels: int = 11
    spacing_ghz: float = 50.0
    rrc_rolloff: float = 0.1
    center_wavelength_nm: float = 1550.0

    def __post_init__(self):
        if self.n_spans < 1:
            raise BadParam(f"n_spans must be >= 1, got {self.n_spans}")
        if self.n_channels < 1 or self.n_channels % 2 == 0:
            raise BadParam(f"n_channels must be odd, got {self.n_channels}")
        if not 0 < self.rrc_rolloff < 1:
            raise BadParam(f"roll-off must lie in (0, 1), got {self.rrc_rolloff}")
        if self.n_channels > 1 and self.spacing_ghz < self.symbol_rate_ghz * (1 + self.rrc_rolloff):
            raise BadParam("channel spacing smaller than the occupied bandwidth")

    @property
    def symbol_rate_hz(self):
        return self.symbol_rate_ghz * 1e9

    @property
    def frequency_hz(self):
        return constants.c / (self.center_wavelength_nm * 1e-9)

    @property
    def distance_km(self):
        return self.n_spans * self.fiber.span_km

    @property
    def beta2(self):
        return self.fiber.beta2(self.center_wavelength_nm)

    def with_spans(self, n_spans):
        return replace(self, n_spans=int(n_spans))


REFERENCE_LINK = LinkSpec()


def single_span_link(length_km, n_channels=1, **kw):
    return LinkSpec(fiber=FiberParams(span_km=length_km), n_spans=1, n_channels=n_channels, **kw)


def ase_variance(link):
    """ASE power added by one span's amplifier, ``h nu NF (G - 1) R_s`` (W)."""
    gain = 10 ** (link.fiber.span_loss_db / 10)
    nf = 10 ** (link.edfa_nf_db / 10)
    return float(constants.h * link.frequency_hz * nf * (gain - 1) * link.symbol_rate_hz)


@dataclass(frozen=True)
class NliSurrogateParams:
    """``eta = eta0 (1 + k_kurt*kurt_excess + k_cross*cross4) * n_spans^(1+epsilon)``."""

    eta0: float
    k_kurt: float = 0.0
    k_cross: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise BadParam(f"epsilon must be >= 0, got {self.epsilon}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(d[k]) for k in ("eta0", "k_kurt", "k_cross", "epsilon") if k in d})

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls.from_dict(d.get("params", d))


def gn_eta0(link):
    """Incoherent GN closed form for the centre channel of one span (1/W^2).

    Used as the default base coefficient when no calibration is supplied.
    """
    f = link.fiber
    b2 = abs(link.beta2)
    rs = link.symbol_rate_hz
    bw = rs if link.n_channels == 1 else link.n_channels * link.spacing_ghz * 1e9
    l_eff = f.effective_length_m()
    l_asym = 1.0 / f.alpha_per_m if f.alpha_per_m > 0 else f.span_m
    gamma = f.gamma_per_w_m
    arg = 0.5 * np.pi**2 * b2 * l_asym * bw**2
    return float(8 / 27 * gamma**2 * l_eff**2 * np.arcsinh(arg) / (np.pi * b2 * l_asym * rs**2))


def nli_coefficient(mom, params, n_spans=1):
    scale = 1.0 + params.k_kurt * mom.kurt_excess + params.k_cross * mom.cross4
    eta = params.eta0 * scale * n_spans ** (1.0 + params.epsilon)
    if not eta > 0:
        raise NonPositiveEta(f"NLI coefficient {eta} <= 0 for moments {mom}")
    return eta


def snr_eff(power_w, ase_w, eta):
    return power_w / (ase_w + eta * power_w**3)


class SnrOpt(NamedTuple):
    snr_db: float
    p_opt_w: float
    linear_regime: bool = False

    @property
    def launch_dbm(self):
        return float(10 * np.log10(self.p_opt_w * 1e3))


def snr_opt_from_budget(ase_w, eta):
    if eta < LINEAR_REGIME_ETA:
        return SnrOpt(math.inf, math.inf, True)
    p_opt = (ase_w / (2.0 * eta)) ** (1.0 / 3.0)
    return SnrOpt(float(10 * np.log10(snr_eff(p_opt, ase_w, eta))), float(p_opt))


def snr_opt(c, link, params):
    """Optimum effective SNR of format ``c`` on ``link`` and the launch power reaching it."""
    mom = c if isinstance(c, ModulationMoments) else moments(c)
    ase = link.n_spans * ase_variance(link)
    eta = nli_coefficient(mom, params, link.n_spans)
    return snr_opt_from_budget(ase, eta)


@dataclass(frozen=True)
class ReachResult:
    n_spans: int
    distance_km: float
    gmi_at_reach: float
    snr_opt_db: float
    launch_dbm: float


def max_reach(c, link_template, params, rule=None, threshold_ngmi=0.85, max_spans=1 << 16):
    """Largest span count whose GMI at the optimum launch stays >= threshold * m."""
    target = threshold_ngmi * c.bits
    mom = moments(c)
    probes = {}

    def gmi_at(n):
        if n not in probes:
            so = snr_opt(mom, link_template.with_spans(n), params)
            g = gmi_gh(c, float(sigma_from_snr_db(so.snr_db)), rule).value
            probes[n] = (g, so)
            ordered = [probes[k][0] for k in sorted(probes)]
            if any(b > a + 1e-9 for a, b in zip(ordered, ordered[1:])):
                raise RuntimeError("GMI increased with span count")
        return probes[n][0]

    if gmi_at(1) < target:
        raise UnreachableAtOneSpan(f"{c.name} misses GMI {target:.3f} after one span")
    good, bad = 1, 2
    while gmi_at(bad) >= target:
        good, bad = bad, bad * 2
        if bad > max_spans:
            raise RuntimeError(f"reach exceeds {max_spans} spans")
    while bad - good > 1:
        mid = (good + bad) // 2
        if gmi_at(mid) >= target:
            good = mid
        else:
            bad = mid
    g, so = probes[good]
    return ReachResult(
        n_spans=good,
        distance_km=good * link_template.fiber.span_km,
        gmi_at_reach=g,
        snr_opt_db=so.snr_db,
        launch_dbm=so.launch_dbm,
    )


def eta_from_snr_opt(snr_opt_db, ase_w):
    """Invert the optimum of ``P / (A + eta P^3)``: ``eta = 4 / (27 A^2 SNR^3)``."""
    snr = 10 ** (np.asarray(snr_opt_db) / 10)
    return 4.0 / (27.0 * ase_w**2 * snr**3)


def calibrate_surrogate(measurements, link, epsilon=0.0):
    """Fit ``(eta0, k_kurt, k_cross)`` to measured optimum SNRs.

    ``measurements`` holds ``(format or moments, snr_opt_db)`` pairs taken on
    ``link``. The fit is linear least squares on relative NLI-coefficient
    error. When no format carries a polarization cross moment, ``k_cross``
    is not identifiable and is fixed at 0. Returns the parameters and the
    per-format SNR residuals in dB.
    """
    if len(measurements) < 3:
        raise DegenerateFit(f"need >= 3 formats, got {len(measurements)}")
    moms = [m if isinstance(m, ModulationMoments) else moments(m) for m, _ in measurements]
    snrs = np.array([s for _, s in measurements], dtype=float)
    ase = link.n_spans * ase_variance(link)
    eta = eta_from_snr_opt(snrs, ase) / link.n_spans ** (1.0 + epsilon)
    kurt = np.array([m.kurt_excess for m in moms])
    cross = np.array([m.cross4 for m in moms])
    design = np.column_stack([np.ones_like(kurt), kurt, cross])
    use_cross = np.ptp(cross) > 1e-9
    if not use_cross:
        design = design[:, :2]
    if np.linalg.matrix_rank(design, tol=1e-9) < design.shape[1]:
        raise DegenerateFit("moment matrix is rank-deficient")
    coef, *_ = np.linalg.lstsq(design / eta[:, None], np.ones_like(eta), rcond=None)
    if not coef[0] > 0:
        raise DegenerateFit(f"fitted eta0 = {coef[0]} is not positive")
    params = NliSurrogateParams(
        eta0=float(coef[0]),
        k_kurt=float(coef[1] / coef[0]),
        k_cross=float(coef[2] / coef[0]) if use_cross else 0.0,
        epsilon=epsilon,
    )
    fitted = np.array([snr_opt(m, link, params).snr_db for m in moms])
    return params, snrs - fitted
