"""Split-step Fourier simulation of dual-polarization WDM transmission.

Field convention: ``A(t) = sum_k A_k exp(+j w_k t)`` (numpy FFT), so one
step of the Manakov equation is

    dA/dz = (-alpha/2 + j beta2/2 w^2) A + j gamma 8/9 (|Ax|^2 + |Ay|^2) A.

Powers are in W, the field is in sqrt(W) and the two polarizations share
the launch power equally.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

from .errors import (
    BadParam,
    BadRolloff,
    BudgetExceeded,
    LengthMismatch,
    SpectralOverflow,
    StepTooLarge,
)
from .gmi import gmi_gh, sigma_from_snr_db
from .link import LinkSpec, ase_variance

MANAKOV = 8.0 / 9.0
DEFAULT_FFT_BUDGET = 2e10


@dataclass(frozen=True)
class SignalGrid:
    samples_x: np.ndarray
    samples_y: np.ndarray
    sample_rate_ghz: float

    def __post_init__(self):
        if self.samples_x.shape != self.samples_y.shape or self.samples_x.ndim != 1:
            raise LengthMismatch("polarizations must be 1-D arrays of equal length")

    @property
    def n_samples(self):
        return self.samples_x.size

    @property
    def fields(self):
        return np.stack([self.samples_x, self.samples_y])

    @classmethod
    def from_fields(cls, fields, sample_rate_ghz):
        return cls(fields[0], fields[1], sample_rate_ghz)

    def power_w(self):
        return float(np.mean(np.abs(self.samples_x) ** 2 + np.abs(self.samples_y) ** 2))


@dataclass(frozen=True)
class SimConfig:
    link: LinkSpec = field(default_factory=lambda: LinkSpec(n_channels=1))
    step_m: float = 400.0
    sps: int = 4
    n_symbols: int = 4096
    launch_dbm: float = 0.0
    seed: int = 0
    nonlinearity_on: bool = True
    ase_on: bool = True
    fft_budget: float = DEFAULT_FFT_BUDGET

    def __post_init__(self):
        if not self.step_m > 0:
            raise BadParam(f"step_m must be > 0, got {self.step_m}")
        if self.sps < 2 or self.n_symbols < 2:
            raise BadParam("need sps >= 2 and n_symbols >= 2")
        n = self.n_samples
        if n & (n - 1):
            raise BadParam(f"n_symbols * sps = {n} is not a power of two")
        link = self.link
        occupied = link.symbol_rate_ghz * (1 + link.rrc_rolloff)
        if link.n_channels > 1:
            occupied = (link.n_channels - 1) * link.spacing_ghz + occupied
        if self.sample_rate_ghz < occupied:
            raise SpectralOverflow(
                f"sample rate {self.sample_rate_ghz} GHz cannot hold {occupied} GHz of signal"
            )

    @property
    def n_samples(self):
        return self.n_symbols * self.sps

    @property
    def sample_rate_ghz(self):
        return self.sps * self.link.symbol_rate_ghz

    @property
    def launch_w(self):
        return 1e-3 * 10 ** (self.launch_dbm / 10)

    def with_launch(self, launch_dbm):
        return replace(self, launch_dbm=float(launch_dbm))

    def steps_per_span(self):
        return math.ceil(self.link.fiber.span_m / self.step_m - 1e-9)

    def fft_work(self):
        """Rough count of complex FFT butterflies for a full run."""
        n = self.n_samples
        ffts = 4 * self.steps_per_span() * self.link.n_spans + 8
        return ffts * n * math.log2(n)

    def check_budget(self):
        work = self.fft_work()
        if work > self.fft_budget:
            raise BudgetExceeded(
                f"estimated FFT work {work:.3g} exceeds budget {self.fft_budget:.3g}; "
                "reduce channels, spans, symbols or use a larger step"
            )


def angular_frequency(n_samples, sample_rate_ghz):
    return 2 * np.pi * np.fft.fftfreq(n_samples, d=1.0 / (sample_rate_ghz * 1e9))


def rrc_response(n_samples, rolloff, sps):
    """Frequency response of a unit-energy root-raised-cosine filter.

    Frequencies are in units of the symbol rate. Cascading the filter with
    itself gives a raised cosine whose value at ``t = 0`` is 1.
    """
    if not 0 < rolloff < 1:
        raise BadRolloff(f"roll-off must lie in (0, 1), got {rolloff}")
    f = np.abs(np.fft.fftfreq(n_samples, d=1.0 / sps))
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    rc = np.where(f <= lo, 1.0, 0.0)
    band = (f > lo) & (f < hi)
    rc[band] = 0.5 * (1 + np.cos(np.pi / rolloff * (f[band] - lo)))
    return np.sqrt(sps * rc)


def rrc_shape(symbols, rolloff, sps):
    """Upsample by ``sps`` and apply the RRC filter (circular convolution)."""
    symbols = np.asarray(symbols)
    up = np.zeros(symbols.shape[:-1] + (symbols.shape[-1] * sps,), dtype=complex)
    up[..., ::sps] = symbols
    h = rrc_response(up.shape[-1], rolloff, sps)
    return np.fft.ifft(np.fft.fft(up, axis=-1) * h, axis=-1)


def channel_offsets_hz(link):
    k = np.arange(link.n_channels) - (link.n_channels - 1) // 2
    return k * link.spacing_ghz * 1e9


def build_wdm(tx_symbols, cfg):
    """Shape, scale and frequency-stack channels; ``tx_symbols[k]`` is ``(2, n_symbols)``.

    Each symbol stream is expected at unit mean power per polarization. The
    centre entry is the channel under test at 0 Hz.
    """
    link = cfg.link
    if len(tx_symbols) != link.n_channels:
        raise LengthMismatch(f"{len(tx_symbols)} symbol streams for {link.n_channels} channels")
    n = cfg.n_samples
    fs = cfg.sample_rate_ghz * 1e9
    df = fs / n
    t = np.arange(n) / fs
    amp = np.sqrt(cfg.launch_w / 2 * cfg.sps)
    total = np.zeros((2, n), dtype=complex)
    for sym, f0 in zip(tx_symbols, channel_offsets_hz(link)):
        sym = np.asarray(sym)
        if sym.shape != (2, cfg.n_symbols):
            raise LengthMismatch(f"symbol block {sym.shape}, expected (2, {cfg.n_symbols})")
        f_bin = round(f0 / df) * df
        edge = abs(f_bin) + link.symbol_rate_hz * (1 + link.rrc_rolloff) / 2
        if edge > fs / 2:
            raise SpectralOverflow(f"channel at {f0 / 1e9:.1f} GHz exceeds the grid")
        wave = amp * rrc_shape(sym, link.rrc_rolloff, cfg.sps)
        total += wave * np.exp(2j * np.pi * f_bin * t)
    return SignalGrid.from_fields(total, cfg.sample_rate_ghz)


def _linear_operator(omega, beta2, alpha, length_m):
    return np.exp((0.5j * beta2 * omega**2 - 0.5 * alpha) * length_m)


def propagate_span(sig, fiber, cfg):
    """Symmetric split-step over one span; the last step is shortened to end exactly."""
    if cfg.step_m > fiber.span_m:
        raise StepTooLarge(f"step {cfg.step_m} m exceeds span {fiber.span_m} m")
    n_steps = math.ceil(fiber.span_m / cfg.step_m - 1e-9)
    steps = np.full(n_steps, cfg.step_m)
    steps[-1] = fiber.span_m - cfg.step_m * (n_steps - 1)
    omega = angular_frequency(sig.n_samples, sig.sample_rate_ghz)
    beta2 = fiber.beta2(cfg.link.center_wavelength_nm)
    alpha = fiber.alpha_per_m
    gamma = MANAKOV * fiber.gamma_per_w_m
    spec = np.fft.fft(sig.fields, axis=-1)
    if not cfg.nonlinearity_on or gamma == 0:
        spec *= _linear_operator(omega, beta2, alpha, fiber.span_m)
        return SignalGrid.from_fields(np.fft.ifft(spec, axis=-1), sig.sample_rate_ghz)
    spec *= _linear_operator(omega, beta2, alpha, steps[0] / 2)
    for i, h in enumerate(steps):
        a = np.fft.ifft(spec, axis=-1)
        # power at the step midpoint, integrated over the attenuating step
        h_eff = h if alpha == 0 else math.exp(alpha * h / 2) * -math.expm1(-alpha * h) / alpha
        power = np.abs(a[0]) ** 2 + np.abs(a[1]) ** 2
        a *= np.exp(1j * gamma * h_eff * power)
        spec = np.fft.fft(a, axis=-1)
        nxt = steps[i + 1] if i + 1 < n_steps else 0.0
        spec *= _linear_operator(omega, beta2, alpha, (h + nxt) / 2)
    return SignalGrid.from_fields(np.fft.ifft(spec, axis=-1), sig.sample_rate_ghz)


def ase_sample_variance(gain_db, nf_db, frequency_hz, sample_rate_hz):
    """Per-polarization complex noise variance per sample: ``NF h nu (G - 1) / 2 * Fs``."""
    g = 10 ** (gain_db / 10)
    nf = 10 ** (nf_db / 10)
    return nf * constants.h * frequency_hz * (g - 1) / 2 * sample_rate_hz


def edfa(sig, gain_db, nf_db, ase_on, rng, frequency_hz):
    """Amplify by ``gain_db`` and optionally add white ASE in both polarizations.

    ``rng`` is a numpy Generator or an integer seed.
    """
    if gain_db < 0:
        raise BadParam(f"EDFA gain must be >= 0 dB, got {gain_db}")
    out = sig.fields * 10 ** (gain_db / 20)
    if ase_on:
        rng = np.random.default_rng(rng)
        var = ase_sample_variance(gain_db, nf_db, frequency_hz, sig.sample_rate_ghz * 1e9)
        noise = rng.standard_normal((2, 2, sig.n_samples)) * np.sqrt(var / 2)
        out = out + noise[0] + 1j * noise[1]
    return SignalGrid.from_fields(out, sig.sample_rate_ghz)


@dataclass(frozen=True)
class RxResult:
    symbols: np.ndarray
    eff_snr_db: float


def rx_chain(sig, cfg, tx_symbols):
    """CD compensation, matched filtering, sampling and data-aided scalar equalization.

    ``tx_symbols`` is ``(2, n_symbols)``; the result is returned in the same
    units so the error vector is directly comparable.
    """
    tx = np.asarray(tx_symbols)
    if sig.n_samples != cfg.n_samples or tx.shape != (2, cfg.n_symbols):
        raise LengthMismatch(
            f"grid has {sig.n_samples} samples and tx {tx.shape}; "
            f"expected {cfg.n_samples} and (2, {cfg.n_symbols})"
        )
    link = cfg.link
    omega = angular_frequency(sig.n_samples, sig.sample_rate_ghz)
    distance = link.n_spans * link.fiber.span_m
    cdc = np.exp(-0.5j * link.beta2 * omega**2 * distance)
    h = rrc_response(sig.n_samples, link.rrc_rolloff, cfg.sps)
    rx = np.fft.ifft(np.fft.fft(sig.fields, axis=-1) * cdc * h, axis=-1)[:, ::cfg.sps]
    scale = np.sum(np.conj(tx) * rx, axis=1) / np.sum(np.abs(tx) ** 2, axis=1)
    rx = rx / scale[:, None]
    err = np.sum(np.abs(rx - tx) ** 2)
    snr = np.sum(np.abs(tx) ** 2) / err if err > 0 else np.inf
    return RxResult(rx, float(10 * np.log10(snr)))


@dataclass(frozen=True)
class TransmissionResult:
    eff_snr_db: float
    gmi: float
    labels: np.ndarray
    decisions: np.ndarray
    rx_symbols: np.ndarray


def _dp_symbols(c, labels):
    """4D points to ``(2, n)`` complex streams, one time slot on both polarizations."""
    z = c.complex_points()[labels]
    return z.T.copy()


def run_transmission(c, cfg, rule=None):
    """Seeded end-to-end run; the GMI is ``gmi_gh`` at the measured effective SNR."""
    if c.n_dims != 4:
        raise BadParam(f"transmission needs a 4D format, got N={c.n_dims}")
    cfg.check_budget()
    link = cfg.link
    ss = np.random.SeedSequence(cfg.seed)
    sym_seq, wdm_seq, ase_seq = ss.spawn(3)
    labels = np.random.default_rng(sym_seq).integers(0, c.n_points, cfg.n_symbols)
    tx = _dp_symbols(c, labels)
    wdm_rng = np.random.default_rng(wdm_seq)
    streams = []
    centre = (link.n_channels - 1) // 2
    for k in range(link.n_channels):
        if k == centre:
            streams.append(tx)
        else:
            streams.append(_dp_symbols(c, wdm_rng.integers(0, c.n_points, cfg.n_symbols)))
    sig = build_wdm(streams, cfg)
    span_rngs = [np.random.default_rng(s) for s in ase_seq.spawn(link.n_spans)]
    for s in range(link.n_spans):
        sig = propagate_span(sig, link.fiber, cfg)
        sig = edfa(sig, link.fiber.span_loss_db, link.edfa_nf_db, cfg.ase_on, span_rngs[s],
                   link.frequency_hz)
    rx = rx_chain(sig, cfg, tx)
    gmi = gmi_gh(c, float(sigma_from_snr_db(rx.eff_snr_db)), rule).value \
        if np.isfinite(rx.eff_snr_db) else float(c.bits)
    pts = c.points
    y = np.stack([rx.symbols[0].real, rx.symbols[0].imag, rx.symbols[1].real, rx.symbols[1].imag], axis=1)
    d2 = np.sum(y * y, axis=1)[:, None] - 2 * y @ pts.T + np.sum(pts * pts, axis=1)[None, :]
    decisions = np.argmin(d2, axis=1)
    return TransmissionResult(rx.eff_snr_db, float(gmi), labels, decisions, rx.symbols)


def closed_form_ase_snr_db(cfg):
    """Effective SNR of an ASE-only link: ``P / (n_spans * sigma_ASE^2)``."""
    a = cfg.link.n_spans * ase_variance(cfg.link)
    return float(10 * np.log10(cfg.launch_w / a))


@dataclass(frozen=True)
class SnrOptMeasurement:
    snr_opt_db: float
    p_opt_dbm: float
    ase_coeff: float
    nli_coeff: float
    launch_dbm: tuple
    eff_snr_db: tuple


def fit_launch_sweep(launch_dbm, eff_snr_db):
    """Fit ``1/SNR = a/P + b P^2`` and return the analytic optimum."""
    p = 1e-3 * 10 ** (np.asarray(launch_dbm, dtype=float) / 10)
    inv = 10 ** (-np.asarray(eff_snr_db, dtype=float) / 10)
    design = np.column_stack([1.0 / p, p**2]) * (1.0 / inv)[:, None]
    (a, b), *_ = np.linalg.lstsq(design, np.ones_like(p), rcond=None)
    if not (a > 0 and b > 0):
        raise BadParam("launch sweep shows no interior optimum; widen the power range")
    p_opt = (a / (2 * b)) ** (1 / 3)
    snr = 1.0 / (a / p_opt + b * p_opt**2)
    return float(10 * np.log10(snr)), float(10 * np.log10(p_opt * 1e3)), float(a), float(b)


def measure_snr_opt(c, cfg, launch_dbm, rule=None):
    """Launch-power sweep of :func:`run_transmission` and a cubic-model fit of the optimum."""
    snrs = [run_transmission(c, cfg.with_launch(p), rule).eff_snr_db for p in launch_dbm]
    snr_opt_db, p_opt_dbm, a, b = fit_launch_sweep(launch_dbm, snrs)
    return SnrOptMeasurement(snr_opt_db, p_opt_dbm, a, b, tuple(float(p) for p in launch_dbm),
                             tuple(snrs))
