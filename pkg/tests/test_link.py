from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from gs4d.catalog import CATALOG_NAMES, build_catalog_format
from gs4d.config import load_config, parse_config
from gs4d.constellation import ModulationMoments, moments
from gs4d.errors import BadParam, DegenerateFit, NonPositiveEta, ParseError, UnreachableAtOneSpan
from gs4d.gmi import gmi_gh, sigma_from_snr_db
from gs4d.link import (
    REFERENCE_LINK,
    FiberParams,
    LinkSpec,
    NliSurrogateParams,
    ase_variance,
    calibrate_surrogate,
    max_reach,
    nli_coefficient,
    single_span_link,
    snr_eff,
    snr_opt,
    snr_opt_from_budget,
)

# h * nu * NF * (G - 1) * Rs with h = 6.62607015e-34, nu = c / 1550 nm,
# G = 10^1.68, NF = 10^0.5, Rs = 45e9, multiplied out by hand
REFERENCE_ASE_W = 8.546488658492824e-07

# representative calibrated surrogate for the reference link
CALIBRATED = NliSurrogateParams(eta0=528.0, k_kurt=0.72, k_cross=0.72)


def test_ase_reference_constant():
    assert ase_variance(REFERENCE_LINK) == pytest.approx(REFERENCE_ASE_W, rel=1e-12)


def test_ase_linear_in_noise_figure():
    nf_lin = 10 ** 0.5
    doubled = replace(REFERENCE_LINK, edfa_nf_db=10 * np.log10(2 * nf_lin))
    assert ase_variance(doubled) == pytest.approx(2 * ase_variance(REFERENCE_LINK), rel=1e-12)


def test_ase_zero_without_loss():
    link = replace(REFERENCE_LINK, fiber=FiberParams(atten_db_per_km=0.0))
    assert ase_variance(link) == 0.0


def test_link_validation():
    with pytest.raises(BadParam):
        LinkSpec(n_channels=10)
    with pytest.raises(BadParam):
        LinkSpec(spacing_ghz=40.0)
    with pytest.raises(BadParam):
        LinkSpec(rrc_rolloff=1.0)
    with pytest.raises(BadParam):
        LinkSpec(n_spans=0)
    with pytest.raises(BadParam):
        FiberParams(span_km=0.0)


def test_beta2_value():
    # -D lambda^2 / (2 pi c) for 16.9 ps/nm/km at 1550 nm, in ps^2/km
    assert REFERENCE_LINK.beta2 * 1e27 == pytest.approx(-21.5551, rel=1e-4)


QPSK_MOM = ModulationMoments(1.0, -1.0, 0.0)
QAM16_MOM = ModulationMoments(1.0, -0.68, 0.0)


def test_nli_format_independent_without_weights():
    p = NliSurrogateParams(eta0=100.0)
    assert nli_coefficient(QPSK_MOM, p) == nli_coefficient(QAM16_MOM, p) == 100.0


def test_nli_kurtosis_ordering():
    p = NliSurrogateParams(eta0=100.0, k_kurt=0.5)
    assert nli_coefficient(QPSK_MOM, p) < nli_coefficient(QAM16_MOM, p)


def test_nli_span_scaling():
    p = NliSurrogateParams(eta0=100.0, k_kurt=0.3)
    assert nli_coefficient(QAM16_MOM, p, 2) == 2 * nli_coefficient(QAM16_MOM, p, 1)
    pe = replace(p, epsilon=0.1)
    assert nli_coefficient(QAM16_MOM, pe, 4) == pytest.approx(4**1.1 * nli_coefficient(QAM16_MOM, pe), rel=1e-14)


def test_nli_non_positive():
    with pytest.raises(NonPositiveEta):
        nli_coefficient(QPSK_MOM, NliSurrogateParams(eta0=100.0, k_kurt=1.5))


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_snr_opt_matches_golden_section(name):
    c = build_catalog_format(name)
    link = REFERENCE_LINK.with_spans(20)
    so = snr_opt(c, link, CALIBRATED)
    a = 20 * ase_variance(REFERENCE_LINK)
    eta = nli_coefficient(moments(c), CALIBRATED, 20)
    res = minimize_scalar(lambda dbm: -snr_eff(1e-3 * 10 ** (dbm / 10), a, eta),
                          bracket=(-10, 0, 10), method="golden", tol=1e-10)
    assert so.launch_dbm == pytest.approx(res.x, abs=0.01)
    assert so.snr_db == pytest.approx(10 * np.log10(-res.fun), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-9, 1e-2), st.floats(1e-2, 1e4))
def test_first_order_condition(a, eta):
    so = snr_opt_from_budget(a, eta)
    assert eta * so.p_opt_w**3 == pytest.approx(a / 2, rel=1e-12)


def test_linear_regime_marker():
    so = snr_opt_from_budget(1e-6, 1e-13)
    assert so.linear_regime and np.isinf(so.p_opt_w)


def test_doubling_ase_scales_launch():
    p1 = snr_opt_from_budget(1e-6, 300.0).p_opt_w
    p2 = snr_opt_from_budget(2e-6, 300.0).p_opt_w
    assert p2 / p1 == pytest.approx(2 ** (1 / 3), rel=1e-14)


def test_snr_opt_non_increasing_in_spans():
    c = build_catalog_format("PM-16QAM")
    snrs = [snr_opt(c, REFERENCE_LINK.with_spans(n), CALIBRATED).snr_db for n in range(1, 40)]
    assert np.all(np.diff(snrs) < 0)


def test_link_outputs_invariant_to_relabeling():
    c = build_catalog_format("128SP-QAM16")
    perm = np.random.default_rng(0).permutation(c.n_points)
    assert snr_opt(c.relabeled(perm), REFERENCE_LINK, CALIBRATED) == snr_opt(c, REFERENCE_LINK, CALIBRATED)


def test_reach_pm_qpsk_golden():
    r = max_reach(build_catalog_format("PM-QPSK"), REFERENCE_LINK, CALIBRATED)
    assert r.n_spans == 366
    assert r.distance_km == 366 * 80.0
    assert r.gmi_at_reach >= 3.4
    beyond = snr_opt(build_catalog_format("PM-QPSK"), REFERENCE_LINK.with_spans(367), CALIBRATED)
    assert gmi_gh(build_catalog_format("PM-QPSK"), float(sigma_from_snr_db(beyond.snr_db))).value < 3.4


def test_reach_threshold_monotone():
    c = build_catalog_format("PM-16QAM")
    spans = [max_reach(c, REFERENCE_LINK, CALIBRATED, threshold_ngmi=t).n_spans for t in (0.7, 0.8, 0.85, 0.9)]
    assert spans == sorted(spans, reverse=True)


def test_reach_dominance():
    # equal moments give equal snr_opt; PM-16QAM has the higher GMI at every SNR,
    # so for a common target of 5.25 bits it must reach at least as far
    sp = build_catalog_format("128SP-QAM16")
    other = build_catalog_format("PM-16QAM")
    for snr in np.arange(0, 25, 2.5):
        s = float(sigma_from_snr_db(snr))
        assert gmi_gh(sp, s).value <= gmi_gh(other, s).value
    params = NliSurrogateParams(eta0=528.0)
    ra = max_reach(sp, REFERENCE_LINK, params, threshold_ngmi=0.75)
    rb = max_reach(other, REFERENCE_LINK, params, threshold_ngmi=0.75 * 7 / 8)
    assert rb.n_spans >= ra.n_spans


def test_reach_unreachable():
    link = replace(REFERENCE_LINK, fiber=FiberParams(span_km=400.0))
    with pytest.raises(UnreachableAtOneSpan):
        max_reach(build_catalog_format("PM-64QAM"), link, CALIBRATED)


def _synthetic(params, link, names):
    return [(build_catalog_format(n), snr_opt(build_catalog_format(n), link, params).snr_db) for n in names]


def test_calibration_recovers_known_params():
    link = single_span_link(234.0)
    truth = NliSurrogateParams(eta0=160.0, k_kurt=0.7, k_cross=0.4)
    data = _synthetic(truth, link, ["PM-QPSK", "PM-16QAM", "PM-64QAM", "PS-QPSK", "4D-2A8PSK-7"])
    fit, resid = calibrate_surrogate(data, link)
    assert fit.eta0 == pytest.approx(truth.eta0, rel=1e-6)
    assert fit.k_kurt == pytest.approx(truth.k_kurt, rel=1e-6)
    assert fit.k_cross == pytest.approx(truth.k_cross, rel=1e-6)
    assert np.max(np.abs(resid)) < 1e-9


def test_calibration_without_cross_moment_fixes_k_cross():
    link = REFERENCE_LINK.with_spans(10)
    truth = NliSurrogateParams(eta0=500.0, k_kurt=0.6)
    fit, _ = calibrate_surrogate(_synthetic(truth, link, ["PM-QPSK", "PM-16QAM", "PM-64QAM"]), link)
    assert fit.k_cross == 0.0
    assert fit.k_kurt == pytest.approx(0.6, rel=1e-6)


def test_calibration_degenerate():
    link = REFERENCE_LINK
    with pytest.raises(DegenerateFit):
        calibrate_surrogate(_synthetic(CALIBRATED, link, ["PM-QPSK", "PM-16QAM"]), link)
    with pytest.raises(DegenerateFit):
        calibrate_surrogate(_synthetic(CALIBRATED, link, ["PM-16QAM", "128SP-QAM16", "PM-QPSK"])[:1] * 3, link)


def test_surrogate_json_round_trip(tmp_path):
    p = NliSurrogateParams(eta0=1.5, k_kurt=0.2, k_cross=-0.1, epsilon=0.05)
    path = tmp_path / "p.json"
    path.write_text(__import__("json").dumps({"params": p.to_dict()}))
    assert NliSurrogateParams.load(path) == p


def test_config_defaults_are_reference():
    run = load_config()
    assert run.link == REFERENCE_LINK


def test_config_overrides(tmp_path):
    path = tmp_path / "link.cfg"
    path.write_text("# single span\nspan_length_km = 234\nwdm_channels = 1\nn_spans = 1  # comment\nstep_m = 200\n")
    run = load_config(path)
    assert run.link.fiber.span_km == 234.0 and run.link.n_channels == 1
    assert run.sim_config().step_m == 200.0


def test_config_errors():
    with pytest.raises(BadParam):
        parse_config("unknown_key = 1\n")
    with pytest.raises(ParseError):
        parse_config("n_spans = two\n")
