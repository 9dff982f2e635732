"""Flat ``key = value`` configuration files for links, simulations and the NLI surrogate.

Lines starting with ``#`` are comments. Recognized keys::

    symbol_rate_gbaud      wdm_channels         channel_spacing_ghz
    rrc_rolloff            attenuation_db_km    dispersion_ps_nm_km
    nonlinear_coeff_w_km   span_length_km       edfa_noise_figure_db
    n_spans                center_wavelength_nm
    step_m  sps  n_symbols  launch_dbm  seed  fft_budget
    nli_eta0  nli_k_kurt  nli_k_cross  nli_epsilon
"""

import configparser
from dataclasses import dataclass, replace

from .errors import BadParam, ParseError
from .link import FiberParams, LinkSpec, NliSurrogateParams, gn_eta0
from .ssfm import SimConfig

FIBER_KEYS = {
    "attenuation_db_km": ("atten_db_per_km", float),
    "dispersion_ps_nm_km": ("dispersion_ps_nm_km", float),
    "nonlinear_coeff_w_km": ("gamma_per_w_km", float),
    "span_length_km": ("span_km", float),
}
LINK_KEYS = {
    "symbol_rate_gbaud": ("symbol_rate_ghz", float),
    "wdm_channels": ("n_channels", int),
    "channel_spacing_ghz": ("spacing_ghz", float),
    "rrc_rolloff": ("rrc_rolloff", float),
    "edfa_noise_figure_db": ("edfa_nf_db", float),
    "n_spans": ("n_spans", int),
    "center_wavelength_nm": ("center_wavelength_nm", float),
}
SIM_KEYS = {
    "step_m": ("step_m", float),
    "sps": ("sps", int),
    "n_symbols": ("n_symbols", int),
    "launch_dbm": ("launch_dbm", float),
    "seed": ("seed", int),
    "fft_budget": ("fft_budget", float),
}
NLI_KEYS = {
    "nli_eta0": ("eta0", float),
    "nli_k_kurt": ("k_kurt", float),
    "nli_k_cross": ("k_cross", float),
    "nli_epsilon": ("epsilon", float),
}
ALL_KEYS = {**FIBER_KEYS, **LINK_KEYS, **SIM_KEYS, **NLI_KEYS}

REFERENCE_TEXT = """\
# reference link
symbol_rate_gbaud = 45
wdm_channels = 11
channel_spacing_ghz = 50
rrc_rolloff = 0.1
attenuation_db_km = 0.21
dispersion_ps_nm_km = 16.9
nonlinear_coeff_w_km = 1.31
span_length_km = 80
edfa_noise_figure_db = 5
center_wavelength_nm = 1550
"""


@dataclass(frozen=True)
class RunConfig:
    link: LinkSpec
    values: dict

    def sim_config(self, **overrides):
        kw = {attr: self.values[key] for key, (attr, _) in SIM_KEYS.items() if key in self.values}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return SimConfig(link=self.link, **kw)

    def nli_params(self):
        """Surrogate from ``nli_*`` keys; without ``nli_eta0`` the GN closed form is used."""
        kw = {attr: self.values[key] for key, (attr, _) in NLI_KEYS.items() if key in self.values}
        kw.setdefault("eta0", gn_eta0(self.link))
        return NliSurrogateParams(**kw)

    def snapshot(self):
        return dict(sorted(self.values.items()))


def parse_config(text, base=None):
    """Parse key-value text on top of ``base`` values (reference link by default)."""
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",)
    )
    try:
        parser.read_string("[gs4d]\n" + text)
    except configparser.Error as exc:
        raise ParseError(f"bad config: {exc}") from exc
    values = dict(base or {})
    for key, raw in parser["gs4d"].items():
        if key not in ALL_KEYS:
            raise BadParam(f"unknown config key {key!r}")
        conv = ALL_KEYS[key][1]
        try:
            values[key] = conv(raw)
        except ValueError as exc:
            raise ParseError(f"config key {key!r}: cannot read {raw!r} as {conv.__name__}") from exc
    return values


def default_values():
    return parse_config(REFERENCE_TEXT, {})


def build_run_config(values):
    fiber = FiberParams(**{attr: values[k] for k, (attr, _) in FIBER_KEYS.items() if k in values})
    link = LinkSpec(fiber=fiber, **{attr: values[k] for k, (attr, _) in LINK_KEYS.items() if k in values})
    return RunConfig(link, dict(values))


def load_config(path=None, **overrides):
    """Reference-link defaults, then the file at ``path``, then ``overrides`` (config key names)."""
    values = default_values()
    if path is not None:
        with open(path) as fh:
            values = parse_config(fh.read(), values)
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    return build_run_config(values)


def with_link(run, **changes):
    return replace(run, link=replace(run.link, **changes))
