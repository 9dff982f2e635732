"""Geometric shaping by multi-restart projected gradient ascent on GMI.

Labels stay frozen during coordinate search: row ``i`` keeps label ``i``.
Under the orthant-symmetric constraint only the first-orthant seed points
are free, and the sign bits come from :func:`orthant_expand`.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .catalog import CATALOG_NAMES, build_catalog_format
from .constellation import (
    LabeledConstellation,
    label_bits,
    moments,
    normalize_power,
    sign_patterns,
)
from .errors import BadParam, Gs4dError, InfeasibleConstraint, ModelDivergence
from .gmi import (
    _gh_value,
    gauss_hermite_rule,
    gmi_gh,
    gmi_gh_value_and_grad,
    sigma_from_snr_db,
    snr_for_target_gmi,
)
from .link import LinkSpec, NliSurrogateParams, ase_variance, snr_opt

CONSTRAINTS = ("unconstrained", "orthant_symmetric", "constant_modulus")
CONSTRAINT_ALIASES = {"none": "unconstrained", "os": "orthant_symmetric", "cm": "constant_modulus"}
MAX_CM_POINTS = 4096
N_DIMS = 4
SEED_FLOOR = 1e-6
CONV_WINDOW = 10
FD_STEP = 1e-4


@dataclass(frozen=True)
class OptimizerConfig:
    m: int
    constraint: str = "unconstrained"
    objective: str = "awgn"
    snr_db: float = None
    link: LinkSpec = None
    nli: NliSurrogateParams = None
    restarts: int = 8
    max_iters: int = 300
    step_init: float = 0.05
    conv_tol: float = 1e-5
    seed: int = 0
    gradient: str = "analytic"
    quad_order: int = 10
    workers: int = None

    def __post_init__(self):
        object.__setattr__(self, "constraint", CONSTRAINT_ALIASES.get(self.constraint, self.constraint))
        if self.constraint not in CONSTRAINTS:
            raise BadParam(f"unknown constraint {self.constraint!r}")
        if self.objective not in ("awgn", "model"):
            raise BadParam(f"objective must be 'awgn' or 'model', got {self.objective!r}")
        if not 2 <= self.m <= 16:
            raise BadParam(f"m must lie in 2..16, got {self.m}")
        if self.restarts < 1 or self.max_iters < 1:
            raise BadParam("restarts and max_iters must be >= 1")
        if not self.conv_tol > 0 or not self.step_init > 0:
            raise BadParam("conv_tol and step_init must be > 0")
        if self.gradient not in ("analytic", "fd"):
            raise BadParam(f"gradient must be 'analytic' or 'fd', got {self.gradient!r}")
        if self.constraint == "orthant_symmetric" and self.m < N_DIMS:
            raise InfeasibleConstraint(f"orthant symmetry needs m >= {N_DIMS}, got m={self.m}")
        if self.constraint == "constant_modulus" and 2**self.m > MAX_CM_POINTS:
            raise InfeasibleConstraint(f"constant modulus capped at M={MAX_CM_POINTS}")
        if self.objective == "model" and (self.link is None or self.nli is None):
            raise BadParam("model objective needs a link and surrogate parameters")

    @property
    def n_points(self):
        return 2**self.m

    def to_dict(self):
        d = asdict(self)
        d.pop("workers")
        return d


@dataclass
class RestartResult:
    index: int
    objective: float
    points: np.ndarray
    history: list
    termination: str
    init: str


@dataclass
class OptimizationTrace:
    history: list
    restart_objectives: list
    restart_histories: list
    restart_inits: list
    best_restart: int
    termination_reason: str
    final: LabeledConstellation
    snr_db: float = None
    wall_time_s: float = 0.0
    config: dict = field(default_factory=dict)

    def to_dict(self):
        """JSON-ready record; wall time is left out so reruns compare equal."""
        return {
            "config": self.config,
            "snr_db": self.snr_db,
            "best_restart": self.best_restart,
            "final_objective": self.history[-1],
            "termination_reason": self.termination_reason,
            "history": self.history,
            "restarts": [
                {"index": i, "init": init, "objective": obj, "iterations": len(h) - 1, "history": h}
                for i, (init, obj, h) in enumerate(
                    zip(self.restart_inits, self.restart_objectives, self.restart_histories)
                )
            ],
        }


# parameterizations: params -> normalized points, plus the adjoint map


def _normalize_with_adjoint(y):
    target = np.sqrt(y.shape[0] * y.shape[1] / 2.0)
    norm = np.linalg.norm(y)
    x = y * (target / norm)

    def back(gx):
        yh = y / norm
        return (target / norm) * (gx - np.sum(gx * yh) * yh)

    return x, back


class _Unconstrained:
    def points(self, theta):
        return _normalize_with_adjoint(theta)

    def project(self, theta):
        return theta


class _OrthantSymmetric:
    def __init__(self):
        self.signs = sign_patterns(N_DIMS)

    def expand(self, theta):
        return (self.signs[:, None, :] * theta[None, :, :]).reshape(-1, N_DIMS)

    def points(self, theta):
        x, back_norm = _normalize_with_adjoint(self.expand(theta))
        n_seed = theta.shape[0]

        def back(gx):
            gy = back_norm(gx).reshape(len(self.signs), n_seed, N_DIMS)
            return np.einsum("pd,psd->sd", self.signs, gy)

        return x, back

    def project(self, theta):
        scale = np.sqrt(np.mean(np.sum(theta**2, axis=1)))
        return np.maximum(theta, SEED_FLOOR * scale)


class _ConstantModulus:
    def points(self, theta):
        radius = np.sqrt(theta.shape[1] / 2.0)
        norms = np.linalg.norm(theta, axis=1, keepdims=True)
        unit = theta / norms
        x = radius * unit

        def back(gx):
            return (radius / norms) * (gx - np.sum(gx * unit, axis=1, keepdims=True) * unit)

        return x, back

    def project(self, theta):
        return theta / np.linalg.norm(theta, axis=1, keepdims=True)


def _parameterization(constraint):
    return {
        "unconstrained": _Unconstrained,
        "orthant_symmetric": _OrthantSymmetric,
        "constant_modulus": _ConstantModulus,
    }[constraint]()


# objectives: normalized points -> (value, d value / d points)


class _AwgnObjective:
    def __init__(self, sigma, order, rows=None, row_weight=1.0):
        self.sigma = float(sigma)
        self.rule = gauss_hermite_rule(order)
        self.rows = rows
        self.row_weight = row_weight

    def value(self, x):
        return _gh_value(x, self.sigma, self.rule.order, self.rows, self.row_weight)

    def value_and_grad(self, x):
        return gmi_gh_value_and_grad(x, self.sigma, self.rule, self.rows, self.row_weight)


def _moment_grads(x):
    """Gradients of mean excess kurtosis and cross4 with respect to the points."""
    n = x.shape[0]
    p = x[:, 0::2] ** 2 + x[:, 1::2] ** 2
    m2 = p.mean(axis=0)
    m4 = (p**2).mean(axis=0)
    dk_dp = (2 * p / m2**2 - 2 * m4 / m2**3) / n / 2.0
    e01 = np.mean(p[:, 0] * p[:, 1])
    dc_dp = np.empty_like(p)
    dc_dp[:, 0] = (p[:, 1] / (m2[0] * m2[1]) - e01 / (m2[0] ** 2 * m2[1])) / n
    dc_dp[:, 1] = (p[:, 0] / (m2[0] * m2[1]) - e01 / (m2[0] * m2[1] ** 2)) / n

    def to_x(dp):
        g = np.empty_like(x)
        g[:, 0::2] = 2 * x[:, 0::2] * dp
        g[:, 1::2] = 2 * x[:, 1::2] * dp
        return g

    return to_x(dk_dp), to_x(dc_dp)


class _ModelObjective:
    """GMI at the candidate's own optimum effective SNR on the configured link."""

    def __init__(self, link, nli, order, rows=None, row_weight=1.0):
        self.link = link
        self.nli = nli
        self.rule = gauss_hermite_rule(order)
        self.rows = rows
        self.row_weight = row_weight

    def sigma(self, x):
        try:
            so = snr_opt(moments(LabeledConstellation(x)), self.link, self.nli)
        except Gs4dError as exc:
            raise ModelDivergence(f"snr_opt failed: {exc}") from exc
        if so.linear_regime or not np.isfinite(so.snr_db):
            raise ModelDivergence("link is in the linear regime; optimum SNR is unbounded")
        return float(sigma_from_snr_db(so.snr_db))

    def _gmi(self, x, sigma):
        return gmi_gh_value_and_grad(x, sigma, self.rule, self.rows, self.row_weight)

    def value(self, x, sigma=None):
        sigma = self.sigma(x) if sigma is None else sigma
        return _gh_value(x, sigma, self.rule.order, self.rows, self.row_weight)

    def value_and_grad(self, x):
        sigma = self.sigma(x)
        value, grad = self._gmi(x, sigma)
        h = FD_STEP * sigma
        dg_dsigma = (self.value(x, sigma + h) - self.value(x, sigma - h)) / (2 * h)
        # sigma ~ eta^(1/6) since SNR_opt ~ eta^(-1/3)
        mom = moments(LabeledConstellation(x))
        eta_scale = 1.0 + self.nli.k_kurt * mom.kurt_excess + self.nli.k_cross * mom.cross4
        dk, dc = _moment_grads(x)
        dsigma = sigma / (6.0 * eta_scale) * (self.nli.k_kurt * dk + self.nli.k_cross * dc)
        return value, grad + dg_dsigma * dsigma


# initialization


def _orthant_form(c, tol=1e-12):
    """Bit-permuted copy of ``c`` in OS label order, or None if ``c`` is not OS.

    Permuting bit positions leaves GMI unchanged, so a catalog format whose
    sign flips are single-bit label flips can seed the OS search exactly.
    """
    m, n = c.bits, c.n_dims
    if m < n:
        return None
    idx = np.arange(c.n_points)
    sign_bit = []
    for j in range(n):
        refl = c.points.copy()
        refl[:, j] *= -1
        hit = [k for k in range(m) if k not in sign_bit
               and np.allclose(c.points[idx ^ (1 << (m - 1 - k))], refl, atol=tol)]
        if not hit:
            return None
        sign_bit.append(hit[0])
    order = sign_bit + [k for k in range(m) if k not in sign_bit]
    bits = label_bits(c.n_points)
    new_label = bits[:, order] @ (1 << np.arange(m - 1, -1, -1))
    pts = np.empty_like(c.points)
    pts[new_label] = c.points
    seed = pts[: c.n_points >> n]
    if np.any(seed <= 0):
        return None
    return LabeledConstellation(pts, c.name)


def _grid_seed(n_seed):
    """Lowest-energy first-orthant points of the odd-integer grid, Gray-ordered per axis."""
    side = 1
    while side**N_DIMS < n_seed:
        side += 1
    levels = 2 * np.arange(side) + 1
    grid = np.stack(np.meshgrid(*[levels] * N_DIMS, indexing="ij"), axis=-1).reshape(-1, N_DIMS)
    energy = np.sum(grid**2, axis=1)
    order = np.lexsort(tuple(grid[:, ::-1].T) + (energy,))
    return grid[order[:n_seed]].astype(float)


def _catalog_candidates(m, constraint):
    out = []
    for name in CATALOG_NAMES:
        c = build_catalog_format(name)
        if c.bits != m:
            continue
        if constraint == "orthant_symmetric":
            c = _orthant_form(c)
        elif constraint == "constant_modulus":
            norms = np.sum(c.points**2, axis=1)
            if np.ptp(norms) > 1e-9:
                c = None
        if c is not None:
            out.append(c)
    return out


def best_catalog_format(m, constraint="unconstrained", snr_db=None):
    """Catalog format of ``m`` bits meeting ``constraint``: highest GMI at ``snr_db``,
    or lowest 0.85m threshold SNR when ``snr_db`` is None."""
    cands = _catalog_candidates(m, constraint)
    if not cands:
        return None
    if snr_db is None:
        scores = [-snr_for_target_gmi(c, 0.85 * m) for c in cands]
    else:
        sigma = float(sigma_from_snr_db(snr_db))
        scores = [gmi_gh(c, sigma).value for c in cands]
    return cands[int(np.argmax(scores))]


def default_snr_db(m):
    """Operating point: SNR where the best unconstrained catalog format of ``m`` bits hits 0.85m."""
    c = best_catalog_format(m)
    if c is None:
        raise BadParam(f"no catalog format with m={m}; pass an explicit SNR")
    return snr_for_target_gmi(c, 0.85 * m)


def _theta_from_points(points, constraint):
    if constraint == "orthant_symmetric":
        return points[: len(points) >> N_DIMS].copy()
    return points.copy()


def _initial_thetas(cfg, catalog_start):
    inits = []
    for r in range(cfg.restarts):
        if r == 0 and catalog_start is not None:
            inits.append((_theta_from_points(catalog_start.points, cfg.constraint),
                          f"catalog:{catalog_start.name}"))
            continue
        if r == 0 and cfg.constraint == "orthant_symmetric":
            inits.append((_grid_seed(cfg.n_points >> N_DIMS), "grid"))
            continue
        rng = np.random.default_rng([cfg.seed, r])
        if cfg.constraint == "orthant_symmetric":
            theta = rng.uniform(0.0, 1.0, size=(cfg.n_points >> N_DIMS, N_DIMS))
            theta = np.maximum(theta, SEED_FLOOR)
        elif cfg.constraint == "constant_modulus":
            theta = rng.standard_normal((cfg.n_points, N_DIMS))
        else:
            theta = rng.uniform(-1.0, 1.0, size=(cfg.n_points, N_DIMS))
        inits.append((theta, "random"))
    return inits


# search loop


def _fd_grad(objective, x, h=FD_STEP):
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (objective.value(xp) - objective.value(xm)) / (2 * h)
    return g


def _ascend(theta, param, objective, cfg):
    def evaluate(t, want_grad):
        x, back = param.points(t)
        if not want_grad:
            return objective.value(x), None
        if cfg.gradient == "fd":
            return objective.value(x), back(_fd_grad(objective, x))
        v, gx = objective.value_and_grad(x)
        return v, back(gx)

    theta = param.project(theta)
    value, grad = evaluate(theta, True)
    history = [float(value)]
    step = cfg.step_init
    reason = "max_iters"
    for it in range(cfg.max_iters):
        gnorm = np.linalg.norm(grad)
        if not gnorm > 0:
            reason = "zero_gradient"
            break
        direction = grad * (np.linalg.norm(theta) / gnorm)
        accepted = False
        while step > 1e-9:
            cand = param.project(theta + step * direction)
            try:
                cand_value, _ = evaluate(cand, False)
            except ModelDivergence:
                cand_value = -np.inf
            if cand_value > value:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            history.append(float(value))
            reason = "step_underflow"
            break
        theta = cand
        value, grad = evaluate(theta, True)
        history.append(float(value))
        step = min(step * 1.5, 1.0)
        if len(history) > CONV_WINDOW and history[-1] - history[-1 - CONV_WINDOW] < cfg.conv_tol:
            reason = "converged"
            break
    x, _ = param.points(theta)
    return x, history, reason


def _make_objective(cfg, sigma):
    rows, weight = None, 1.0
    if cfg.constraint == "orthant_symmetric":
        rows = np.arange(cfg.n_points >> N_DIMS)
        weight = float(2**N_DIMS)
    if cfg.objective == "model":
        return _ModelObjective(cfg.link, cfg.nli, cfg.quad_order, rows, weight)
    return _AwgnObjective(sigma, cfg.quad_order, rows, weight)


def _run_restart(args):
    cfg, sigma, index, theta, init = args
    param = _parameterization(cfg.constraint)
    objective = _make_objective(cfg, sigma)
    x, history, reason = _ascend(np.array(theta, dtype=float), param, objective, cfg)
    return RestartResult(index, history[-1], x, history, reason, init)


def _worker_count(cfg):
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    env = os.environ.get("GS4D_THREADS")
    return max(1, int(env)) if env else 1


def _run(cfg, sigma, catalog_start, name):
    t0 = time.perf_counter()
    jobs = [(cfg, sigma, r, th, init) for r, (th, init) in enumerate(_initial_thetas(cfg, catalog_start))]
    workers = min(_worker_count(cfg), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_restart, jobs))
    else:
        results = [_run_restart(j) for j in jobs]
    # max objective, lowest restart index on ties
    best = max(results, key=lambda r: (r.objective, -r.index))
    final = normalize_power(LabeledConstellation(best.points, name))
    history, running = [], -np.inf
    for r in results:
        for v in r.history:
            running = max(running, v)
            history.append(float(running))
    trace = OptimizationTrace(
        history=history,
        restart_objectives=[r.objective for r in results],
        restart_histories=[r.history for r in results],
        restart_inits=[r.init for r in results],
        best_restart=best.index,
        termination_reason=best.termination,
        final=final,
        wall_time_s=time.perf_counter() - t0,
        config=cfg.to_dict(),
    )
    return final, trace


def _result_name(cfg):
    tag = {"unconstrained": "GS", "orthant_symmetric": "OS", "constant_modulus": "CM"}[cfg.constraint]
    return f"4D-{tag}{cfg.n_points}"


def optimize_awgn(cfg):
    """Maximize GMI at a fixed AWGN SNR under ``cfg.constraint``.

    Restart 0 starts from the best catalog format satisfying the constraint
    (if any), the others from seeded uniform random points.
    """
    if cfg.objective != "awgn":
        raise BadParam("optimize_awgn needs objective='awgn'")
    snr_db = cfg.snr_db if cfg.snr_db is not None else default_snr_db(cfg.m)
    start = best_catalog_format(cfg.m, cfg.constraint, snr_db)
    final, trace = _run(cfg, float(sigma_from_snr_db(snr_db)), start, _result_name(cfg))
    trace.snr_db = float(snr_db)
    return final, trace


def optimize_model(cfg):
    """Maximize GMI at the candidate's own optimum effective SNR on ``cfg.link``."""
    if cfg.objective != "model":
        raise BadParam("optimize_model needs objective='model'")
    if ase_variance(cfg.link) <= 0:
        raise ModelDivergence("link has no ASE noise; optimum SNR is unbounded")
    cands = _catalog_candidates(cfg.m, cfg.constraint)
    start = None
    if cands:
        obj = _ModelObjective(cfg.link, cfg.nli, cfg.quad_order)
        start = max(cands, key=lambda c: obj.value(c.points))
    final, trace = _run(cfg, None, start, _result_name(cfg))
    so = snr_opt(final, cfg.link, cfg.nli)
    trace.snr_db = float(so.snr_db)
    return final, trace


def label_swap_search(c, sigma_z, rule=None, seed=0, threshold=1e-12):
    """Greedy pairwise label swapping; returns a relabeled copy with GMI never lower.

    Every pass tests all ``M(M-1)/2`` swaps (a seeded random ``10 M`` subset
    when ``M > 256``) and applies the best strictly improving one.
    """
    rng = np.random.default_rng(seed)
    order = np.arange(c.n_points)
    best = gmi_gh(c, sigma_z, rule).value
    pairs = [(i, j) for i in range(c.n_points) for j in range(i + 1, c.n_points)] \
        if c.n_points <= 256 else None
    while True:
        if pairs is None:
            cand = rng.integers(0, c.n_points, size=(10 * c.n_points, 2))
            trial = [(int(i), int(j)) for i, j in cand if i != j]
        else:
            trial = pairs
        best_swap, best_val = None, best
        for i, j in trial:
            o = order.copy()
            o[i], o[j] = o[j], o[i]
            v = gmi_gh(c.relabeled(o), sigma_z, rule).value
            if v > best_val + threshold:
                best_swap, best_val = (i, j), v
        if best_swap is None:
            return c.relabeled(order)
        i, j = best_swap
        order[i], order[j] = order[j], order[i]
        best = best_val
