"""Time integration of the scalar potential flow.

The flow is d(phi)/dt = log(volume ratio of g_t + hess phi against g_t)
minus the curvature potential of g_t.  Stepping is stabilized
semi-implicit Euler: the update

    phi+ = L^{-1} [ phi + dt (rhs(phi, t) - kappa/4 * lap phi) ],
    L = 1 - dt * kappa/4 * lap,

is inverted exactly in Fourier space; algebraically this damps the high
modes of the rhs by 1/(1 + dt kappa |pi k|^2) before the explicit add,
which removes the stiffness of log det near flat metrics.  The mean of
phi is never renormalized: the source-term normalization already fixes
the additive gauge, and renormalizing would break shift equivariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels, spectral
from .errors import (
    ConfigError,
    FlowAbortError,
    GeometryDegenerateError,
    PositivityLostError,
)
from .geometry import BackgroundFamily, background_form, ricci_potential
from .grid import PeriodicGrid, ScalarField, volume_normalization
from .trace import CANONICAL_COLUMNS, EstimateTrace, make_cutoff

_EXTRA_COLUMNS = (
    "sup_abs_h",
    "h_residual",
    "lp_plain",
    "a1_rate",
    "a1b_rate",
    "a2_chi",
    "a3_grad",
    "a4_rate",
    "m_chi",
    "dissipation",
    "min_eig_bg",
    "mass_defect",
)


@dataclass
class FlowState:
    """Snapshot of the trajectory with cached ratio and right-hand side."""

    t: float
    phi: ScalarField
    ratio: ScalarField
    phidot: ScalarField


@dataclass
class FlowConfig:
    background: BackgroundFamily
    t_end: float = 0.1
    dt_max: float = 1e-2
    dt_init: float = 1e-3
    kappa: float = 1.0
    time_grid: str = "geometric"  # geometric | uniform
    geometric_ratio: float = 1.3
    t_floor: float = 0.0  # 0 -> 1e-6 * t_end
    sample_times: tuple = ()
    retry_shrink: float = 0.5
    dt_min: float = 1e-12
    refine: int = 0
    lp_p: float = 3.0
    lp_lambda: float = 0.0  # 0 -> background default
    cutoff_kind: str = "one_plus_cos"

    def validate(self) -> None:
        if self.t_end <= 0.0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.t_end > self.background.horizon * (1.0 + 1e-12):
            raise ConfigError(
                f"t_end {self.t_end:g} exceeds the background horizon "
                f"{self.background.horizon:g}"
            )
        if self.time_grid not in ("geometric", "uniform"):
            raise ConfigError(f"unknown time grid kind: {self.time_grid}")
        if not 0.0 < self.retry_shrink < 1.0:
            raise ConfigError("retry_shrink must be in (0, 1)")
        if self.kappa < 0.0:
            raise ConfigError("kappa must be >= 0")
        if self.geometric_ratio <= 1.0:
            raise ConfigError("geometric_ratio must be > 1")
        ts = sorted(self.sample_times)
        if ts and (ts[0] < 0.0 or ts[-1] > self.t_end * (1.0 + 1e-12)):
            raise ConfigError("sample_times must lie inside [0, t_end]")

    def resolved_lambda(self) -> float:
        return self.lp_lambda if self.lp_lambda > 0.0 else self.background.lambda_default()


def build_time_grid(cfg: FlowConfig):
    """Node times (0 ... t_end) and the mask of requested sample nodes.

    Nodes are the observation times: trace rows land on them.  The refine
    parameter does not change them; it subdivides the integration substeps
    between nodes, so refinement studies compare identical observation
    grids.
    """
    t_end = cfg.t_end
    tol = 1e-12 * max(t_end, 1.0)
    if cfg.time_grid == "uniform":
        dt = min(cfg.dt_init if cfg.dt_init > 0 else cfg.dt_max, cfg.dt_max)
        count = max(1, int(math.ceil(t_end / dt - 1e-12)))
        nodes = [t_end * i / count for i in range(count + 1)]
    else:
        floor = cfg.t_floor if cfg.t_floor > 0 else 1e-6 * t_end
        nodes = [0.0, min(floor, t_end)]
        while nodes[-1] < t_end - tol:
            nodes.append(min(nodes[-1] * cfg.geometric_ratio,
                             nodes[-1] + cfg.dt_max, t_end))
    nodes = np.array(nodes)
    samples = np.array(sorted(set(float(s) for s in cfg.sample_times)))
    if samples.size:
        for s in samples:
            nodes[np.abs(nodes - s) <= tol] = s
        nodes = np.unique(np.concatenate([nodes, samples]))
        mask = np.isin(nodes, samples)
    else:
        nodes = np.unique(nodes)
        mask = np.ones(nodes.size, dtype=bool)
    return nodes, mask


def _substeps(a: float, b: float, refine: int):
    """Integration targets strictly inside (a, b], 2^refine equal pieces."""
    if refine <= 0:
        return (b,)
    count = 2 ** refine
    return tuple(a + (b - a) * i / count for i in range(1, count + 1))


def rhs(phi: ScalarField, t: float, bg: BackgroundFamily) -> ScalarField:
    """log(volume ratio) - curvature potential, at the given time."""
    state = _make_state(phi, t, bg)[0]
    return state.phidot


class _BackgroundCache:
    """Form, potential and determinant of g_t, reused across retries.

    Also asserts the margin invariant at every visited time: inside the
    validity horizon the background never drops below its margin.
    """

    def __init__(self, bg: BackgroundFamily):
        self.bg = bg
        self._t = None
        self._data = None

    def at(self, t: float):
        if self._t != t:
            if self.bg.min_eig_at(t) < self.bg.margin - 1e-12:
                raise GeometryDegenerateError(
                    f"background margin violated at t={t:.6g}: "
                    f"min eigenvalue {self.bg.min_eig_at(t):.6g} < {self.bg.margin:g}"
                )
            g = background_form(self.bg, t)
            h, _ = ricci_potential(self.bg, t)
            det = kernels.det_herm(g.flat())
            self._data = (g, h, det)
            self._t = t
        return self._data


def _assemble_state(phi: ScalarField, t: float, g, h, det_bg):
    """Build a coherent FlowState; raises PositivityLostError off the cone."""
    grid = phi.grid
    n = grid.complex_dim
    hess = spectral.complex_hessian_values(grid, phi.values)
    gphi_flat = g.flat() + hess.reshape(grid.point_count, n, n)
    lo = kernels.eig_range_herm(gphi_flat)[:, 0]
    lo_min = lo.min()
    if lo_min <= 0.0:
        worst = int(np.argmin(lo))
        raise PositivityLostError(
            f"deformed metric lost positivity at t={t:.6g} "
            f"(min eigenvalue {lo_min:.6g} at flat index {worst})",
            point=worst, value=float(lo_min),
        )
    ratio_vals = kernels.det_herm(gphi_flat) / det_bg
    ratio = ScalarField(grid, ratio_vals.reshape(grid.shape))
    phidot = ScalarField(grid, np.log(ratio.values) - h.values)
    state = FlowState(t=t, phi=phi, ratio=ratio, phidot=phidot)
    aux = {"g": g, "h": h, "det_bg": det_bg, "hess": hess, "gphi_flat": gphi_flat}
    return state, aux


def _make_state(phi: ScalarField, t: float, bg: BackgroundFamily):
    g = background_form(bg, t)
    h, _ = ricci_potential(bg, t)
    det = kernels.det_herm(g.flat())
    return _assemble_state(phi, t, g, h, det)


def _stab_multiplier(grid: PeriodicGrid) -> np.ndarray:
    """Sum over axes of (pi k)^2: the -1/4 lap multiplier, nonnegative."""
    out = np.zeros((1,) * grid.real_dim)
    for axis in range(grid.real_dim):
        shape = [1] * grid.real_dim
        shape[axis] = grid.resolution
        out = out + ((np.pi * grid.freqs) ** 2).reshape(shape)
    return out


def step(state: FlowState, dt: float, cfg: FlowConfig) -> FlowState:
    """One stabilized semi-implicit step; raises PositivityLostError on reject."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    bg_cache = _BackgroundCache(cfg.background)
    return _step_cached(state, dt, cfg, bg_cache, _stab_multiplier(state.phi.grid))[0]


def _step_cached(state: FlowState, dt: float, cfg: FlowConfig, bg_cache, qhat):
    grid = state.phi.grid
    t_new = state.t + dt
    g, h, det_bg = bg_cache.at(t_new)
    phi_hat = spectral.forward(grid, state.phi.values)
    rhs_hat = spectral.forward(grid, state.phidot.values)
    # equals L^{-1}[phi + dt (rhs - kappa/4 lap phi)] with L = 1 - dt kappa/4 lap
    phi_new_hat = phi_hat + dt * rhs_hat / (1.0 + dt * cfg.kappa * qhat)
    phi_new = ScalarField(grid, spectral.inverse_real(phi_new_hat))
    return _assemble_state(phi_new, t_new, g, h, det_bg)


@dataclass
class RunResult:
    """Trajectory samples, the dense estimate trace, and run bookkeeping."""

    config: FlowConfig
    grid: PeriodicGrid
    times: np.ndarray
    sample_mask: np.ndarray
    trace: EstimateTrace
    states: list
    phi0: ScalarField
    f0: ScalarField
    aborted: bool = False
    abort_message: str = ""
    n_steps: int = 0
    n_rejects: int = 0

    @property
    def background(self) -> BackgroundFamily:
        return self.config.background

    def sampled_times(self) -> np.ndarray:
        return self.times[: len(self.trace.times)][self.sample_mask[: len(self.trace.times)]]


class _Recorder:
    """Computes every trace column at a node (one pass, shared transforms)."""

    def __init__(self, cfg: FlowConfig, grid: PeriodicGrid):
        self.cfg = cfg
        self.grid = grid
        self.norm = volume_normalization(grid.complex_dim)
        self.cutoff = make_cutoff(grid, cfg.cutoff_kind)
        self.lam = cfg.resolved_lambda()
        self.p = cfg.lp_p
        self.f0_values = None
        self.data = {name: [] for name in CANONICAL_COLUMNS[1:] + _EXTRA_COLUMNS}
        self.times = []

    def record(self, state: FlowState, aux) -> None:
        grid = self.grid
        n = grid.complex_dim
        f = state.ratio.values
        phi = state.phi.values
        phid = state.phidot.values
        t = state.t
        det_bg = aux["det_bg"].reshape(grid.shape)
        hess_flat = aux["hess"].reshape(grid.point_count, n, n)
        gphi_flat = aux["gphi_flat"]
        h_vals = aux["h"].values
        if self.f0_values is None:
            self.f0_values = f.copy()

        ginv_phi = kernels.inv_herm(gphi_flat)
        gt_inv = kernels.inv_herm(aux["g"].flat())
        w_t = det_bg * self.norm          # density of the background form
        w_phi = w_t * f                   # density of the deformed form
        vol_t = float(w_t.mean())

        def mean_(x):
            return float(x.mean())

        def grad_sq(values_real):
            v = spectral.holo_gradient(grid, values_real)
            out = 2.0 * kernels.quad_form(ginv_phi, v.reshape(grid.point_count, n))
            return np.maximum(out, 0.0).reshape(grid.shape)

        rec = self.data
        self.times.append(t)
        rec["sup_phi"].append(float(phi.max()))
        rec["inf_phi"].append(float(phi.min()))
        rec["sup_phidot"].append(float(np.abs(phid).max()))
        rec["min_f"].append(float(f.min()))
        rec["max_f"].append(float(f.max()))
        rec["l2_f_minus_f0"].append(
            math.sqrt(mean_((f - self.f0_values) ** 2) * self.norm))

        f_mod = f * np.exp(-self.lam * phi)
        rec["lp_trace"].append(mean_(f_mod ** self.p * np.exp(self.lam * phi) * w_t))
        rec["lp_plain"].append(mean_(f ** self.p * w_t) ** (1.0 / self.p))

        tr_bg = grid.complex_dim + kernels.trace_pair(gt_inv, hess_flat)
        rec["trace_sup"].append(float(tr_bg.max()))

        t3 = spectral.third_derivatives(grid, phi)
        s_vals = kernels.third_contract(ginv_phi, t3.reshape(grid.point_count, n, n, n))
        rec["S_sup"].append(float(s_vals.max()))

        with np.errstate(divide="ignore", invalid="ignore"):
            flogf = np.where(f > 0.0, f * np.log(np.maximum(f, 1e-300)), 0.0)
        rec["k_energy"].append(mean_(flogf * w_t) / vol_t)

        rec["F_plus_sup"].append(float((-phi + t * phid).max()))
        rec["F_minus_inf"].append(float((phi + t * phid).min()))

        rec["sup_abs_h"].append(float(np.abs(h_vals).max()))
        rec["h_residual"].append(float(np.abs(np.log(f) - phid - h_vals).max()))

        gnf = grad_sq(f)
        rec["a1_rate"].append(mean_(f * gnf * w_t))
        gnphi = grad_sq(phi)
        rec["a3_grad"].append(mean_(gnphi * w_phi))
        rec["a1b_rate"].append(mean_(f_mod ** 2 * gnphi * w_phi))
        chi = self.cutoff.field.values
        gnchi = self.cutoff.grad_norm_sq_in(ginv_phi).values
        rec["a2_chi"].append(mean_(gnchi * w_phi))
        tr_rev = kernels.trace_pair(ginv_phi, aux["g"].flat()).reshape(grid.shape)
        rec["a4_rate"].append(mean_(chi * f ** 2 * tr_rev * w_t))
        rec["m_chi"].append(mean_(chi * f ** 2 * w_t))
        rec["dissipation"].append(mean_(grad_sq(phid) * w_phi) / vol_t)
        rec["min_eig_bg"].append(self.cfg.background.min_eig_at(t))
        rec["mass_defect"].append(abs(mean_(f * w_t) - vol_t) / vol_t)

    def finish(self, sample_mask, metadata) -> EstimateTrace:
        times = np.array(self.times)
        columns = {k: np.array(v) for k, v in self.data.items()}
        tr = EstimateTrace(times=times, columns=columns,
                           sample_mask=np.asarray(sample_mask[: times.size]),
                           metadata=dict(metadata))
        tr.validate()
        return tr


def run(cfg: FlowConfig, phi0: ScalarField) -> RunResult:
    """Integrate from t=0 to t_end on the configured grid, recording a trace.

    Deterministic: identical config and initial data reproduce the trace
    bitwise.  On unrecoverable positivity loss the partial trajectory is
    returned with aborted=True instead of raising.
    """
    cfg.validate()
    grid = phi0.grid
    bg = cfg.background
    times, sample_mask = build_time_grid(cfg)
    recorder = _Recorder(cfg, grid)
    bg_cache = _BackgroundCache(bg)
    qhat = _stab_multiplier(grid)
    states: list = []
    n_steps = 0
    n_rejects = 0
    aborted = False
    abort_message = ""

    def keep(state):
        states.append(state)

    meta = {
        "grid_n": grid.complex_dim,
        "grid_resolution": grid.resolution,
        "static_background": bg.is_static,
        "t_end": cfg.t_end,
    }
    try:
        g, h, det = bg_cache.at(0.0)
        state, aux = _assemble_state(phi0, 0.0, g, h, det)
    except PositivityLostError as exc:
        trace = recorder.finish(sample_mask, dict(meta, aborted=True))
        return RunResult(cfg, grid, times, sample_mask, trace, [], phi0,
                         ScalarField.zeros(grid), aborted=True,
                         abort_message=f"initial data off the cone: {exc}")

    f0 = state.ratio.copy()
    recorder.record(state, aux)
    if sample_mask[0]:
        keep(state)

    tiny = 1e-15 * max(cfg.t_end, 1.0)
    for idx, target in enumerate(times[1:], start=1):
        try:
            for sub in _substeps(float(times[idx - 1]), float(target), cfg.refine):
                dt_next = sub - state.t
                while state.t < sub - tiny:
                    dt_try = min(dt_next, sub - state.t)
                    try:
                        state, aux = _step_cached(state, dt_try, cfg, bg_cache, qhat)
                        n_steps += 1
                        dt_next = 2.0 * dt_try  # gentle regrowth after a success
                    except PositivityLostError as exc:
                        n_rejects += 1
                        dt_try *= cfg.retry_shrink
                        if dt_try < cfg.dt_min:
                            raise FlowAbortError(
                                f"step below dt_min={cfg.dt_min:g} near "
                                f"t={state.t:.6g}: {exc}"
                            ) from exc
                        dt_next = dt_try
                state = replace(state, t=float(sub))
        except FlowAbortError as exc:
            aborted = True
            abort_message = str(exc)
            break
        state = replace(state, t=float(target))  # exact node landing
        recorder.record(state, aux)
        if sample_mask[idx]:
            keep(state)

    trace = recorder.finish(sample_mask, dict(meta, aborted=aborted))
    return RunResult(cfg, grid, times, sample_mask, trace, states, phi0, f0,
                     aborted=aborted, abort_message=abort_message,
                     n_steps=n_steps, n_rejects=n_rejects)


@dataclass
class ComparisonResult:
    times: np.ndarray
    gap: np.ndarray               # sup |phi_A - phi_B| per node
    gap_initial: float
    gap_max: float
    passed: bool
    fitted_slack: float           # max excess over gap(0), per unit dt
    aborted: bool = False


def comparison_run(cfg: FlowConfig, phi0_a: ScalarField, phi0_b: ScalarField,
                   rel_tol: float = 1e-2) -> ComparisonResult:
    """Run two flows in lockstep on the identical grid and compare sup gaps.

    The sup distance between two solutions never exceeds its initial value
    for the continuum flow; the discrete check allows rel_tol slack.
    """
    cfg.validate()
    times, _ = build_time_grid(cfg)
    bg_cache = _BackgroundCache(cfg.background)
    qhat = _stab_multiplier(phi0_a.grid)
    g, h, det = bg_cache.at(0.0)
    state_a, _ = _assemble_state(phi0_a, 0.0, g, h, det)
    state_b, _ = _assemble_state(phi0_b, 0.0, g, h, det)
    gaps = [float(np.abs(state_a.phi.values - state_b.phi.values).max())]
    aborted = False
    dt_scale = 0.0
    for idx, target in enumerate(times[1:], start=1):
        try:
            state_a = _advance_plain(state_a, float(times[idx - 1]), float(target),
                                     cfg, bg_cache, qhat)
            state_b = _advance_plain(state_b, float(times[idx - 1]), float(target),
                                     cfg, bg_cache, qhat)
        except FlowAbortError:
            aborted = True
            break
        gaps.append(float(np.abs(state_a.phi.values - state_b.phi.values).max()))
        dt_scale = max(dt_scale, float(target) - times[idx - 1])
    gaps_arr = np.array(gaps)
    gap0 = float(gaps_arr[0])
    gap_max = float(gaps_arr.max())
    tol = rel_tol * gap0 + 1e-12
    excess = max(0.0, gap_max - gap0)
    return ComparisonResult(
        times=times[: gaps_arr.size], gap=gaps_arr, gap_initial=gap0,
        gap_max=gap_max, passed=(not aborted) and gap_max <= gap0 + tol,
        fitted_slack=excess / dt_scale if dt_scale > 0 else 0.0,
        aborted=aborted,
    )


def _advance_plain(state: FlowState, prev: float, target: float,
                   cfg: FlowConfig, bg_cache, qhat):
    """Advance to an exact node time with the retry ladder, no recording."""
    tiny = 1e-15 * max(cfg.t_end, 1.0)
    for sub in _substeps(prev, target, cfg.refine):
        dt_next = sub - state.t
        while state.t < sub - tiny:
            dt_try = min(dt_next, sub - state.t)
            try:
                state, _ = _step_cached(state, dt_try, cfg, bg_cache, qhat)
                dt_next = 2.0 * dt_try
            except PositivityLostError as exc:
                dt_try *= cfg.retry_shrink
                if dt_try < cfg.dt_min:
                    raise FlowAbortError(
                        f"step below dt_min near t={state.t:.6g}: {exc}") from exc
                dt_next = dt_try
        state = replace(state, t=float(sub))
    return replace(state, t=float(target))


@dataclass
class SweepPair:
    s_hi: float
    s_lo: float
    gap_initial: float
    gap_max: float
    passed: bool


@dataclass
class SweepResult:
    s_values: tuple
    results: list          # RunResult per s, same order as s_values
    pairs: list            # SweepPair per consecutive pair
    cauchy_passed: bool
    gaps_monotone: bool


def s_sweep(cfg: FlowConfig, phi0: ScalarField, s_list, tau0: float | None = None,
            rel_tol: float = 1e-2) -> SweepResult:
    """Flows from the blending family members, with the uniform Cauchy check.

    For consecutive s > s', the sampled sup gap between the two solutions
    must stay within rel_tol of the initial gap; gaps must also shrink as
    the family parameters approach each other.
    """
    from .initial_data import approx_family

    s_values = tuple(float(s) for s in s_list)
    if any(not 0.0 < s <= 1.0 for s in s_values):
        raise ConfigError("sweep values must lie in (0, 1]")
    if list(s_values) != sorted(s_values, reverse=True):
        raise ConfigError("sweep values must be descending")
    results = []
    for s in s_values:
        results.append(run(cfg, approx_family(phi0, s, tau0)))
    pairs = []
    for (s_hi, res_hi), (s_lo, res_lo) in zip(
            zip(s_values, results), zip(s_values[1:], results[1:])):
        if res_hi.aborted or res_lo.aborted:
            pairs.append(SweepPair(s_hi, s_lo, math.nan, math.inf, False))
            continue
        gap0 = float(np.abs(res_hi.phi0.values - res_lo.phi0.values).max())
        gap_max = gap0
        for st_hi, st_lo in zip(res_hi.states, res_lo.states):
            gap_max = max(gap_max, float(
                np.abs(st_hi.phi.values - st_lo.phi.values).max()))
        passed = gap_max <= gap0 * (1.0 + rel_tol) + 1e-12
        pairs.append(SweepPair(s_hi, s_lo, gap0, gap_max, passed))
    gaps = [p.gap_initial for p in pairs]
    monotone = all(b <= a * (1.0 + 1e-9) for a, b in zip(gaps[:-1], gaps[1:]))
    return SweepResult(
        s_values=s_values, results=results, pairs=pairs,
        cauchy_passed=all(p.passed for p in pairs), gaps_monotone=monotone,
    )
