"""Estimate monitors: pass/fail verdicts with fitted constants.

Each monitor is a pure function of a finished trajectory (its trace and
stored fields), so re-running a monitor on the same trajectory reproduces
the verdict bitwise.  Non-explicit "uniform constant" statements become
fitted constants; their stability under refinement is exercised by the
study driver, not here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedConfigurationError
from .flow import ComparisonResult, RunResult
from .grid import volume_normalization

JENSEN_FLOOR = -1e-10
MASS_TOL = 1e-8
INCREMENT_TOL = 1e-8


@dataclass
class MonitorVerdict:
    name: str
    passed: bool | None  # None = inconclusive
    constants: dict = field(default_factory=dict)
    worst_margin: float = 0.0
    note: str = ""

    @property
    def status(self) -> str:
        if self.passed is None:
            return "INCONCLUSIVE"
        return "PASS" if self.passed else "FAIL"


# ---------------------------------------------------------------------------
# small deterministic fit helpers

def cumulative_trapezoid(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    if t.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def fit_nonneg_pair(b1: np.ndarray, b2: np.ndarray, y: np.ndarray):
    """Least squares y ~ c1 b1 + c2 b2 with c1, c2 >= 0 (tiny active set)."""

    def sse(c1, c2):
        r = y - c1 * b1 - c2 * b2
        return float(r @ r)

    a11 = float(b1 @ b1)
    a12 = float(b1 @ b2)
    a22 = float(b2 @ b2)
    r1 = float(b1 @ y)
    r2 = float(b2 @ y)
    cands = [(0.0, 0.0)]
    if a11 > 0:
        cands.append((max(0.0, r1 / a11), 0.0))
    if a22 > 0:
        cands.append((0.0, max(0.0, r2 / a22)))
    det = a11 * a22 - a12 * a12
    if det > 0:
        c1 = (r1 * a22 - r2 * a12) / det
        c2 = (r2 * a11 - r1 * a12) / det
        if c1 >= 0.0 and c2 >= 0.0:
            cands.append((c1, c2))
    best = min(cands, key=lambda c: sse(*c))
    resid = float(np.abs(y - best[0] * b1 - best[1] * b2).max()) if y.size else 0.0
    return best[0], best[1], resid


def fit_growth_curve(t: np.ndarray, y: np.ndarray):
    """Envelope fit y <= y[0] exp(K t) + Kp t with K, Kp >= 0.

    For each K on a scanned grid the linear coefficient is the clamped
    least-squares one; the fit quality is the one-sided excess of the data
    above the curve (data falling below its envelope is fine), with the
    squared misfit as tiebreak.  Returns (K, Kp, max one-sided excess).
    Deterministic.
    """
    y0 = float(y[0])
    den = float(t @ t)

    def eval_k(k):
        base = y0 * np.exp(k * t)
        kp = max(0.0, float((y - base) @ t) / den) if den > 0 else 0.0
        resid = y - base - kp * t
        excess = float(np.maximum(resid, 0.0).max())
        return excess, float(resid @ resid), kp

    horizon = float(t[-1]) if t[-1] > 0 else 1.0
    lo, hi = 0.0, 30.0 / horizon
    best_k = 0.0
    best = eval_k(0.0)
    for _ in range(3):
        grid = np.linspace(max(lo, 0.0), hi, 241)
        for k in grid:
            cand = eval_k(float(k))
            if (cand[0], cand[1]) < (best[0], best[1]):
                best_k, best = float(k), cand
        span = (hi - lo) / 240.0
        lo, hi = best_k - 2 * span, best_k + 2 * span
    return best_k, best[2], best[0]


def fit_power_law(t: np.ndarray, m: np.ndarray):
    """Least squares of log m against log t; m ~ C t^(-alpha)."""
    lt = np.log(t)
    lm = np.log(m)
    slope, intercept = np.polyfit(lt, lm, 1)
    return float(math.exp(intercept)), float(-slope)


def aitken_limit(seq: np.ndarray) -> float:
    """Aitken extrapolated limit from the last three terms, clamped to [0, last]."""
    e0, e1, e2 = float(seq[-3]), float(seq[-2]), float(seq[-1])
    d1, d2 = e1 - e0, e2 - e1
    den = d2 - d1
    if abs(den) < 1e-300:
        return max(0.0, e2)
    est = e2 - d2 * d2 / den
    return float(min(max(est, 0.0), max(e2, 0.0)))


# ---------------------------------------------------------------------------
# the scalar inequality shipped with the monitor library

def volume_log_lhs(x, n: int):
    """x^(-1/n) + 4 log x, the convex combination controlling the lower barrier."""
    x = np.asarray(x, dtype=np.float64)
    return x ** (-1.0 / n) + 4.0 * np.log(x)


def volume_log_floor(n: int) -> float:
    """4n(1 - log(4n)); attained exactly at x = (4n)^(-n)."""
    return 4.0 * n * (1.0 - math.log(4.0 * n))


def scalar_inequality_margin(n: int, x_max: float = 1e6, count: int = 200001) -> float:
    """Dense 1D minimization margin of the inequality over (0, x_max]."""
    x = np.logspace(-12, math.log10(x_max), count)
    return float(volume_log_lhs(x, n).min() - volume_log_floor(n))


def scalar_inequality_monitor() -> MonitorVerdict:
    margins = {n: scalar_inequality_margin(n) for n in (1, 2)}
    worst = min(margins.values())
    return MonitorVerdict(
        name="scalar_inequality",
        passed=worst >= -1e-9,
        constants={f"margin_n{n}": m for n, m in margins.items()},
        worst_margin=worst,
        note="x^(-1/n) + 4 log x >= 4n(1 - log 4n) by dense minimization",
    )


# ---------------------------------------------------------------------------
# trajectory monitors

def _times(result: RunResult) -> np.ndarray:
    return np.asarray(result.trace.times)


def _sampled(result: RunResult, positive_only: bool = True):
    t = _times(result)
    mask = result.trace.sample_mask.copy()
    if positive_only:
        mask &= t > 0.0
    return np.nonzero(mask)[0]


def c0_bound(result: RunResult, c_scheme: float = 0.0, tol_abs: float = 1e-6) -> MonitorVerdict:
    """Sup bound: data extremes drift at most by the source-term sup rate."""
    tr = result.trace
    t = _times(result)
    c = float(tr.column("sup_abs_h").max())
    dt_max = float(np.diff(t).max()) if t.size > 1 else 0.0
    tol = tol_abs + c_scheme * dt_max
    sup0 = float(tr.column("sup_phi")[0])
    inf0 = float(tr.column("inf_phi")[0])
    upper = sup0 + c * t + tol
    lower = inf0 - c * t - tol
    margins = np.minimum(upper - tr.column("sup_phi"), tr.column("inf_phi") - lower)
    worst = float(margins.min())
    return MonitorVerdict(
        name="c0_bound", passed=bool(worst >= 0.0),
        constants={"c": c, "tol": tol},
        worst_margin=worst,
        note="potential stays within initial extremes plus c*t",
    )


def volume_barriers(result: RunResult, t_positive: float = 1e-3,
                    coherence_tol: float = 1e-8) -> MonitorVerdict:
    """Barrier combinations -phi + t phi' and phi + t phi' stay bounded and
    squeeze the volume ratio: min f must be positive after the start-up."""
    tr = result.trace
    t = _times(result)
    f_plus = tr.column("F_plus_sup")
    f_minus = tr.column("F_minus_inf")
    c1 = max(0.0, float(f_plus.max() - f_plus[0]))
    c2 = max(0.0, float(f_minus[0] - f_minus.min()))
    min_f = tr.column("min_f")
    pos_rows = t > 0.0
    late_rows = t >= t_positive
    min_f_pos = float(min_f[pos_rows].min()) if pos_rows.any() else math.nan
    min_f_late = float(min_f[late_rows].min()) if late_rows.any() else math.nan
    coherence = float(tr.column("h_residual").max())
    passed = (
        (not pos_rows.any() or min_f_pos > 0.0)
        and coherence <= coherence_tol
        and not result.aborted
    )
    return MonitorVerdict(
        name="volume_barriers", passed=bool(passed),
        constants={"C1": c1, "C2": c2, "min_f_pos": min_f_pos,
                   "min_f_late": min_f_late, "coherence": coherence},
        worst_margin=min_f_late if not math.isnan(min_f_late) else min_f_pos,
        note="barrier sups bounded; ratio positive for t > 0",
    )


def lp_trace_monitor(result: RunResult, residual_tol: float = 0.05) -> MonitorVerdict:
    """Weighted p-th moment of the modified ratio follows a growth-curve fit."""
    tr = result.trace
    t = _times(result)
    i_p = tr.column("lp_trace")
    k, kp, resid = fit_growth_curve(t, i_p)
    scale = max(float(np.abs(i_p).max()), 1e-300)
    rel = resid / scale
    return MonitorVerdict(
        name="lp_trace", passed=bool(rel <= residual_tol),
        constants={"K": k, "Kprime": kp, "residual_rel": rel,
                   "I_p0": float(i_p[0]), "lp_plain_max": float(tr.column("lp_plain").max()),
                   "p": result.config.lp_p, "lambda": result.config.resolved_lambda()},
        worst_margin=residual_tol - rel,
        note="weighted Lp moment within its exponential-plus-linear envelope",
    )


def claim_integrals_monitor(result: RunResult, residual_tol: float = 0.10) -> MonitorVerdict:
    """Energy-type integrals: cumulative gradient terms finite, localized
    trace integral within a nonnegative C1*t + C2*sqrt(t) envelope."""
    tr = result.trace
    t = _times(result)
    a1 = cumulative_trapezoid(t, tr.column("a1_rate"))
    a1b = cumulative_trapezoid(t, tr.column("a1b_rate"))
    a4 = cumulative_trapezoid(t, tr.column("a4_rate"))
    a2_max = float(tr.column("a2_chi").max())
    a3_max = float(tr.column("a3_grad").max())
    c1, c2, resid = fit_nonneg_pair(t, np.sqrt(t), a4)
    scale = max(float(a4.max()), 1e-300)
    rel = resid / scale
    passed = bool(rel <= residual_tol)
    return MonitorVerdict(
        name="claim_integrals", passed=passed,
        constants={"A1_total": float(a1[-1]), "A1b_total": float(a1b[-1]),
                   "A2_max": a2_max, "A3_max": a3_max,
                   "A4_C1": c1, "A4_C2": c2, "A4_residual_rel": rel},
        worst_margin=residual_tol - rel,
        note="gradient energies bounded; localized trace integral fits C1 t + C2 sqrt(t)",
    )


def l2_initial_convergence(result: RunResult, floor_frac: float = 0.05,
                           residual_tol: float = 0.10) -> MonitorVerdict:
    """Volume ratio returns to its initial value in L2 as t -> 0, and the
    weighted second moment exceeds its initial value at most by C(t + sqrt t)."""
    tr = result.trace
    t = _times(result)
    idx = _sampled(result, positive_only=True)
    if idx.size < 4:
        return MonitorVerdict(name="l2_initial_convergence", passed=None,
                              note="needs at least 4 positive sample times")
    order = idx[np.argsort(-t[idx])]  # j increasing = t decreasing
    e = tr.column("l2_f_minus_f0")[order]
    decreasing = bool(np.all(np.diff(e) <= e[:-1] * 1e-9 + 1e-12))
    floor = aitken_limit(e)
    norm = volume_normalization(result.grid.complex_dim)
    f0_dev = math.sqrt(float(((result.f0.values - 1.0) ** 2).mean()) * norm)
    floor_ok = bool(floor <= floor_frac * max(f0_dev, 1e-300))

    m_chi = tr.column("m_chi")
    d = m_chi - m_chi[0]
    c1, c2, _ = fit_nonneg_pair(t, np.sqrt(t), np.maximum(d, 0.0))
    violation = float((d - c1 * t - c2 * np.sqrt(t)).max())
    scale = max(float(m_chi[0]), 1e-300)
    rel = max(violation, 0.0) / scale
    moment_ok = bool(rel <= residual_tol)

    return MonitorVerdict(
        name="l2_initial_convergence",
        passed=bool(decreasing and floor_ok and moment_ok),
        constants={"floor": floor, "floor_frac": floor / max(f0_dev, 1e-300),
                   "f0_dev": f0_dev, "moment_C1": c1, "moment_C2": c2,
                   "moment_excess_rel": rel, "e_first": float(e[0]), "e_last": float(e[-1])},
        worst_margin=floor_frac - floor / max(f0_dev, 1e-300),
        note="L2 distance to the initial ratio decreasing with extrapolated floor",
    )


def laplacian_bound(result: RunResult, data_class: str = "c11",
                    c11_slack: float = 0.02, alpha_margin: float = 0.3) -> MonitorVerdict:
    """Background trace of the deformed form: uniformly bounded for C^{1,1}
    data, power-law blow-up no worse than t^-(n-1+margin) for bounded data."""
    tr = result.trace
    t = _times(result)
    m = tr.column("trace_sup")
    n = result.grid.complex_dim
    if data_class == "c11":
        c_fit = float(m.max())
        bound = float(m[0]) * (1.0 + c11_slack) + 1e-8
        return MonitorVerdict(
            name="laplacian_bound", passed=bool(c_fit <= bound),
            constants={"C": c_fit, "initial": float(m[0])},
            worst_margin=bound - c_fit,
            note="trace uniformly bounded by its initial value",
        )
    idx = _sampled(result, positive_only=True)
    if idx.size < 4:
        return MonitorVerdict(name="laplacian_bound", passed=None,
                              note="needs at least 4 positive sample times")
    idx = idx[np.argsort(t[idx])][2:]  # drop the two samples nearest the floor
    if idx.size < 2:
        return MonitorVerdict(name="laplacian_bound", passed=None,
                              note="not enough samples after discarding the floor")
    c_fit, alpha = fit_power_law(t[idx], m[idx])
    limit = (n - 1) + alpha_margin
    return MonitorVerdict(
        name="laplacian_bound", passed=bool(alpha <= limit),
        constants={"C": c_fit, "alpha": alpha, "alpha_limit": limit},
        worst_margin=limit - alpha,
        note="trace blow-up exponent within the smoothing rate",
    )


def third_order_bound(result: RunResult) -> MonitorVerdict:
    """t * sup(S) bounded along the run; the constant is the refinement handle."""
    tr = result.trace
    t = _times(result)
    pos = t > 0.0
    ts = t[pos] * tr.column("S_sup")[pos]
    c_fit = float(ts.max()) if ts.size else 0.0
    return MonitorVerdict(
        name="third_order_bound", passed=bool(np.all(np.isfinite(ts))),
        constants={"C": c_fit,
                   "t_at_max": float(t[pos][np.argmax(ts)]) if ts.size else math.nan},
        worst_margin=0.0,
        note="time-weighted third-order quantity bounded",
    )


def k_energy_monitor(result: RunResult, jensen_floor: float = JENSEN_FLOOR,
                     increment_tol: float = INCREMENT_TOL) -> MonitorVerdict:
    """Entropy of the volume ratio: nonnegative and nonincreasing, with
    nonnegative dissipation.  Only exact for the static background."""
    if not result.background.is_static:
        raise UnsupportedConfigurationError(
            "the entropy monitor requires a static background"
        )
    tr = result.trace
    e = tr.column("k_energy")
    diss = tr.column("dissipation")
    floor_margin = float(e.min() - jensen_floor)
    increments = np.diff(e)
    inc_max = float(increments.max()) if increments.size else 0.0
    passed = bool(floor_margin >= 0.0 and inc_max <= increment_tol and diss.min() >= -1e-12)
    t = _times(result)
    first_pos = int(np.argmax(t > 0.0)) if (t > 0.0).any() else 0
    return MonitorVerdict(
        name="k_energy", passed=passed,
        constants={"E0": float(e[0]), "E_first_positive": float(e[first_pos]),
                   "E_final": float(e[-1]), "max_increment": inc_max,
                   "min_E": float(e.min())},
        worst_margin=min(floor_margin, increment_tol - inc_max),
        note="ratio entropy nonincreasing with nonnegative dissipation",
    )


def mass_identity(result: RunResult, tol: float = MASS_TOL) -> MonitorVerdict:
    """Total deformed volume equals the class volume at every node."""
    defect = float(result.trace.column("mass_defect").max())
    return MonitorVerdict(
        name="mass_identity", passed=bool(defect <= tol),
        constants={"max_rel_defect": defect},
        worst_margin=tol - defect,
        note="total volume of the deformed form conserved",
    )


def positivity_monitor(result: RunResult) -> MonitorVerdict:
    t = _times(result)
    pos = t > 0.0
    min_f = float(result.trace.column("min_f")[pos].min()) if pos.any() else math.nan
    passed = (not result.aborted) and (not pos.any() or min_f > 0.0)
    return MonitorVerdict(
        name="positivity", passed=bool(passed),
        constants={"min_f_positive_times": min_f},
        worst_margin=min_f if not math.isnan(min_f) else 0.0,
        note="volume ratio positive at every accepted step",
    )


def contraction_monitor(comparison: ComparisonResult, rel_tol: float = 1e-2) -> MonitorVerdict:
    """Sup distance between two solutions never grows beyond its initial value."""
    margin = comparison.gap_initial * (1.0 + rel_tol) + 1e-12 - comparison.gap_max
    return MonitorVerdict(
        name="contraction", passed=bool(comparison.passed),
        constants={"gap_initial": comparison.gap_initial, "gap_max": comparison.gap_max,
                   "slack_per_dt": comparison.fitted_slack},
        worst_margin=margin,
        note="sup-distance comparison bound between two flows",
    )


def run_monitors(result: RunResult, data_class: str = "c11",
                 t_positive: float = 1e-3) -> dict:
    """The standard monitor battery for a single finished run."""
    verdicts = {}

    def add(v: MonitorVerdict):
        verdicts[v.name] = v

    add(c0_bound(result))
    add(volume_barriers(result, t_positive=t_positive))
    add(lp_trace_monitor(result))
    add(claim_integrals_monitor(result))
    add(l2_initial_convergence(result))
    add(laplacian_bound(result, data_class=data_class))
    add(third_order_bound(result))
    if result.background.is_static:
        add(k_energy_monitor(result))
    add(mass_identity(result))
    add(positivity_monitor(result))
    add(scalar_inequality_monitor())
    return verdicts


def write_report(path, verdicts: dict, config_hash: str = "") -> None:
    """One line per monitor: name, verdict, constants, worst margin, property."""
    with open(path, "w", encoding="ascii") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        for name, v in verdicts.items():
            consts = " ".join(f"{k}={val:.6g}" for k, val in v.constants.items())
            fh.write(f"{name}: {v.status} worst_margin={v.worst_margin:.6g}"
                     f" {consts} -- {v.note}\n")
