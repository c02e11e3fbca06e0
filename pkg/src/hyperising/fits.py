"""Fitting and classification layer: Lyapunov exponents from log-derivative
fits, chaos-bound ratios, 1/beta decay, scrambling times, lightcone model
selection, entropy-growth fits, and complexity regime segmentation.

Everything operates on plain arrays or the series dataclasses produced by
the backends, so fits are backend-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .dense import OTOCSeries

R_SQUARED_TARGET = 0.96
SCRAMBLING_THRESHOLD_DEFAULT = 0.5
PLATEAU_FRACTION = 0.10
PLATEAU_SLOPE_LIMIT = 0.05
MIN_WINDOW_POINTS = 8


@dataclass
class FitResult:
    """Generic fit output: model label, parameters, quality, and window."""

    model: str
    params: np.ndarray
    r_squared: float
    window: tuple
    residuals: np.ndarray
    stderr: np.ndarray | None = None
    flags: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags


@dataclass
class LyapunovSeries:
    """Lyapunov exponents over an ascending beta grid, with CI half-widths."""

    betas: np.ndarray
    lambdas: np.ndarray
    errors: np.ndarray


@dataclass
class LightconeData:
    """Scrambling time per probe site; nan marks sites that never crossed."""

    sites: np.ndarray
    t_s: np.ndarray
    threshold: float
    flags: list = field(default_factory=list)


def _linear_fit(x: np.ndarray, y: np.ndarray):
    """Least-squares line with R^2 and the 95% CI half-width of the slope."""
    res = stats.linregress(x, y)
    fitted = res.intercept + res.slope * x
    ss_res = np.sum((y - fitted) ** 2)
    ss_tot = np.sum((y - np.mean(y)) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    if x.size > 2 and np.isfinite(res.stderr) and res.stderr > 0:
        half = res.stderr * stats.t.ppf(0.975, x.size - 2)
    else:
        half = np.inf
    return res.slope, res.intercept, r2, y - fitted, half


def log_derivative(series: OTOCSeries) -> np.ndarray:
    """log(dO/dt) by central differences; non-positive slopes masked to nan."""
    t, o = series.times, series.o
    if t.size < 5:
        raise ValueError("need at least 5 samples for a usable log-derivative")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-8, atol=1e-12):
        raise ValueError("log_derivative expects a uniform time grid")
    deriv = np.gradient(o, t)
    out = np.full_like(deriv, np.nan)
    pos = deriv > 0
    out[pos] = np.log(deriv[pos])
    if np.count_nonzero(pos) < 5:
        raise ValueError("fewer than 5 points with positive dO/dt")
    return out


def _plateau_level(t: np.ndarray, y: np.ndarray):
    """Mean of the final segment and its relative residual slope."""
    n_tail = max(2, int(np.ceil(PLATEAU_FRACTION * t.size)))
    t_tail, y_tail = t[-n_tail:], y[-n_tail:]
    level = float(np.mean(y_tail))
    slope = np.polyfit(t_tail, y_tail, 1)[0]
    span = t_tail[-1] - t_tail[0]
    rel = abs(slope) * span / abs(level) if level != 0 else np.inf
    return level, rel


def _auto_window(series: OTOCSeries) -> tuple:
    """Longest window with R^2 >= target on log(dO/dt) inside the rise region.

    The rise region is where O sits between 1% and 50% of its plateau; ties
    between windows of equal length break toward higher R^2.  Falls back to
    the best window seen if none reaches the target.
    """
    t = series.times
    logd = log_derivative(series)
    plateau, _ = _plateau_level(t, series.o)
    if plateau <= 0:
        raise ValueError("series has no positive plateau to normalize the rise region")
    rise = (series.o >= 0.01 * plateau) & (series.o <= 0.5 * plateau) & np.isfinite(logd)
    idx = np.flatnonzero(rise)
    if idx.size < MIN_WINDOW_POINTS:
        idx = np.flatnonzero(np.isfinite(logd))
        if idx.size < MIN_WINDOW_POINTS:
            raise ValueError("not enough usable points to select a fitting window")
    best = None  # (length, r2, lo, hi)
    for lo_pos in range(idx.size - MIN_WINDOW_POINTS + 1):
        for hi_pos in range(lo_pos + MIN_WINDOW_POINTS - 1, idx.size):
            sel = idx[lo_pos : hi_pos + 1]
            if not np.all(np.isfinite(logd[sel])):
                continue
            _, _, r2, _, _ = _linear_fit(t[sel], logd[sel])
            key = (sel.size if r2 >= R_SQUARED_TARGET else 0, r2, -sel[0])
            if best is None or key > best[0]:
                best = (key, sel)
    if best is None:
        raise ValueError("no candidate fitting window found")
    sel = best[1]
    return float(t[sel[0]]), float(t[sel[-1]])


def _rise_region_r2(series: OTOCSeries, logd: np.ndarray) -> float:
    """Linearity of log(dO/dt) over the whole rise region."""
    t = series.times
    plateau, _ = _plateau_level(t, series.o)
    rise = (series.o >= 0.01 * plateau) & (series.o <= 0.5 * plateau) & np.isfinite(logd)
    if np.count_nonzero(rise) < MIN_WINDOW_POINTS:
        return 1.0
    _, _, r2, _, _ = _linear_fit(t[rise], logd[rise])
    return r2


def fit_lyapunov(series: OTOCSeries, window: tuple | None = None) -> FitResult:
    """Slope of log(dO/dt): the exponential growth rate of O in the rise window.

    A fit below the quality target stays in the result but is flagged
    low_quality rather than discarded.  With an auto-selected window the
    quality check covers the whole rise region, so a sub-window of a
    non-exponential riser cannot masquerade as a clean fit.
    """
    t = series.times
    logd = log_derivative(series)
    auto = window is None
    if auto:
        window = _auto_window(series)
    lo, hi = window
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12:
        raise ValueError(f"window {window} outside data range ({t[0]}, {t[-1]})")
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12) & np.isfinite(logd)
    if np.count_nonzero(sel) < 2:
        raise ValueError("window contains fewer than 2 usable points")
    slope, intercept, r2, resid, half = _linear_fit(t[sel], logd[sel])
    quality = r2
    if auto:
        quality = min(quality, _rise_region_r2(series, logd))
    flags = [] if quality >= R_SQUARED_TARGET else ["low_quality"]
    return FitResult(
        model="log_derivative_linear",
        params=np.array([slope, intercept]),
        r_squared=r2,
        window=(lo, hi),
        residuals=resid,
        stderr=np.array([half]),
        flags=flags,
    )


def mss_ratio(lam: float, beta: float) -> float:
    """lambda * beta / (2 pi): 1 saturates the chaos bound, > 1 exceeds it."""
    if beta <= 0:
        raise ValueError("the chaos bound requires beta > 0")
    return lam * beta / (2.0 * np.pi)


def fit_inverse_beta(series: LyapunovSeries) -> FitResult:
    """Least-squares fit lambda = a / beta over the sweep."""
    betas, lams = series.betas, series.lambdas
    if betas.size < 3:
        raise ValueError("need at least 3 points to fit a/beta")
    x = 1.0 / betas
    a = float(np.dot(x, lams) / np.dot(x, x))
    fitted = a * x
    ss_res = np.sum((lams - fitted) ** 2)
    ss_tot = np.sum((lams - np.mean(lams)) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(
        model="inverse_beta",
        params=np.array([a]),
        r_squared=r2,
        window=(float(betas[0]), float(betas[-1])),
        residuals=lams - fitted,
    )


def scrambling_time(
    series: OTOCSeries, threshold: float = SCRAMBLING_THRESHOLD_DEFAULT
) -> tuple:
    """First time O crosses threshold * plateau, linearly interpolated.

    Returns (t_s, flags); t_s is nan when the crossing never happens, and
    an unsettled plateau flags the result instead of failing it.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    t, o = series.times, series.o
    plateau, rel_slope = _plateau_level(t, o)
    flags = []
    if rel_slope > PLATEAU_SLOPE_LIMIT:
        flags.append("plateau_not_established")
    target = threshold * plateau
    above = o >= target
    if not np.any(above):
        flags.append("threshold_unreached")
        return np.nan, flags
    k = int(np.argmax(above))
    if k == 0:
        return float(t[0]), flags
    t0, t1 = t[k - 1], t[k]
    y0, y1 = o[k - 1], o[k]
    frac = (target - y0) / (y1 - y0) if y1 != y0 else 0.0
    return float(t0 + frac * (t1 - t0)), flags


def fit_lightcone(data: LightconeData, center: int) -> tuple:
    """Fit t_s against log and linear distance models; prefer the higher R^2.

    Returns (log_fit, linear_fit, preferred) with preferred in
    {"log", "linear"}.
    """
    dist = np.abs(data.sites - center).astype(float)
    ok = (dist >= 1) & np.isfinite(data.t_s)
    d, ts = dist[ok], data.t_s[ok]
    if d.size < 4:
        raise ValueError("need at least 4 usable sites away from the center")
    degenerate = np.ptp(ts) == 0.0

    slope_l, icpt_l, r2_log, resid_l, half_l = _linear_fit(np.log(d), ts)
    fit_log = FitResult(
        model="t_s = a ln d + b",
        params=np.array([slope_l, icpt_l]),
        r_squared=r2_log,
        window=(float(d.min()), float(d.max())),
        residuals=resid_l,
        stderr=np.array([half_l]),
        flags=["degenerate"] if degenerate else [],
    )
    slope_n, icpt_n, r2_lin, resid_n, half_n = _linear_fit(d, ts)
    fit_lin = FitResult(
        model="t_s = a d + b",
        params=np.array([slope_n, icpt_n]),
        r_squared=r2_lin,
        window=(float(d.min()), float(d.max())),
        residuals=resid_n,
        stderr=np.array([half_n]),
        flags=["degenerate"] if degenerate else [],
    )
    preferred = "log" if r2_log >= r2_lin else "linear"
    return fit_log, fit_lin, preferred


def fit_entropy_exponential(
    times: np.ndarray, s_k: np.ndarray, window: tuple | None = None
) -> FitResult:
    """Nonlinear fit S(t) = a (e^{c t} - d) on the early-time rise.

    Default window: from t = 0 until S first reaches half its maximum,
    which always sits before the peak.  Both branches are tried: convex
    growth (a, c > 0) and the saturating rise (a, c < 0); |c| is the rate
    either way.
    """
    times = np.asarray(times, dtype=float)
    s_k = np.asarray(s_k, dtype=float)
    if window is None:
        half_idx = int(np.argmax(s_k >= 0.5 * s_k.max()))
        hi = times[half_idx] if half_idx > 0 else times[-1]
        window = (0.0, hi)
    lo, hi = window
    sel = (times >= lo) & (times <= hi)
    t, s = times[sel], s_k[sel]
    if t.size < 4:
        raise ValueError("entropy fit window has fewer than 4 points")

    def model(tt, a, c, d):
        return a * (np.exp(c * tt) - d)

    if np.ptp(s) <= 1e-12 * max(np.abs(s).max(), 1.0):
        return FitResult(
            model="a*(exp(c t) - d)",
            params=np.array([0.0, 0.0, 0.0]),
            r_squared=1.0,
            window=(float(lo), float(hi)),
            residuals=np.zeros_like(s),
            stderr=np.full(3, np.inf),
            flags=["no_growth"],
        )

    span = max(s.max() - s.min(), 1e-12)
    # crude growth-rate seed from the sampled doubling behaviour
    c0 = max(np.log(max(s[-1], 1e-9) / max(s[t.size // 2], 1e-9)), 0.1) / max(
        t[-1] - t[t.size // 2], 1e-9
    )
    c0 = max(c0, 1.0 / max(t[-1] - t[0], 1e-9))
    flags = []
    popt, pcov, best_sse = None, None, np.inf
    for p0 in ([span, c0, 1.0], [-span, -c0, 1.0]):
        try:
            cand, cov = optimize.curve_fit(model, t, s, p0=p0, maxfev=20000)
        except (RuntimeError, optimize.OptimizeWarning):
            continue
        sse = np.sum((s - model(t, *cand)) ** 2)
        if sse < best_sse:
            popt, pcov, best_sse = cand, cov, sse
    if popt is not None:
        fitted = model(t, *popt)
        with np.errstate(invalid="ignore"):
            perr = np.sqrt(np.diag(pcov))
    else:
        popt = np.array([np.nan, np.nan, np.nan])
        fitted = np.full_like(s, np.nan)
        perr = np.full(3, np.inf)
        flags.append("did_not_converge")
    ss_res = np.sum((s - fitted) ** 2)
    ss_tot = np.sum((s - np.mean(s)) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if np.isfinite(popt[1]) and abs(popt[1]) < 1e-6:
        flags.append("no_growth")
    return FitResult(
        model="a*(exp(c t) - d)",
        params=popt,
        r_squared=r2 if np.isfinite(r2) else 0.0,
        window=(float(lo), float(hi)),
        residuals=s - fitted,
        stderr=perr,
        flags=flags,
    )


def segment_complexity_regimes(
    times: np.ndarray, c_k: np.ndarray, n_grid: int = 24, onset_floor: float = 1.0
) -> dict:
    """Piecewise exponential / linear / constant segmentation of C_K(t).

    Breakpoints (t1, t2) minimize the total squared residual over a grid;
    the exponential stage must reach R^2 >= 0.9 on the winning window or
    the result is flagged.  The exponential fit ignores samples below
    onset_floor: before the wavepacket clears the first chain site the
    growth is algebraic, not exponential.
    """
    times = np.asarray(times, dtype=float)
    c_k = np.asarray(c_k, dtype=float)
    plateau, rel_slope = _plateau_level(times, c_k)
    flags = []
    if rel_slope > PLATEAU_SLOPE_LIMIT:
        flags.append("plateau_not_established")

    t_end = times[-1]
    candidates = np.linspace(times[2], t_end * 0.9, n_grid)
    best = None
    for i, t1 in enumerate(candidates):
        exp_sel = (times <= t1) & (c_k > onset_floor)
        if np.count_nonzero(exp_sel) < 4:
            continue
        slope_e, icpt_e, r2_e, _, _ = _linear_fit(
            times[exp_sel], np.log(c_k[exp_sel])
        )
        if slope_e <= 0:
            continue
        exp_pred = np.exp(icpt_e + slope_e * times)
        sse_exp = np.sum((c_k[times <= t1] - exp_pred[times <= t1]) ** 2)
        for t2 in candidates[i + 1 :]:
            lin_sel = (times >= t1) & (times <= t2)
            if np.count_nonzero(lin_sel) < 3:
                continue
            slope_m, icpt_m, _, _, _ = _linear_fit(times[lin_sel], c_k[lin_sel])
            sse_lin = np.sum(
                (c_k[lin_sel] - (icpt_m + slope_m * times[lin_sel])) ** 2
            )
            tail_sel = times >= t2
            level = float(np.mean(c_k[tail_sel]))
            sse_tail = np.sum((c_k[tail_sel] - level) ** 2)
            sse = sse_exp + sse_lin + sse_tail
            if best is None or sse < best[0]:
                best = (sse, t1, t2, slope_e, icpt_e, r2_e, slope_m, icpt_m, level)
    if best is None:
        raise ValueError("could not segment the series: no viable breakpoints")
    _, t1, t2, rate, log_pref, r2_exp, lin_rate, lin_icpt, level = best

    # null comparison: if a plain linear ramp plus plateau explains the data
    # just as well, there is no exponential stage to report
    sse_null = np.inf
    for t2n in candidates:
        lin_sel = times <= t2n
        if np.count_nonzero(lin_sel) < 3:
            continue
        s_m, i_m, _, _, _ = _linear_fit(times[lin_sel], c_k[lin_sel])
        tail = times >= t2n
        lvl = float(np.mean(c_k[tail]))
        sse = np.sum((c_k[lin_sel] - (i_m + s_m * times[lin_sel])) ** 2) + np.sum(
            (c_k[tail] - lvl) ** 2
        )
        sse_null = min(sse_null, sse)
    if r2_exp < 0.9 or sse_null <= best[0] * 1.01:
        flags.append("no_exponential_regime")
    return {
        "exp_window": (float(times[0]), float(t1)),
        "linear_window": (float(t1), float(t2)),
        "saturation_level": level,
        "exp_rate": rate,
        "exp_prefactor_log": log_pref,
        "exp_r_squared": r2_exp,
        "linear_rate": lin_rate,
        "linear_intercept": lin_icpt,
        "flags": flags,
    }


def lanczos_descent_check(b: np.ndarray, min_dim: int = 10) -> FitResult:
    """Linear fit of b_n over the post-peak descent region.

    The region runs from argmax(b) to the first n with b_n < 0.05 max(b)
    (or the end).  Chaotic chains give a clean negative slope.
    """
    b = np.asarray(b, dtype=float)
    if b.size < min_dim:
        raise ValueError(f"need at least {min_dim} coefficients, got {b.size}")
    n0 = int(np.argmax(b))
    bmax = b[n0]
    tail = np.flatnonzero(b[n0:] < 0.05 * bmax)
    n1 = n0 + int(tail[0]) if tail.size else b.size
    idx = np.arange(n0, n1)
    flags = []
    if idx.size < 3:
        flags.append("no_descent_region")
        return FitResult(
            model="b_n = s n + c",
            params=np.array([np.nan, np.nan]),
            r_squared=0.0,
            window=(float(n0), float(n1 - 1 if n1 > n0 else n0)),
            residuals=np.array([]),
            flags=flags,
        )
    slope, icpt, r2, resid, half = _linear_fit(idx.astype(float), b[idx])
    if slope >= -1e-12 * max(bmax, 1.0):
        flags.append("no_descent_region")
    return FitResult(
        model="b_n = s n + c",
        params=np.array([slope, icpt]),
        r_squared=r2,
        window=(float(n0), float(n1 - 1)),
        residuals=resid,
        stderr=np.array([half]),
        flags=flags,
    )
