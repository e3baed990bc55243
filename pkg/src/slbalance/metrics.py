"""Trial metrics: filtered CoM-SUP and CoP-SUP distances, GRF ellipses and
cross-condition summaries.

Every series is low-pass filtered at 2 Hz (first-order Butterworth, zero
phase) before distances or derivatives are taken.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, filtfilt
from scipy.stats import chi2

from . import estimator as lqe
from .errors import InvalidInputError
from .sim import Condition, cop_proxy, grf_proxy

FILTER_CUTOFF = 2.0  # Hz
ELLIPSE_COVERAGE = 0.95


@dataclass
class DistanceSeries:
    times: np.ndarray  # s
    values: np.ndarray  # m
    scenario: str = ""
    condition: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise InvalidInputError("times and values must be 1-D and equally long")
        if np.any(self.values < 0):
            raise InvalidInputError("distances must be >= 0")


@dataclass
class ForceEllipse:
    center: np.ndarray  # N
    semi_axes: np.ndarray  # N, (major, minor)
    orientation: float  # rad, major axis from +x, in (-pi/2, pi/2]
    degenerate: bool = False
    coverage: float = ELLIPSE_COVERAGE


def butterworth1_lowpass(series, fc=FILTER_CUTOFF, fs=100.0):
    """First-order Butterworth (bilinear transform), applied forward and backward.

    Filters along axis 0. DC gain is one; the gain at ``fc`` is 1/sqrt(2) per
    pass, so 1/2 overall.
    """
    if not (fc > 0 and fs > 2 * fc):
        raise InvalidInputError(f"need fs > 2 fc > 0, got fc={fc}, fs={fs}")
    x = np.asarray(series, dtype=float)
    if x.shape[0] < 2:
        return x.copy()
    b, a = butter(1, fc, fs=fs)
    return filtfilt(b, a, x, axis=0, padlen=min(6, x.shape[0] - 1))


def _rate(times):
    dt = np.diff(times)
    if dt.size == 0 or np.any(dt <= 0):
        raise InvalidInputError("times must be strictly increasing")
    return 1.0 / float(np.mean(dt))


def _states(log, use_truth):
    return log.true_state if use_truth else log.est_state


def _tags(log):
    return str(log.metadata.get("scenario", "")), str(log.metadata.get("condition", ""))


def com_sup_series(log, use_truth=True, fc=FILTER_CUTOFF):
    """Per-tick |p - p_sup| after filtering the offset vector."""
    x = _states(log, use_truth)
    fs = _rate(log.times)
    offset = butterworth1_lowpass(x[:, lqe.P] - x[:, lqe.SUP], fc, fs)
    return DistanceSeries(log.times, np.linalg.norm(offset, axis=1), *_tags(log))


def com_acceleration(log, use_truth=True, fc=FILTER_CUTOFF):
    """(filtered CoM xy, its second derivative) from the logged positions."""
    x = _states(log, use_truth)
    fs = _rate(log.times)
    p = butterworth1_lowpass(x[:, lqe.P], fc, fs)
    acc = np.gradient(np.gradient(p, log.times, axis=0), log.times, axis=0)
    return p, acc


def cop_sup_series(log, use_truth=True, fc=FILTER_CUTOFF):
    """Per-tick distance of the inverted-pendulum CoP proxy from SUP."""
    x = _states(log, use_truth)
    fs = _rate(log.times)
    p, acc = com_acceleration(log, use_truth, fc)
    sup = butterworth1_lowpass(x[:, lqe.SUP], fc, fs)
    cop = cop_proxy(p, acc, log.com_z)
    return DistanceSeries(log.times, np.linalg.norm(cop - sup, axis=1), *_tags(log))


def grf_series(log, fc=FILTER_CUTOFF):
    """(n, 2) horizontal GRF proxy from the filtered true CoM."""
    _, acc = com_acceleration(log, True, fc)
    return grf_proxy(acc, log.total_mass)


def mean_distance(series):
    """Time-weighted (trapezoidal) mean of a distance series."""
    t, v = series.times, series.values
    if v.size == 0:
        raise InvalidInputError("empty series")
    if v.size == 1 or t[-1] == t[0]:
        return float(v[0])
    return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(t)) / (t[-1] - t[0]))


def force_ellipse(forces, coverage=ELLIPSE_COVERAGE):
    """Covariance ellipse holding ``coverage`` of a 2-D Gaussian fit."""
    F = np.asarray(forces, dtype=float)
    if F.ndim != 2 or F.shape[1] != 2 or F.shape[0] < 3:
        raise InvalidInputError("need at least 3 two-dimensional samples")
    if not 0 < coverage < 1:
        raise InvalidInputError("coverage must lie in (0, 1)")
    center = F.mean(axis=0)
    lam, vec = np.linalg.eigh(np.cov(F, rowvar=False))
    lam, vec = lam[::-1], vec[:, ::-1]  # major first
    scale = max(np.abs(F).max(), 1.0)
    floor = np.finfo(float).eps * scale
    axes = np.sqrt(chi2.ppf(coverage, 2) * np.maximum(lam, 0.0))
    # rank deficient: minor variance negligible next to the major one
    degenerate = bool(axes[1] <= floor or lam[1] <= 1e-12 * max(lam[0], 0.0))
    axes = np.maximum(axes, floor)
    angle = float(np.arctan2(vec[1, 0], vec[0, 0])) if axes[0] > floor else 0.0
    if angle <= -np.pi / 2:
        angle += np.pi
    elif angle > np.pi / 2:
        angle -= np.pi
    return ForceEllipse(center, axes, angle, degenerate, coverage)


def mean_effort(log):
    """Time average of |u| (rad/s^2) over the trial."""
    return float(np.mean(np.linalg.norm(log.u, axis=1)))


@dataclass
class ConditionStats:
    condition: str
    n_trials: int
    com_sup_mean: float
    com_sup_sd: float
    cop_sup_mean: float
    cop_sup_sd: float
    ellipse: ForceEllipse
    effort_mean: float
    safe_stops: int = 0


@dataclass
class ConditionSummary:
    scenario: str
    stats: dict  # condition value -> ConditionStats
    orderings: dict = field(default_factory=dict)  # verdict name -> bool

    def rows(self):
        """Flat rows for a summary table (conditions in protocol order)."""
        out = []
        for c in Condition:
            s = self.stats.get(c.value)
            if s is None:
                continue
            e = s.ellipse
            out.append({
                "scenario": self.scenario, "condition": c.value, "n_trials": s.n_trials,
                "com_sup_mean": s.com_sup_mean, "com_sup_sd": s.com_sup_sd,
                "cop_sup_mean": s.cop_sup_mean, "cop_sup_sd": s.cop_sup_sd,
                "grf_center_x": e.center[0], "grf_center_y": e.center[1],
                "grf_major": e.semi_axes[0], "grf_minor": e.semi_axes[1],
                "grf_orientation": e.orientation, "grf_degenerate": int(e.degenerate),
                "effort_mean": s.effort_mean, "safe_stops": s.safe_stops,
            })
        return out


def _sd(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _trial_key(log):
    m = log.metadata
    return (int(m.get("seed", 0)), str(m.get("config_hash", "")))


def condition_summary(logs, scenario=None):
    """Per-condition mean/sd of the trial means plus ordering flags.

    ``logs`` maps a condition tag to a sequence of TrialLogs. Trials are
    sorted by seed first, so the result does not depend on their order.
    """
    stats = {}
    for cond, trials in logs.items():
        cond = Condition(cond).value
        trials = sorted(trials, key=_trial_key)
        if not trials:
            raise InvalidInputError(f"no trials for condition {cond}")
        com = [mean_distance(com_sup_series(t)) for t in trials]
        cop = [mean_distance(cop_sup_series(t)) for t in trials]
        grf = np.vstack([grf_series(t) for t in trials])
        stats[cond] = ConditionStats(
            cond, len(trials), float(np.mean(com)), _sd(com), float(np.mean(cop)), _sd(cop),
            force_ellipse(grf), float(np.mean([mean_effort(t) for t in trials])),
            int(sum(t.metadata.get("safe_stops", 0) for t in trials)))
        if scenario is None:
            scenario = trials[0].metadata.get("scenario", "")
    return ConditionSummary(scenario or "", stats, ordering_flags(stats))


def ordering_flags(stats):
    """Named condition orderings (True when they hold)."""
    h, n, c = (stats.get(k.value) for k in Condition)
    flags = {}
    if h and n and c:
        flags["CoM-SUP: Comp < HOnly < NoComp"] = c.com_sup_mean < h.com_sup_mean < n.com_sup_mean
        flags["CoM-SUP: Comp < min(HOnly, NoComp)"] = c.com_sup_mean < min(h.com_sup_mean,
                                                                          n.com_sup_mean)
    if n and c:
        flags["CoM-SUP: Comp <= 0.8 NoComp"] = c.com_sup_mean <= 0.8 * n.com_sup_mean
        flags["CoP-SUP: Comp < NoComp"] = c.cop_sup_mean < n.cop_sup_mean
        flags["GRF center: |Comp| < |NoComp|"] = (np.linalg.norm(c.ellipse.center)
                                                  < np.linalg.norm(n.ellipse.center))
    return {k: bool(v) for k, v in flags.items()}
