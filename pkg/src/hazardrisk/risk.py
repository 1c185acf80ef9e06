"""Risk algebra, Monte Carlo risk estimates and sensitivity analysis."""

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

from .errors import ValidationError

Z_95 = 1.96
SOBOL_BINS = 50
SOBOL_MIN_SAMPLES = 1000


class InjuryLevel(Enum):
    I1 = "I1+"
    I2 = "I2+"
    I3 = "I3"

    @property
    def min_ais(self):
        return {"I1+": 1, "I2+": 3, "I3": 5}[self.value]

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for level in cls:
            if value in (level.value, level.name, level.value.rstrip("+")):
                return level
        raise ValidationError(f"unknown injury level {value!r}; expected one of I1+, I2+, I3")


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValidationError(f"{name} must be a probability in [0, 1], got {p}")


def _check_rate(name, r):
    if not r >= 0.0 or math.isinf(r):
        raise ValidationError(f"{name} must be a finite rate >= 0, got {r}")


# -- HIRA algebra ----------------------------------------------------------------

def discrete_mode_risk(scenario_rate, p_behavior, p_collision, p_injury):
    """Injury rate for a scenario occurring at ``scenario_rate`` per hour."""
    _check_rate("scenario rate", scenario_rate)
    for name, p in (("p_b", p_behavior), ("p_c", p_collision), ("p_i", p_injury)):
        _check_prob(name, p)
    return scenario_rate * p_behavior * p_collision * p_injury


def continuous_mode_risk(p_scenario, behavior_rate, p_collision, p_injury):
    """Injury rate for a scenario present a fraction ``p_scenario`` of the time."""
    _check_rate("behavior rate", behavior_rate)
    for name, p in (("p_s", p_scenario), ("p_c", p_collision), ("p_i", p_injury)):
        _check_prob(name, p)
    return p_scenario * behavior_rate * p_collision * p_injury


def solve_behavior_budget(budget, mode, exposure, p_collision, p_injury):
    """Largest p_b (discrete) or lambda_b (continuous) that keeps risk at ``budget``.

    Returns ``(value, acceptable_unmitigated)``. In discrete mode the result
    is capped at 1; the flag is set when even p_b = 1 meets the budget.
    """
    _check_rate("budget", budget)
    denom = exposure * p_collision * p_injury
    if denom == 0:
        raise ValidationError("cannot invert the risk product: a denominator factor is zero")
    value = budget / denom
    if mode == "discrete":
        _check_rate("scenario rate", exposure)
        if value >= 1.0:
            return 1.0, True
        return value, False
    if mode == "continuous":
        _check_prob("p_s", exposure)
        return value, False
    raise ValidationError(f"mode must be 'discrete' or 'continuous', got {mode!r}")


@dataclass(frozen=True)
class HazardAssessment:
    mode: str
    exposure: float  # lambda_s (/h) in discrete mode, p_s in continuous mode
    behavior: float  # p_b in discrete mode, lambda_b (/h) in continuous mode
    p_collision: float
    p_injury: dict = field(default_factory=dict)  # InjuryLevel -> probability

    def __post_init__(self):
        if self.mode not in ("discrete", "continuous"):
            raise ValidationError(f"mode must be 'discrete' or 'continuous', got {self.mode!r}")
        object.__setattr__(self, "p_injury", {InjuryLevel.parse(k): float(v) for k, v in self.p_injury.items()})
        self.injury_rates()

    def injury_rates(self):
        f = discrete_mode_risk if self.mode == "discrete" else continuous_mode_risk
        return {lvl: f(self.exposure, self.behavior, self.p_collision, p) for lvl, p in self.p_injury.items()}


# -- acceptance criteria ---------------------------------------------------------------

@dataclass(frozen=True)
class RacSpec:
    human_rates: dict
    k_s: float

    def __post_init__(self):
        if not self.k_s > 1:
            raise ValidationError(f"safety factor k_s must exceed 1, got {self.k_s}")
        rates = {InjuryLevel.parse(k): float(v) for k, v in self.human_rates.items()}
        for lvl, r in rates.items():
            if not r > 0 or math.isinf(r):
                raise ValidationError(f"human rate for {lvl.value} must be positive, got {r}")
        object.__setattr__(self, "human_rates", rates)

    def budget(self, level):
        return self.human_rates[InjuryLevel.parse(level)] / self.k_s


def human_rates_from_counts(slight, severe, fatal, hours):
    """Per-level human baseline rates from accident counts over ``hours``."""
    if hours <= 0:
        raise ValidationError("exposure hours must be positive")
    if min(slight, severe, fatal) < 0:
        raise ValidationError("accident counts must be non-negative")
    return {
        InjuryLevel.I1: (slight + severe + fatal) / hours,
        InjuryLevel.I2: (severe + fatal) / hours,
        InjuryLevel.I3: fatal / hours,
    }


def prb_check(system_rates, rac):
    """Per-level verdict of ``k_s * lambda_system < lambda_human`` (strict)."""
    out = {}
    for level, rate in system_rates.items():
        level = InjuryLevel.parse(level)
        _check_rate(f"system rate for {level.value}", rate)
        if level not in rac.human_rates:
            raise ValidationError(f"no human baseline rate for {level.value}")
        out[level] = rac.k_s * rate < rac.human_rates[level]
    return out


@dataclass(frozen=True)
class BudgetBreakdown:
    level: InjuryLevel
    rates: dict
    total: float
    shares: dict
    budget: float
    passed: bool

    def to_dict(self):
        return {"level": self.level.value, "total": self.total, "budget": self.budget,
                "pass": self.passed, "rates": dict(self.rates), "shares": dict(self.shares)}


def aggregate_budgets(rates, rac, level=InjuryLevel.I2):
    """Sum per-scenario injury rates and compare with ``lambda_human / k_s``.

    ``rates`` maps scenario ids to rates (a plain list is numbered). The
    comparison is strict, so a total equal to the budget fails.
    """
    if not isinstance(rates, dict):
        rates = {f"HS{i + 1}": r for i, r in enumerate(rates)}
    for name, r in rates.items():
        _check_rate(f"rate of {name}", r)
    level = InjuryLevel.parse(level)
    total = math.fsum(rates.values())
    shares = {k: (r / total if total > 0 else 0.0) for k, r in rates.items()}
    budget = rac.budget(level)
    return BudgetBreakdown(level, dict(rates), total, shares, budget, total < budget)


_SIL_TABLE = {
    # (low, high) half-open bins, most demanding first
    "pfh": ((1e-9, 1e-8, 4), (1e-8, 1e-7, 3), (1e-7, 1e-6, 2), (1e-6, 1e-5, 1)),
    "pfd": ((1e-5, 1e-4, 4), (1e-4, 1e-3, 3), (1e-3, 1e-2, 2), (1e-2, 1e-1, 1)),
}


def sil_lookup(metric, kind="pfh"):
    """Integrity level 1-4 for a PFH (/h) or average PFD, or None outside the table.

    Bins are ``[low, high)``.
    """
    if kind not in _SIL_TABLE:
        raise ValidationError(f"kind must be 'pfh' or 'pfd', got {kind!r}")
    if not metric > 0:
        raise ValidationError(f"failure metric must be positive, got {metric}")
    for low, high, sil in _SIL_TABLE[kind]:
        if low <= metric < high:
            return sil
    return None


def two_oo_three_failure(p1, p2, p3):
    """Failure probability of a 2-out-of-3 vote over independent channels."""
    for p in (p1, p2, p3):
        _check_prob("channel failure probability", p)
    return p1 * p2 + p1 * p3 + p2 * p3 - 2.0 * p1 * p2 * p3


# -- Monte Carlo estimates ------------------------------------------------------------

@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    variance: float
    n: int
    rate: float | None = None  # mean scaled by the scenario rate, /h
    scale: float = 1.0

    @property
    def std(self):
        return math.sqrt(self.variance)

    @property
    def half_width(self):
        return Z_95 * self.std / math.sqrt(self.n)

    @property
    def ci_low(self):
        return self.mean - self.half_width

    @property
    def ci_high(self):
        return self.mean + self.half_width

    @property
    def rate_half_width(self):
        return None if self.rate is None else self.scale * self.half_width

    def covers(self, value):
        return self.ci_low <= value <= self.ci_high

    def with_rate(self, scenario_rate):
        _check_rate("scenario rate", scenario_rate)
        return RiskEstimate(self.mean, self.variance, self.n, scenario_rate * self.mean, scenario_rate)

    def format(self, digits=3, unicode=False):
        """``mean ± half-width``, e.g. ``5.60e-05 ± 1.08e-05``."""
        return f"{_sci(self.mean, digits, unicode)} ± {_sci(self.half_width, digits, unicode)}"

    def format_rate(self, digits=3, unicode=False):
        if self.rate is None:
            raise ValidationError("estimate carries no scenario rate")
        return f"{_sci(self.rate, digits, unicode)} ± {_sci(self.rate_half_width, digits, unicode)} /h"

    def to_dict(self):
        d = {"mean": self.mean, "variance": self.variance, "n": self.n,
             "ci_low": self.ci_low, "ci_high": self.ci_high, "half_width": self.half_width}
        if self.rate is not None:
            d.update(rate=self.rate, rate_half_width=self.rate_half_width)
        return d


_SUPERSCRIPT = str.maketrans("-0123456789", "⁻⁰¹²³⁴⁵⁶⁷⁸⁹")


def _sci(x, digits, unicode):
    text = f"{x:.{digits - 1}e}"
    if not unicode:
        return text
    mant, exp = text.split("e")
    return f"{mant}×10{str(int(exp)).translate(_SUPERSCRIPT)}"


@dataclass(frozen=True)
class Accumulator:
    """Running (count, mean, M2) summary; ``merge`` is associative."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values):
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls()
        mu = float(v.mean())
        return cls(int(v.size), mu, float(np.sum((v - mu) ** 2)))

    def merge(self, other):
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return Accumulator(n, mean, m2)

    def estimate(self):
        if self.count < 2:
            raise ValidationError(f"a risk estimate needs at least 2 samples, got {self.count}")
        return RiskEstimate(self.mean, self.m2 / (self.count - 1), self.count)


def mcs_estimate(values):
    """Sample mean of per-sample injury probabilities with a 95% normal CI."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise ValidationError(f"a risk estimate needs at least 2 samples, got {v.size}")
    if np.any(np.isnan(v)) or np.any((v < 0) | (v > 1)):
        raise ValidationError("injury probabilities must lie in [0, 1]")
    # fsum keeps the estimate exact for constant integrands and order-independent
    mean = math.fsum(v) / v.size
    var = math.fsum((v - mean) ** 2) / (v.size - 1)
    return RiskEstimate(mean, var, int(v.size))


# -- sensitivity analysis ------------------------------------------------------------

def _column(table, name):
    try:
        return np.asarray(table[name], dtype=float)
    except KeyError:
        raise ValidationError(f"no column {name!r} in the sample table") from None


def sobol_first_order(table, input_name, output_name, bins=SOBOL_BINS):
    """First-order index Var(E[Y|X]) / Var(Y) from a single sample table.

    Rows are sorted by the input and cut into ``bins`` equal-count bins; the
    variance of the bin means of Y estimates Var(E[Y|X]).
    """
    x, y = _column(table, input_name), _column(table, output_name)
    n = y.size
    if n < SOBOL_MIN_SAMPLES:
        raise ValidationError(f"Sobol estimate needs at least {SOBOL_MIN_SAMPLES} samples, got {n}")
    total = float(np.var(y))
    if total == 0.0:
        raise ValidationError(f"output {output_name!r} has zero variance")
    order = np.argsort(x, kind="stable")
    groups = np.array_split(y[order], bins)
    means = np.array([g.mean() for g in groups])
    sizes = np.array([g.size for g in groups])
    between = float(np.sum(sizes * (means - y.mean()) ** 2) / n)
    return min(max(between / total, 0.0), 1.0)


def local_sensitivity(fn, point, steps, sigmas=None):
    """Central-difference gradient of ``fn`` at ``point``.

    With ``sigmas`` each component is multiplied by the input's standard
    deviation (sigma-normalised derivatives).
    """
    x0 = np.asarray(point, dtype=float)
    h = np.broadcast_to(np.asarray(steps, dtype=float), x0.shape)
    if np.any(h <= 0):
        raise ValidationError("finite-difference steps must be positive")
    grad = np.empty_like(x0)
    for i in range(x0.size):
        up, down = x0.copy(), x0.copy()
        up[i] += h[i]
        down[i] -= h[i]
        try:
            f_up, f_down = float(fn(up)), float(fn(down))
        except Exception as exc:  # noqa: BLE001 - re-raised with the probe point
            raise ValidationError(f"model evaluation failed at probe {i} (+/- {h[i]}): {exc}") from exc
        if not (math.isfinite(f_up) and math.isfinite(f_down)):
            raise ValidationError(f"model returned a non-finite value at probe {i}")
        # the realised step absorbs rounding in x +/- h
        grad[i] = (f_up - f_down) / (up[i] - down[i])
    if sigmas is not None:
        grad = grad * np.asarray(sigmas, dtype=float)
    return grad


@dataclass(frozen=True)
class SaViews:
    output: str
    inputs: tuple
    scatter: dict  # input -> (n, 2) array of (input, output)
    parallel: np.ndarray  # rows sorted by output, columns inputs + output, scaled to [0, 1]
    shade: np.ndarray  # raw output per parallel row
    normalization: dict  # axis -> (min, max)

    def scatter_csv(self, name):
        lines = [f"{name},{self.output}"]
        lines += [f"{a!r},{b!r}" for a, b in self.scatter[name].tolist()]
        return "\n".join(lines) + "\n"

    def parallel_csv(self):
        axes = [*self.inputs, self.output]
        lines = [",".join([*axes, "shade"])]
        for row, s in zip(self.parallel.tolist(), self.shade.tolist()):
            lines.append(",".join(repr(v) for v in [*row, s]))
        return "\n".join(lines) + "\n"

    def normalization_csv(self):
        lines = ["axis,min,max"]
        lines += [f"{k},{lo!r},{hi!r}" for k, (lo, hi) in self.normalization.items()]
        return "\n".join(lines) + "\n"


def export_sa_views(table, output_name, inputs=None):
    """Scatter and parallel-coordinates datasets for visual sensitivity analysis.

    Parallel rows are sorted ascending by output so the highest values are
    drawn last. Each axis is min-max scaled; a constant axis maps to 0.
    """
    names = list(table.columns) if hasattr(table, "columns") and isinstance(table.columns, dict) else list(table)
    inputs = [c for c in (inputs or names) if c != output_name]
    y = _column(table, output_name)
    if y.size == 0:
        raise ValidationError("sample table is empty")
    scatter = {c: np.column_stack([_column(table, c), y]) for c in inputs}
    axes = [*inputs, output_name]
    raw = np.column_stack([_column(table, c) for c in axes])
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    scaled = np.where(hi > lo, (raw - lo) / span, 0.0)
    order = np.argsort(y, kind="stable")
    norm = {a: (float(l), float(h)) for a, l, h in zip(axes, lo, hi)}
    return SaViews(output_name, tuple(inputs), scatter, scaled[order], y[order], norm)
