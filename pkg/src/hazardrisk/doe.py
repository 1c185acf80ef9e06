"""Screening designs and linear models with coefficient confidence intervals.

Designs are coded in {-1, +1}. Model terms are written the way Pareto charts
label them: ``"1"`` for the intercept, ``"x1"`` for a main effect,
``"x2:x3"`` for an interaction and ``"abs(x2)"`` for the absolute-value
transform of a single factor.
"""

from dataclasses import dataclass, field
import csv
import itertools
import re

import numpy as np
from scipy import stats

from .errors import DegenerateDataError, RankDeficiencyError, ValidationError
from .rng import as_generator

MAX_FACTORIAL_K = 30


@dataclass(frozen=True)
class FactorSpec:
    name: str
    low: float
    high: float
    unit: str = ""

    def __post_init__(self):
        if not self.low < self.high:
            raise ValidationError(f"factor {self.name!r}: low must be below high")


@dataclass(frozen=True)
class DesignMatrix:
    """Coded design in standard order plus the order in which runs are executed."""

    coded: np.ndarray
    factor_names: tuple
    replicates: int = 1
    run_order: np.ndarray = None

    def __post_init__(self):
        coded = np.array(self.coded, dtype=float)
        coded.setflags(write=False)
        object.__setattr__(self, "coded", coded)
        object.__setattr__(self, "factor_names", tuple(self.factor_names))
        if coded.ndim != 2 or coded.shape[1] != len(self.factor_names):
            raise ValidationError("design shape does not match factor names")
        order = np.arange(len(coded)) if self.run_order is None else np.asarray(self.run_order)
        if sorted(order.tolist()) != list(range(len(coded))):
            raise ValidationError("run order must be a permutation of the rows")
        order = order.copy()
        order.setflags(write=False)
        object.__setattr__(self, "run_order", order)

    @property
    def n_runs(self):
        return self.coded.shape[0]

    @property
    def k(self):
        return self.coded.shape[1]

    def in_run_order(self):
        return self.coded[self.run_order]


def _names(k):
    return tuple(f"x{i + 1}" for i in range(k))


def ofat_design(k, replicates=1, factor_names=None):
    """One-factor-at-a-time: the all-low run followed by one single flip per factor."""
    if k < 1:
        raise ValidationError("OFAT needs at least one factor")
    base = -np.ones((k + 1, k))
    for i in range(k):
        base[i + 1, i] = 1.0
    return DesignMatrix(np.tile(base, (replicates, 1)), factor_names or _names(k), replicates)


def full_factorial_design(k, replicates=1, randomize=False, rng=None, factor_names=None):
    """All 2^k corners in standard (Yates) order, replicated block-wise.

    The first factor alternates fastest. With ``randomize`` the run order is
    a seeded permutation; the design content itself is unchanged.
    """
    if k < 1:
        raise ValidationError("factorial design needs at least one factor")
    if k > MAX_FACTORIAL_K:
        raise ValidationError(f"2^{k} runs is too large (limit k <= {MAX_FACTORIAL_K})")
    if replicates < 1:
        raise ValidationError("replicates must be at least 1")
    idx = np.arange(2**k)
    base = np.where((idx[:, None] >> np.arange(k)) & 1, 1.0, -1.0)
    coded = np.tile(base, (replicates, 1))
    order = None
    if randomize:
        order = as_generator(rng).permutation(len(coded))
    return DesignMatrix(coded, factor_names or _names(k), replicates, order)


def decode_design(design, factors):
    """Map coded levels to physical units: -1 -> low, +1 -> high, affine in between."""
    coded = design.coded if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    coded = np.atleast_2d(coded)
    if coded.shape[1] != len(factors):
        raise ValidationError(f"design has {coded.shape[1]} columns but {len(factors)} factors given")
    low = np.array([f.low for f in factors])
    high = np.array([f.high for f in factors])
    return (low + high) / 2 + coded * (high - low) / 2


def encode_design(physical, factors):
    physical = np.atleast_2d(np.asarray(physical, dtype=float))
    if physical.shape[1] != len(factors):
        raise ValidationError(f"matrix has {physical.shape[1]} columns but {len(factors)} factors given")
    low = np.array([f.low for f in factors])
    high = np.array([f.high for f in factors])
    return (physical - (low + high) / 2) / ((high - low) / 2)


# -- model terms ---------------------------------------------------------------

_TERM_RE = re.compile(r"^(abs)\((\w+)\)$")


@dataclass(frozen=True)
class Term:
    factors: tuple = ()
    transform: str | None = None

    @property
    def name(self):
        if not self.factors:
            return "1"
        if self.transform:
            return f"{self.transform}({self.factors[0]})"
        return ":".join(self.factors)

    @property
    def is_intercept(self):
        return not self.factors

    def __str__(self):
        return self.name

    def evaluate(self, columns, n):
        if not self.factors:
            return np.ones(n)
        if self.transform == "abs":
            return np.abs(np.asarray(columns[self.factors[0]], dtype=float))
        out = np.ones(n)
        for f in self.factors:
            out = out * np.asarray(columns[f], dtype=float)
        return out


def parse_term(text):
    if isinstance(text, Term):
        return text
    text = text.strip().replace(" ", "")
    if text in ("1", "intercept"):
        return Term()
    m = _TERM_RE.match(text)
    if m:
        return Term((m.group(2),), m.group(1))
    parts = tuple(p for p in re.split(r"[:*]", text))
    if not all(re.fullmatch(r"\w+", p) for p in parts):
        raise ValidationError(f"cannot parse model term {text!r}")
    return Term(parts)


def parse_terms(items, factor_names=None):
    terms = [parse_term(t) for t in items]
    names = [t.name for t in terms]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate model terms in {names}")
    if factor_names is not None:
        known = set(factor_names)
        for t in terms:
            missing = [f for f in t.factors if f not in known]
            if missing:
                raise ValidationError(f"term {t.name!r} references unknown factor(s) {missing}")
    return terms


def interaction_terms(factor_names, max_order=None, intercept=True):
    """Intercept, main effects and all interactions up to ``max_order``."""
    k = len(factor_names)
    max_order = k if max_order is None else max_order
    terms = [Term()] if intercept else []
    for r in range(1, max_order + 1):
        for combo in itertools.combinations(factor_names, r):
            terms.append(Term(tuple(combo)))
    return terms


def main_effect_terms(factor_names, intercept=True):
    return interaction_terms(factor_names, 1, intercept)


def regressor_matrix(columns, terms):
    """Build the regressor matrix from a mapping ``factor name -> values``."""
    n = len(next(iter(columns.values())))
    for t in terms:
        for f in t.factors:
            if f not in columns:
                raise ValidationError(f"term {t.name!r} references unknown factor {f!r}")
    return np.column_stack([t.evaluate(columns, n) for t in terms])


def design_columns(design):
    return {name: design.coded[:, j] for j, name in enumerate(design.factor_names)}


def estimable_terms(columns, terms, tol=1e-10):
    """Split terms into estimable ones and those aliased with earlier terms."""
    keep, dropped = _rank_check(regressor_matrix(columns, terms), tol)
    return [terms[j] for j in keep], [terms[j] for j in dropped]


# -- regression ----------------------------------------------------------------

@dataclass(frozen=True)
class RegressionModel:
    terms: tuple
    coefficients: np.ndarray
    std_errors: np.ndarray
    sigma: float
    dof: int
    residuals: np.ndarray
    fitted: np.ndarray
    response: np.ndarray
    r_squared: float
    alpha: float = 0.05
    degenerate_response: bool = False
    X: np.ndarray = field(default=None, repr=False, compare=False)
    response_transform: str | None = None

    @property
    def names(self):
        return [t.name for t in self.terms]

    @property
    def exact_fit(self):
        return self.sigma == 0.0 or self.sigma <= 1e-12 * max(1.0, float(np.abs(self.response).max()))

    def confidence_intervals(self, alpha=None):
        alpha = self.alpha if alpha is None else alpha
        half = stats.t.ppf(1 - alpha / 2, self.dof) * self.std_errors
        return self.coefficients - half, self.coefficients + half

    @property
    def ci_low(self):
        return self.confidence_intervals()[0]

    @property
    def ci_high(self):
        return self.confidence_intervals()[1]

    def p_values(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            tstat = self.coefficients / self.std_errors
        p = 2 * stats.t.sf(np.abs(tstat), self.dof)
        return np.where(self.std_errors == 0, np.where(self.coefficients == 0, 1.0, 0.0), p)

    def predict(self, columns):
        X = regressor_matrix(columns, self.terms)
        return X @ self.coefficients

    def coefficient(self, name):
        return float(self.coefficients[self.names.index(name)])


def fit_linear_model(X, y, terms=None, alpha=0.05, response_transform=None):
    """Ordinary least squares (the MLE under normal noise) with t-based CIs.

    ``X`` is either a regressor matrix (then ``terms`` names its columns) or a
    mapping of factor columns from which the ``terms`` are evaluated.
    ``response_transform="log"`` fits ``log(y)``.
    """
    if isinstance(X, dict):
        if terms is None:
            raise ValidationError("terms are required when X is a column mapping")
        terms = parse_terms(terms)
        X = regressor_matrix(X, terms)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValidationError(f"X has shape {X.shape} but y has {y.size} values")
    n, p = X.shape
    if terms is None:
        terms = [Term((f"c{j}",)) for j in range(p)]
    terms = tuple(parse_terms(terms))
    if len(terms) != p:
        raise ValidationError(f"{len(terms)} terms for {p} regressor columns")
    if response_transform == "log":
        if np.any(y <= 0):
            raise ValidationError("log response requires positive values")
        y = np.log(y)
    elif response_transform is not None:
        raise ValidationError(f"unsupported response transform {response_transform!r}")
    if n <= p:
        raise ValidationError(f"need more runs ({n}) than model terms ({p})")

    _, dropped = _rank_check(X)
    if dropped:
        names = [terms[j].name for j in dropped]
        raise RankDeficiencyError(f"regressor matrix is rank deficient; collinear terms: {names}", names)

    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ beta
    resid = y - fitted
    dof = n - p
    ss_res = float(resid @ resid)
    sigma = float(np.sqrt(ss_res / dof))
    xtx_inv = np.linalg.inv(X.T @ X)
    se = sigma * np.sqrt(np.diag(xtx_inv))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    degenerate = ss_tot <= 1e-24 * max(1.0, float(y @ y))
    r2 = 0.0 if degenerate else 1.0 - ss_res / ss_tot
    return RegressionModel(terms, beta, se, sigma, dof, resid, fitted, y,
                           float(min(max(r2, 0.0), 1.0)), alpha, degenerate, X, response_transform)


def _rank_check(X, tol=1e-10):
    keep, dropped = [], []
    scale = max(1.0, float(np.abs(X).max())) * X.shape[0]
    rank = 0
    for j in range(X.shape[1]):
        r = np.linalg.matrix_rank(X[:, keep + [j]], tol=tol * scale)
        if r > rank:
            keep.append(j)
            rank = r
        else:
            dropped.append(j)
    return keep, dropped


@dataclass(frozen=True)
class Selection:
    terms: list
    degenerate: bool = False

    @property
    def names(self):
        return [t.name for t in self.terms]


def select_significant_terms(model, alpha=0.05):
    """Terms whose (1 - alpha) CI excludes zero, in Pareto order (largest |beta| first).

    An exact fit (zero residual variance) has no usable CIs: every term with
    a non-zero coefficient is returned and the selection is flagged degenerate.
    The intercept is never part of the selection.
    """
    if model.dof < 1:
        raise ValidationError("significance screening needs at least one residual degree of freedom")
    idx = [j for j, t in enumerate(model.terms) if not t.is_intercept]
    beta = model.coefficients
    if model.exact_fit:
        tol = 1e-9 * max(1.0, float(np.abs(beta).max()))
        chosen = [j for j in idx if abs(beta[j]) > tol]
        degenerate = True
    else:
        lo, hi = model.confidence_intervals(alpha)
        chosen = [j for j in idx if lo[j] > 0 or hi[j] < 0]
        degenerate = False
    # sorted() is stable, so exact ties keep declaration order
    chosen = sorted(chosen, key=lambda j: -abs(beta[j]))
    return Selection([model.terms[j] for j in chosen], degenerate)


def backward_elimination(columns, y, terms, alpha=0.05, response_transform=None):
    """Drop the least significant non-intercept term one at a time until all are significant."""
    terms = list(parse_terms(terms))
    while True:
        model = fit_linear_model(columns, y, terms, alpha, response_transform)
        p = model.p_values()
        cand = [j for j, t in enumerate(model.terms) if not t.is_intercept]
        if not cand:
            return model
        worst = max(cand, key=lambda j: p[j])
        if p[worst] <= alpha:
            return model
        terms.pop(worst)


def pareto_table(model, alpha=None):
    """Rows (term, beta, ci_low, ci_high) for non-intercept terms, largest |beta| first."""
    lo, hi = model.confidence_intervals(alpha)
    idx = [j for j, t in enumerate(model.terms) if not t.is_intercept]
    # rounding to 12 significant digits keeps float-noise ties in declaration order
    idx = sorted(idx, key=lambda j: -float(f"{abs(model.coefficients[j]):.12g}"))
    return [(model.terms[j].name, float(model.coefficients[j]), float(lo[j]), float(hi[j])) for j in idx]


# -- diagnostics ---------------------------------------------------------------

@dataclass(frozen=True)
class ResidualReport:
    qq_theoretical: np.ndarray
    qq_residuals: np.ndarray
    qq_correlation: float
    fitted: np.ndarray
    residuals: np.ndarray
    run_index: np.ndarray
    r_squared: float
    lack_of_fit_p: float | None
    lack_of_fit: bool | None


def diagnostics(model, run_order=None, alpha=0.05, design=None):
    """Q-Q data, residual-vs-fitted, residual-vs-run-order and a lack-of-fit test.

    The lack-of-fit F test compares residual variation against pure error
    from replicated runs. Replicates are grouped by the rows of ``design``
    (the coded factor matrix), or by the regressor rows when it is omitted.
    The test is only available when some rows repeat and the model leaves
    degrees of freedom for lack of fit.
    """
    r = np.asarray(model.residuals, dtype=float)
    n = r.size
    theo = stats.norm.ppf((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    sr = np.sort(r)
    if np.ptp(sr) == 0:
        qq_r = 1.0 if np.all(sr == 0) else float("nan")
    else:
        qq_r = float(np.corrcoef(theo, sr)[0, 1])
    order = np.arange(n) if run_order is None else np.asarray(run_order)

    lof_p = lof = None
    if model.X is not None:
        points = model.X if design is None else np.asarray(design, dtype=float).reshape(n, -1)
        _, inverse, counts = np.unique(np.round(points, 12), axis=0,
                                       return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        m = counts.size
        p = model.X.shape[1]
        df_pe, df_lof = n - m, m - p
        if df_pe > 0 and df_lof > 0:
            means = np.bincount(inverse, model.response) / counts
            ss_pe = float(np.sum((model.response - means[inverse]) ** 2))
            ss_lof = float(r @ r) - ss_pe
            if ss_pe > 0:
                f = (ss_lof / df_lof) / (ss_pe / df_pe)
                lof_p = float(stats.f.sf(f, df_lof, df_pe))
                lof = lof_p < alpha
    return ResidualReport(theo, sr, qq_r, np.asarray(model.fitted), r, order,
                          model.r_squared, lof_p, lof)


# -- CSV round trips -----------------------------------------------------------

def write_matrix_csv(path, matrix, header):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.atleast_2d(matrix):
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(v) for v in row] for row in body], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric cell ({exc})") from None
    return header, data.reshape(len(body), len(header))


def write_pareto_csv(path, model, alpha=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["term", "beta", "ci_low", "ci_high"])
        for name, b, lo, hi in pareto_table(model, alpha):
            w.writerow([name, repr(b), repr(lo), repr(hi)])


def check_responses(y):
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0:
        raise DegenerateDataError("response has zero variance; screening is degenerate")
    return y
