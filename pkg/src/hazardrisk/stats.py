"""Univariate distributions, maximum-likelihood fitting and failure-evidence estimators.

Distributions are small immutable value objects; numerical work is delegated
to :mod:`scipy.stats`. Parameters are always in SI units of the modelled
quantity. Parameter conventions per family:

============  ==========================  ==================================
family        parameters                  notes
============  ==========================  ==================================
uniform       (low, high)
normal        (mean, std)
lognormal     (mu, sigma)                 of ``log(x)``
exponential   (rate,)
gamma         (shape, scale)
student_t     (df, loc, scale)
gev           (loc, scale, shape)         shape > 0 is heavy tailed (Frechet)
beta          (a, b)                      support [0, 1]
categorical   (p_0, ..., p_{K-1})         outcomes are integer codes 0..K-1
============  ==========================  ==================================
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import optimize, special, stats

from .errors import DegenerateDataError, FitError, ValidationError
from .rng import as_generator

FAMILIES = {
    "uniform": 2,
    "normal": 2,
    "lognormal": 2,
    "exponential": 1,
    "gamma": 2,
    "student_t": 3,
    "gev": 3,
    "beta": 2,
    "categorical": None,
}

_ALIASES = {"t": "student_t", "genextreme": "gev", "norm": "normal", "expon": "exponential"}

GRADIENT_TOL = 1e-8


def canonical_family(family):
    name = _ALIASES.get(family, family)
    if name not in FAMILIES:
        raise ValidationError(f"unknown distribution family {family!r}")
    return name


@dataclass(frozen=True)
class Distribution:
    """A parametric univariate law."""

    family: str
    params: tuple
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        family = canonical_family(self.family)
        object.__setattr__(self, "family", family)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        _check_params(family, params, self.labels)

    # -- scipy bridge -------------------------------------------------------
    def _frozen(self):
        p = self.params
        f = self.family
        if f == "uniform":
            return stats.uniform(loc=p[0], scale=p[1] - p[0])
        if f == "normal":
            return stats.norm(loc=p[0], scale=p[1])
        if f == "lognormal":
            return stats.lognorm(s=p[1], scale=math.exp(p[0]))
        if f == "exponential":
            return stats.expon(scale=1.0 / p[0])
        if f == "gamma":
            return stats.gamma(a=p[0], scale=p[1])
        if f == "student_t":
            return stats.t(df=p[0], loc=p[1], scale=p[2])
        if f == "gev":
            # scipy's genextreme uses c = -shape
            return stats.genextreme(c=-p[2], loc=p[0], scale=p[1])
        if f == "beta":
            return stats.beta(a=p[0], b=p[1])
        raise AssertionError(f)

    @property
    def is_discrete(self):
        return self.family == "categorical"

    @property
    def support(self):
        if self.is_discrete:
            return (0.0, float(len(self.params) - 1))
        lo, hi = self._frozen().support()
        return (float(lo), float(hi))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_discrete:
            cum = np.concatenate([[0.0], np.cumsum(self.params)])
            cum[-1] = 1.0
            k = np.floor(x)
            idx = np.clip(k + 1, 0, len(self.params)).astype(int)
            out = cum[idx]
            return out if out.ndim else float(out)
        out = self._frozen().cdf(x)
        return out if np.ndim(out) else float(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0.0) | (u >= 1.0)) or np.any(np.isnan(u)):
            raise ValidationError("quantile requires 0 < u < 1")
        return self._ppf(u)

    def _ppf(self, u):
        if self.is_discrete:
            cum = np.cumsum(self.params)
            cum[-1] = 1.0
            out = np.searchsorted(cum, u, side="left").astype(float)
            return out if out.ndim else float(out)
        out = self._frozen().ppf(u)
        return out if np.ndim(out) else float(out)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_discrete:
            k = np.round(x)
            ok = (k == x) & (k >= 0) & (k < len(self.params))
            probs = np.asarray(self.params)[np.where(ok, k, 0).astype(int)]
            with np.errstate(divide="ignore"):
                out = np.where(ok, np.log(probs), -np.inf)
            return out if out.ndim else float(out)
        out = self._frozen().logpdf(x)
        return out if np.ndim(out) else float(out)

    def mean(self):
        if self.is_discrete:
            return float(np.dot(np.arange(len(self.params)), self.params))
        return float(self._frozen().mean())

    def std(self):
        if self.is_discrete:
            k = np.arange(len(self.params))
            m = np.dot(k, self.params)
            return float(np.sqrt(np.dot((k - m) ** 2, self.params)))
        return float(self._frozen().std())

    def sample(self, n, rng=None):
        """Inverse-transform sampling: quantile of uniform draws."""
        n = int(n)
        if n < 0:
            raise ValidationError("sample size must be non-negative")
        if n == 0:
            return np.empty(0)
        gen = as_generator(rng)
        u = gen.random(n)
        # random() is in [0, 1); keep away from the open-interval endpoints
        u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
        return np.asarray(self._ppf(u), dtype=float)

    def to_dict(self):
        d = {"family": self.family, "params": list(self.params)}
        if self.labels:
            d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "family" not in d or "params" not in d:
            raise ValidationError(f"distribution spec needs 'family' and 'params': {d!r}")
        return cls(d["family"], tuple(d["params"]), tuple(d.get("labels", ())))


def _check_params(family, p, labels):
    def need(cond, msg):
        if not cond:
            raise ValidationError(f"{family}: {msg} (params={p})")

    if family == "categorical":
        need(len(p) >= 1, "needs at least one probability")
        need(all(q >= 0 for q in p), "probabilities must be non-negative")
        need(abs(sum(p) - 1.0) <= 1e-9, "probabilities must sum to 1")
        need(not labels or len(labels) == len(p), "label count must match probabilities")
        return
    need(len(p) == FAMILIES[family], f"expects {FAMILIES[family]} parameters")
    need(all(math.isfinite(q) for q in p), "parameters must be finite")
    if family == "uniform":
        need(p[0] < p[1], "low < high")
    elif family in ("normal", "lognormal"):
        need(p[1] > 0, "scale must be positive")
    elif family == "exponential":
        need(p[0] > 0, "rate must be positive")
    elif family in ("gamma", "beta"):
        need(p[0] > 0 and p[1] > 0, "parameters must be positive")
    elif family == "student_t":
        need(p[0] > 0 and p[2] > 0, "df and scale must be positive")
    elif family == "gev":
        need(p[1] > 0, "scale must be positive")


# -- module-level operations ----------------------------------------------------

def cdf(dist, x):
    return dist.cdf(x)


def quantile(dist, u):
    return dist.quantile(u)


def sample(dist, n, rng=None):
    return dist.sample(n, rng)


def pit_transform(data, dist):
    """Probability integral transform: apply the CDF element-wise."""
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        return np.empty(0)
    return np.asarray(dist.cdf(data), dtype=float)


# -- fitting -------------------------------------------------------------------

def fit_marginal(data, family):
    """Maximum-likelihood fit of ``family`` to ``data``.

    Closed forms are used for uniform, normal, lognormal, exponential and
    categorical. Gamma, beta, student-t and GEV are fitted numerically until
    the gradient norm of the mean negative log-likelihood is below 1e-8.
    """
    family = canonical_family(family)
    x = np.asarray(data, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise FitError("data contains non-finite values")

    if family == "categorical":
        if x.size == 0:
            raise FitError("too few points for categorical fit")
        k = np.round(x)
        if np.any(k != x) or np.any(k < 0):
            raise FitError("categorical data must be non-negative integer codes")
        counts = np.bincount(k.astype(int))
        return Distribution("categorical", tuple(counts / counts.sum()))

    nparams = FAMILIES[family]
    if x.size < nparams + 1:
        raise FitError(f"{family} fit needs at least {nparams + 1} points, got {x.size}")
    if np.ptp(x) == 0.0:
        raise DegenerateDataError(f"degenerate data: all {x.size} values equal {x[0]!r}")

    if family in ("lognormal", "gamma") and np.any(x <= 0):
        raise FitError(f"{family} requires strictly positive data")
    if family == "exponential" and np.any(x < 0):
        raise FitError("exponential requires non-negative data")
    if family == "beta" and np.any((x <= 0) | (x >= 1)):
        raise FitError("beta requires data strictly inside (0, 1)")

    if family == "uniform":
        return Distribution("uniform", (x.min(), x.max()))
    if family == "normal":
        return Distribution("normal", (x.mean(), x.std()))
    if family == "lognormal":
        lx = np.log(x)
        return Distribution("lognormal", (lx.mean(), lx.std()))
    if family == "exponential":
        return Distribution("exponential", (1.0 / x.mean(),))
    if family == "gamma":
        return _fit_gamma(x)
    if family == "beta":
        return _fit_beta(x)
    if family == "student_t":
        return _fit_t(x)
    if family == "gev":
        return _fit_gev(x)
    raise AssertionError(family)


def _fit_gamma(x):
    # profile likelihood in the shape: log(k) - digamma(k) = log(mean) - mean(log)
    s = math.log(x.mean()) - np.log(x).mean()
    k = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(100):
        g = math.log(k) - special.digamma(k) - s
        dg = 1.0 / k - special.polygamma(1, k)
        step = g / dg
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        k = k_new
        if abs(step) <= 1e-15 * k:
            break
    scale = x.mean() / k
    grad = _gamma_grad(x, k, scale)
    if np.linalg.norm(grad) > GRADIENT_TOL:
        raise FitError(f"gamma fit did not converge (|grad|={np.linalg.norm(grad):.2e})")
    return Distribution("gamma", (k, scale))


def _gamma_grad(x, k, scale):
    # gradient of the mean log-likelihood in (shape, scale)
    dk = np.log(x).mean() - math.log(scale) - special.digamma(k)
    ds = x.mean() / scale**2 - k / scale
    return np.array([dk, ds])


def _newton_polish(fun_grad, theta, max_iter=30):
    """Newton iterations using a finite-difference Hessian of the analytic gradient."""
    for _ in range(max_iter):
        f, g = fun_grad(theta)
        if np.linalg.norm(g) < GRADIENT_TOL:
            return theta, g
        d = theta.size
        h = np.empty((d, d))
        for j in range(d):
            eps = 1e-6 * max(1.0, abs(theta[j]))
            e = np.zeros(d)
            e[j] = eps
            h[:, j] = (fun_grad(theta + e)[1] - fun_grad(theta - e)[1]) / (2 * eps)
        h = 0.5 * (h + h.T)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-8:
            cand = theta - t * step
            fc, _ = fun_grad(cand)
            if np.isfinite(fc) and fc <= f + 1e-14 * abs(f):
                break
            t /= 2.0
        else:
            break
        theta = cand
    return theta, fun_grad(theta)[1]


def _minimize_nll(fun_grad, theta0, family):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(fun_grad, theta0, jac=True, method="BFGS",
                                options={"gtol": GRADIENT_TOL, "maxiter": 2000})
        theta, g = _newton_polish(fun_grad, np.asarray(res.x, dtype=float))
    if not np.all(np.isfinite(g)) or np.linalg.norm(g) > GRADIENT_TOL:
        raise FitError(f"{family} fit did not converge (|grad|={np.linalg.norm(g):.2e})")
    return theta


def _fit_beta(x):
    lx, l1x = np.log(x).mean(), np.log1p(-x).mean()

    def fun_grad(theta):
        a, b = np.exp(theta)
        ll = (a - 1) * lx + (b - 1) * l1x - special.betaln(a, b)
        dab = special.digamma(a + b)
        ga = lx - special.digamma(a) + dab
        gb = l1x - special.digamma(b) + dab
        return -ll, -np.array([ga * a, gb * b])

    m, v = x.mean(), x.var()
    common = max(m * (1 - m) / v - 1.0, 1e-3)
    theta = _minimize_nll(fun_grad, np.log([m * common, (1 - m) * common]), "beta")
    a, b = np.exp(theta)
    return Distribution("beta", (a, b))


def _fit_t(x):
    def fun_grad(theta):
        nu, mu, sigma = math.exp(theta[0]), theta[1], math.exp(theta[2])
        z = (x - mu) / sigma
        q = nu + z * z
        ll = (special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2)
              - 0.5 * math.log(nu * math.pi) - math.log(sigma)
              - (nu + 1) / 2 * np.log1p(z * z / nu))
        g_mu = (nu + 1) * z / (sigma * q)
        g_sigma = -1.0 / sigma + (nu + 1) * z * z / (sigma * q)
        g_nu = (0.5 * special.digamma((nu + 1) / 2) - 0.5 * special.digamma(nu / 2)
                - 0.5 / nu - 0.5 * np.log1p(z * z / nu) + (nu + 1) * z * z / (2 * nu * q))
        grad = np.array([g_nu.mean() * nu, g_mu.mean(), g_sigma.mean() * sigma])
        return -ll.mean(), -grad

    med = np.median(x)
    mad = np.median(np.abs(x - med)) * 1.4826 or x.std()
    # kurtosis-based df initialisation: excess kurtosis of t is 6/(nu-4)
    kurt = stats.kurtosis(x)
    nu0 = 4.0 + 6.0 / kurt if kurt > 0.05 else 30.0
    theta = _minimize_nll(fun_grad, np.array([math.log(nu0), med, math.log(mad)]), "student_t")
    return Distribution("student_t", (math.exp(theta[0]), theta[1], math.exp(theta[2])))


def _gev_pwm_init(x):
    """Probability-weighted-moment estimates (Hosking, Wallis & Wood)."""
    xs = np.sort(x)
    n = xs.size
    j = np.arange(n)
    b0 = xs.mean()
    b1 = np.sum(j / (n - 1) * xs) / n
    b2 = np.sum(j * (j - 1) / ((n - 1) * (n - 2)) * xs) / n
    c = (2 * b1 - b0) / (3 * b2 - b0) - math.log(2) / math.log(3)
    k = 7.8590 * c + 2.9554 * c * c
    if abs(k) < 1e-6:
        scale = (2 * b1 - b0) / math.log(2)
        return b0 - 0.5772156649 * scale, scale, 0.0
    g = math.gamma(1 + k)
    scale = (2 * b1 - b0) * k / (g * (1 - 2.0 ** (-k)))
    loc = b0 + scale * (g - 1) / k
    return loc, scale, -k


def _fit_gev(x):
    def fun_grad(theta):
        mu, sigma, xi = theta[0], math.exp(theta[1]), theta[2]
        z = (x - mu) / sigma
        if abs(xi) < 1e-7:
            xi = 1e-7 if xi >= 0 else -1e-7
        t = 1.0 + xi * z
        if np.any(t <= 0):
            return np.inf, np.full(3, np.nan)
        lt = np.log(t)
        w = np.exp(-lt / xi)
        ll = -math.log(sigma) - (1 + 1 / xi) * lt - w
        g_mu = (1 + xi - w) / (sigma * t)
        g_sigma = -1.0 / sigma + (1 + xi - w) * z / (sigma * t)
        g_xi = lt / xi**2 * (1 - w) + z * (w - xi - 1) / (xi * t)
        grad = np.array([g_mu.mean(), g_sigma.mean() * sigma, g_xi.mean()])
        return -ll.mean(), -grad

    loc, scale, xi = _gev_pwm_init(x)
    # keep every observation inside the support of the starting point
    z = (x - loc) / scale
    for _ in range(60):
        if np.all(1 + xi * z > 0):
            break
        xi *= 0.5
    theta = _minimize_nll(fun_grad, np.array([loc, math.log(scale), xi]), "gev")
    return Distribution("gev", (theta[0], math.exp(theta[1]), theta[2]))


# -- failure evidence ----------------------------------------------------------

@dataclass(frozen=True)
class FailureEvidence:
    """Observed failures over either ``trials`` demands or ``exposure_hours``."""

    failures: int
    trials: int | None = None
    exposure_hours: float | None = None

    def __post_init__(self):
        if int(self.failures) != self.failures or self.failures < 0:
            raise ValidationError("failure count must be a non-negative integer")
        if (self.trials is None) == (self.exposure_hours is None):
            raise ValidationError("give exactly one of trials or exposure_hours")
        if self.trials is not None:
            if int(self.trials) != self.trials or self.trials < 0:
                raise ValidationError("trial count must be a non-negative integer")
            if self.failures > self.trials:
                raise ValidationError(f"{self.failures} failures exceed {self.trials} trials")
        elif not self.exposure_hours > 0:
            raise ValidationError("exposure time must be positive")


@dataclass(frozen=True)
class FailurePosterior:
    mode: str  # "demand" or "rate"
    posterior: Distribution
    point: float
    mle: float | None


def estimate_failure_probability(evidence):
    """Bayesian per-demand failure probability under a uniform prior.

    The posterior is beta(n_f + 1, n - n_f + 1); its mean (n_f + 1)/(n + 2)
    is the point estimate.
    """
    if evidence.trials is None:
        raise ValidationError("demand-mode estimate needs a trial count")
    nf, n = int(evidence.failures), int(evidence.trials)
    post = Distribution("beta", (nf + 1, n - nf + 1))
    return FailurePosterior("demand", post, (nf + 1) / (n + 2), nf / n if n > 0 else None)


def estimate_failure_rate(evidence):
    """Bayesian failure rate per hour under an improper uniform prior on [0, inf).

    The posterior of the rate is gamma(n_f + 1) scaled by 1/T.
    """
    if evidence.exposure_hours is None:
        raise ValidationError("rate-mode estimate needs an exposure time")
    nf, t = int(evidence.failures), float(evidence.exposure_hours)
    post = Distribution("gamma", (nf + 1, 1.0 / t))
    return FailurePosterior("rate", post, (nf + 1) / t, nf / t)
