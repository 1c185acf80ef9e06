"""Gaussian copulas and joint models built from marginals plus a copula."""

from dataclasses import dataclass
import csv
import logging

import numpy as np
from scipy import stats

from .errors import FitError, ValidationError
from .rng import as_generator
from .stats import Distribution, fit_marginal, pit_transform

logger = logging.getLogger(__name__)

CLAMP = 1e-12
PSD_TOL = 1e-10


def nearest_correlation(corr):
    """Project a symmetric matrix onto the correlation matrices.

    Negative eigenvalues are clipped to zero and the diagonal is rescaled to
    one. A matrix that is already PSD with unit diagonal is returned as is.
    """
    c = np.array(corr, dtype=float)
    c = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(c)
    if w.min() >= -PSD_TOL and np.allclose(np.diag(c), 1.0, atol=0, rtol=0):
        return c
    w = np.clip(w, 0.0, None)
    c = (v * w) @ v.T
    d = np.sqrt(np.diag(c))
    c = c / np.outer(d, d)
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    return c


@dataclass(frozen=True)
class CopulaModel:
    corr: np.ndarray

    def __post_init__(self):
        c = np.array(self.corr, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValidationError("correlation matrix must be square")
        if not np.allclose(c, c.T, atol=1e-12):
            raise ValidationError("correlation matrix must be symmetric")
        if np.any(np.abs(np.diag(c) - 1.0) > 1e-12):
            raise ValidationError("correlation matrix must have a unit diagonal")
        if np.any(np.abs(c) > 1.0 + 1e-12):
            raise ValidationError("correlations must lie in [-1, 1]")
        if np.linalg.eigvalsh(c).min() < -PSD_TOL:
            raise ValidationError("correlation matrix is not positive semi-definite")
        np.fill_diagonal(c, 1.0)
        c.setflags(write=False)
        object.__setattr__(self, "corr", c)

    @property
    def dimension(self):
        return self.corr.shape[0]

    def _factor(self):
        try:
            return np.linalg.cholesky(self.corr)
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(self.corr)
            return v * np.sqrt(np.clip(w, 0.0, None))

    def sample_normal(self, n, rng=None):
        z = as_generator(rng).standard_normal((int(n), self.dimension))
        return z @ self._factor().T

    def sample(self, n, rng=None):
        return _normal_to_uniform(self.sample_normal(n, rng))

    def logpdf(self, u):
        """Log copula density at points ``u`` (rows) in (0,1)^d."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        z = stats.norm.ppf(u)
        sign, logdet = np.linalg.slogdet(self.corr)
        if sign <= 0:
            raise ValidationError("copula density undefined for a singular correlation matrix")
        inv = np.linalg.inv(self.corr)
        quad = np.einsum("ij,jk,ik->i", z, inv - np.eye(self.dimension), z)
        return -0.5 * logdet - 0.5 * quad


def _normal_to_uniform(z):
    u = stats.norm.cdf(z)
    # cdf saturates to 1 for z > ~8.3; the survival function keeps precision
    upper = z > 0
    u[upper] = 1.0 - stats.norm.sf(z[upper])
    return np.clip(u, CLAMP, 1.0 - CLAMP)


def normal_scores(u):
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise FitError("uniform samples must lie in [0, 1]")
    bad = (u <= 0) | (u >= 1)
    if np.any(bad):
        logger.warning("clamping %d samples at 0 or 1 to [%g, 1-%g]", int(bad.sum()), CLAMP, CLAMP)
        u = np.clip(u, CLAMP, 1.0 - CLAMP)
    return stats.norm.ppf(u)


def fit_gaussian_copula(u):
    """Gaussian copula estimate from uniform-scale samples (rows = observations).

    The estimator is the correlation matrix of the normal scores, projected to
    the nearest correlation matrix when rounding leaves it slightly indefinite.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise FitError("copula fit expects an n x d matrix")
    n, d = u.shape
    if n < d + 1:
        raise FitError(f"copula fit needs at least {d + 1} samples, got {n}")
    z = normal_scores(u)
    sd = z.std(axis=0)
    if np.any(sd == 0):
        raise FitError("a column of normal scores is constant")
    corr = np.corrcoef(z, rowvar=False) if d > 1 else np.ones((1, 1))
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CopulaModel(nearest_correlation(corr))


def sample_copula(model, n, rng=None):
    n = int(n)
    if n == 0:
        return np.empty((0, model.dimension))
    return model.sample(n, rng)


@dataclass(frozen=True)
class JointModel:
    marginals: tuple
    copula: CopulaModel
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if len(self.marginals) != self.copula.dimension:
            raise ValidationError(
                f"{len(self.marginals)} marginals for a {self.copula.dimension}-dimensional copula")

    @property
    def dimension(self):
        return self.copula.dimension

    def transform(self, u):
        """Map a uniform-scale matrix to physical units through the marginal quantiles."""
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        for j, m in enumerate(self.marginals):
            out[:, j] = m._ppf(u[:, j])
        return out

    def logpdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lp = np.zeros(x.shape[0])
        u = np.empty_like(x)
        for j, m in enumerate(self.marginals):
            lp += m.logpdf(x[:, j])
            u[:, j] = m.cdf(x[:, j])
        inside = np.isfinite(lp)
        out = np.full(x.shape[0], -np.inf)
        if inside.any():
            uu = np.clip(u[inside], CLAMP, 1 - CLAMP)
            out[inside] = lp[inside] + self.copula.logpdf(uu)
        return out


def sample_joint(joint, n, rng=None):
    return joint.transform(sample_copula(joint.copula, n, rng))


def sample_switched(joints, probabilities, n, rng=None):
    """Draw a category per row, then sample from that category's joint model.

    Returns ``(codes, matrix)``. Rows are filled category by category from
    one copula sample so the draw count does not depend on the mixing.
    """
    gen = as_generator(rng)
    probabilities = np.asarray(probabilities, dtype=float)
    cum = np.cumsum(probabilities)
    cum[-1] = 1.0
    codes = np.searchsorted(cum, gen.random(int(n)), side="right")
    codes = np.minimum(codes, len(probabilities) - 1)
    return codes, sample_conditional(joints, codes, gen)


def sample_conditional(joints, codes, rng=None):
    """Sample row i from ``joints[codes[i]]``; all joints share a dimension."""
    gen = as_generator(rng)
    codes = np.asarray(codes, dtype=int)
    d = joints[0].dimension
    z = gen.standard_normal((codes.size, d))
    out = np.empty((codes.size, d))
    for k, joint in enumerate(joints):
        rows = codes == k
        if rows.any():
            u = _normal_to_uniform(z[rows] @ joint.copula._factor().T)
            out[rows] = joint.transform(u)
    return out


def fit_residual_copula(residuals):
    """Normal marginals per residual column plus a Gaussian copula over their PIT scores.

    Needs at least two columns (residuals of two or more regression models
    over the same experiments) and at least ``m + 2`` rows.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 2 or r.shape[1] < 2:
        raise FitError("residual copula needs at least two residual columns")
    n, m = r.shape
    if n < m + 2:
        raise FitError(f"residual copula needs at least {m + 2} experiments, got {n}")
    marginals = tuple(fit_marginal(r[:, j], "normal") for j in range(m))
    u = np.column_stack([pit_transform(r[:, j], marginals[j]) for j in range(m)])
    return JointModel(marginals, fit_gaussian_copula(u))


def write_corr_csv(path, model, names=None):
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(model.dimension)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["", *names])
        for name, row in zip(names, model.corr):
            w.writerow([name, *(repr(float(v)) for v in row)])


def read_corr_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    corr = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return CopulaModel(corr), names


def joint_to_dict(joint):
    return {
        "label": joint.label,
        "marginals": [m.to_dict() for m in joint.marginals],
        "correlation": joint.copula.corr.tolist(),
    }


def joint_from_dict(d):
    try:
        marginals = [Distribution.from_dict(m) for m in d["marginals"]]
        corr = d.get("correlation")
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed joint model spec: {exc}") from None
    if corr is None:
        corr = np.eye(len(marginals))
    return JointModel(tuple(marginals), CopulaModel(np.asarray(corr, dtype=float)), d.get("label"))
