"""Closed-form algebra over diagonal Gaussians.

Product-of-experts posteriors, KL divergences (closed form and Monte Carlo),
reparameterized sampling, mixture moment matching, and spherical
interpolation. Everything here is a pure function over immutable values and
safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericsError

LOG_VAR_MIN = -20.0
LOG_VAR_MAX = 20.0

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class DiagGaussian:
    """Diagonal-covariance Gaussian. log_var is clamped to [-20, 20] so
    exp() never overflows and PoE precisions stay non-degenerate."""

    mean: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        log_var = np.clip(np.asarray(self.log_var, dtype=np.float64), LOG_VAR_MIN, LOG_VAR_MAX)
        if mean.shape != log_var.shape or mean.ndim != 1:
            raise DimensionError(f"mean shape {mean.shape} vs log_var shape {log_var.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(log_var))):
            raise NumericsError("non-finite Gaussian parameters")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_var", log_var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)

    @classmethod
    def standard(cls, dim: int) -> "DiagGaussian":
        return cls(np.zeros(dim), np.zeros(dim))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return sample_reparam(self, rng, n)

    def log_pdf(self, z: np.ndarray) -> np.ndarray:
        """Log density at each row of z (n, d) -> (n,)."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        diff = z - self.mean
        return -0.5 * ((diff * diff) / self.var + self.log_var + _LOG_2PI).sum(axis=1)


@dataclass(frozen=True)
class GaussianMixture:
    """Finite mixture of diagonal Gaussians sharing one dimension."""

    weights: np.ndarray
    components: tuple[DiagGaussian, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        comps = tuple(self.components)
        if len(comps) == 0:
            raise DimensionError("mixture needs at least one component")
        if w.shape != (len(comps),):
            raise DimensionError(f"{len(comps)} components but weight shape {w.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DimensionError("mixture weights must be nonnegative and sum to 1")
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise DimensionError("mixture components must share one dimension")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @classmethod
    def equal_weight(cls, components) -> "GaussianMixture":
        components = tuple(components)
        n = len(components)
        return cls(np.full(n, 1.0 / n), components)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.components), size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        means = np.stack([c.mean for c in self.components])
        stds = np.stack([np.exp(0.5 * c.log_var) for c in self.components])
        return means[idx] + stds[idx] * eps

    def log_pdf(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        per_comp = np.stack([c.log_pdf(z) for c in self.components], axis=1)  # (n, k)
        per_comp = per_comp + np.log(np.maximum(self.weights, 1e-300))
        m = per_comp.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(per_comp - m).sum(axis=1, keepdims=True))).ravel()

    def responsibilities(self, z: np.ndarray) -> np.ndarray:
        """Posterior over component index at each row of z -> (n, k)."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        per_comp = np.stack([c.log_pdf(z) for c in self.components], axis=1)
        per_comp = per_comp + np.log(np.maximum(self.weights, 1e-300))
        per_comp -= per_comp.max(axis=1, keepdims=True)
        p = np.exp(per_comp)
        return p / p.sum(axis=1, keepdims=True)


def poe_product(experts: list[DiagGaussian], include_prior: bool = True, dim: int | None = None) -> DiagGaussian:
    """Product of diagonal Gaussian experts, optionally times the N(0, I)
    universal expert. Precisions add; the mean is precision-weighted."""
    experts = list(experts)
    if not experts and not include_prior:
        raise DimensionError("empty expert list with prior disabled has no normalizable product")
    if not experts:
        if dim is None:
            raise DimensionError("empty expert list needs an explicit dim")
        # No observations: the posterior reduces to the prior.
        return DiagGaussian.standard(dim)
    d = experts[0].dim
    if any(e.dim != d for e in experts) or (dim is not None and dim != d):
        raise DimensionError("experts must share one dimension")
    precision = np.ones(d) if include_prior else np.zeros(d)
    weighted_mean = np.zeros(d)
    for e in experts:
        prec = np.exp(-e.log_var)
        precision = precision + prec
        weighted_mean = weighted_mean + prec * e.mean
    var = 1.0 / precision
    return DiagGaussian(var * weighted_mean, np.log(var))


def kl_diag(a: DiagGaussian, b: DiagGaussian) -> float:
    """KL(a || b) in closed form; >= 0 up to ~1e-12 rounding."""
    if a.dim != b.dim:
        raise DimensionError(f"KL dims {a.dim} vs {b.dim}")
    var_a, var_b = a.var, b.var
    diff = a.mean - b.mean
    terms = 0.5 * (b.log_var - a.log_var) + (var_a + diff * diff) / (2.0 * var_b) - 0.5
    return float(terms.sum())


def kl_monte_carlo(a, b, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Estimate KL(a || b) by sampling from a; returns (estimate, stderr).

    `a` needs .sample and .log_pdf, `b` needs .log_pdf; works for diagonal
    Gaussians and mixtures alike.
    """
    if n < 1000:
        raise DimensionError(f"need at least 1000 samples for a usable estimate, got {n}")
    z = a.sample(rng, n)
    values = a.log_pdf(z) - b.log_pdf(z)
    if not np.all(np.isfinite(values)):
        raise NumericsError("non-finite log-density ratio in Monte Carlo KL")
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n))


def sample_reparam(g: DiagGaussian, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n latents as mean + exp(log_var / 2) * eps with eps ~ N(0, I).

    The same transform applied to graph tensors keeps gradients flowing to
    the mean and log-variance; this module's version is plain numpy.
    """
    if n < 1:
        raise DimensionError(f"need n >= 1 samples, got {n}")
    eps = rng.standard_normal((n, g.dim))
    return g.mean + np.exp(0.5 * g.log_var) * eps


def mixture_moment_match(m: GaussianMixture) -> DiagGaussian:
    """Collapse a mixture to the diagonal Gaussian with the same first two
    moments: mean = sum_i pi_i mu_i, var = sum pi sigma^2 + sum pi mu^2 - mean^2."""
    w = m.weights[:, None]
    means = np.stack([c.mean for c in m.components])
    variances = np.stack([c.var for c in m.components])
    mean = (w * means).sum(axis=0)
    var = (w * variances).sum(axis=0) + (w * means * means).sum(axis=0) - mean * mean
    return DiagGaussian(mean, np.log(np.maximum(var, 1e-300)))


def slerp(z1: np.ndarray, z2: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation between two latent vectors; falls back to
    linear interpolation when the angle between them is below 1e-6."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape or z1.ndim != 1:
        raise DimensionError(f"slerp shapes {z1.shape} vs {z2.shape}")
    n1 = np.linalg.norm(z1)
    n2 = np.linalg.norm(z2)
    if n1 == 0.0 or n2 == 0.0:
        raise DimensionError("slerp endpoints must be nonzero vectors")
    cos_omega = float(np.clip(np.dot(z1 / n1, z2 / n2), -1.0, 1.0))
    omega = float(np.arccos(cos_omega))
    if omega < 1e-6:
        return (1.0 - t) * z1 + t * z2
    s = np.sin(omega)
    return (np.sin((1.0 - t) * omega) / s) * z1 + (np.sin(t * omega) / s) * z2
