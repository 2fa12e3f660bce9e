"""One-dimensional Gaussian mixtures: EM fitting and interval construction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp
from scipy.stats import norm

VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianMixture1D:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_1d(np.asarray(self.means, dtype=float))
        v = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if not (len(w) == len(m) == len(v)) or len(w) == 0:
            raise ValueError("weights, means and variances must have the same positive length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must lie on the simplex")
        if np.any(v < VAR_FLOOR):
            raise ValueError(f"variances must be at least {VAR_FLOOR}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @classmethod
    def normal(cls, mean: float, var: float) -> "GaussianMixture1D":
        return cls(np.ones(1), np.array([mean]), np.array([max(var, VAR_FLOOR)]))

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def sds(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def mean(self) -> float:
        return float(self.weights @ self.means)

    def var(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.variances + (self.means - m) ** 2))

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sum(self.weights * norm.cdf((x[..., None] - self.means) / self.sds), axis=-1)

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        comp = norm.logpdf(x[..., None], self.means, self.sds) + np.log(np.maximum(self.weights, 1e-300))
        return logsumexp(comp, axis=-1)

    def mass(self, lo: float, hi: float) -> float:
        return float(self.cdf(hi) - self.cdf(lo))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        k = rng.choice(self.K, size=n, p=self.weights)
        return self.means[k] + self.sds[k] * rng.standard_normal(n)

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist()}


def em_fit(samples, K: int, init=None, tol: float = 1e-8, max_iter: int = 200,
           var_floor: float = VAR_FLOOR, return_trace: bool = False):
    """Maximum-likelihood mixture by expectation-maximization.

    ``init`` is an optional ``(weights, means, variances)`` triple; by default
    means start at evenly spaced sample quantiles.  Iteration stops when the
    average log-likelihood improves by less than ``tol``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if K < 1:
        raise ValueError("K must be positive")
    if len(np.unique(x)) < K:
        raise ValueError(f"need at least {K} distinct samples for {K} components")
    n = len(x)
    if init is None:
        w = np.full(K, 1.0 / K)
        mu = np.quantile(x, (np.arange(K) + 0.5) / K)
        var = np.full(K, max(np.var(x), var_floor))
    else:
        w, mu, var = (np.asarray(a, dtype=float).copy() for a in init)
    trace = []
    prev = -np.inf
    for _ in range(max_iter):
        logp = norm.logpdf(x[:, None], mu, np.sqrt(var)) + np.log(np.maximum(w, 1e-300))
        ll = logsumexp(logp, axis=1)
        cur = float(ll.mean())
        trace.append(cur)
        if cur - prev < tol:
            break
        prev = cur
        resp = np.exp(logp - ll[:, None])
        nk = resp.sum(axis=0) + 1e-300
        w = nk / n
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = np.maximum((resp * (x[:, None] - mu) ** 2).sum(axis=0) / nk, var_floor)
    order = np.argsort(mu)
    gm = GaussianMixture1D(w[order] / w.sum(), mu[order], var[order])
    return (gm, trace) if return_trace else gm


def central_interval(density: GaussianMixture1D, q: float, center: float | None = None,
                     tol: float = 1e-12) -> tuple[float, float]:
    """Interval ``[c - h, c + h]`` holding mass ``q`` around ``c`` (the mean by default)."""
    if not 0.0 < q < 1.0:
        raise ValueError("coverage must lie in (0, 1)")
    c = density.mean() if center is None else float(center)
    hi_bracket = 1.0
    reach = np.max(np.abs(density.means - c)) + 40.0 * np.max(density.sds)
    while density.mass(c - hi_bracket, c + hi_bracket) < q:
        hi_bracket *= 2.0
        if hi_bracket > 1e3 * reach:
            raise ValueError(f"coverage {q} cannot be bracketed")
    f = lambda h: density.mass(c - h, c + h) - q
    if f(0.0) >= 0.0:
        return c, c
    h = brentq(f, 0.0, hi_bracket, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return c - h, c + h


def component_interval(density: GaussianMixture1D, k: int, q: float) -> tuple[float, float]:
    """Central interval of component ``k`` alone holding its own mass ``q``."""
    return central_interval(GaussianMixture1D.normal(density.means[k], density.variances[k]), q)


def estimate(samples, K: int = 1, **kw) -> GaussianMixture1D:
    """Sample moments for one component, EM otherwise."""
    x = np.asarray(samples, dtype=float)
    if K == 1:
        return GaussianMixture1D.normal(float(x.mean()), float(x.var(ddof=1)) if len(x) > 1 else VAR_FLOOR)
    return em_fit(x, K, **kw)
