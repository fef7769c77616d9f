"""SNR-controlled sparse linear-model regression problems.

Rows are Gaussian with AR(1) covariance ``rho**|i-j|``, the coefficient
vector has ``s`` leading ones ("beta-type 2"), and the noise variance is set
so that ``beta' Sigma beta / sigma2`` equals the requested SNR.

Rows are produced by the recursion ``x_1 = z_1``,
``x_j = rho * x_{j-1} + sqrt(1 - rho**2) * z_j`` on standard normals drawn
from a PCG64 generator (numpy's ziggurat transform), in the order: train
features, train noise, test features, test noise, validation features,
validation noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateSpecError, DomainError
from .tabular import CLASSIFICATION, Dataset

DEFAULT_RHO = 0.35
SNR_MIN = 0.05
SNR_MAX = 6.0
N_SNR = 10

# name -> (n, p, s)
SETTINGS = {
    "low": (100, 10, 5),
    "medium": (500, 100, 5),
    "high-5": (50, 1000, 5),
    "high-10": (100, 1000, 10),
}


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    p: int
    s: int
    snr: float
    rho: float = DEFAULT_RHO
    test_size: Optional[int] = None
    validation_size: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise DomainError("n and p must be >= 1")
        if not 1 <= self.s <= self.p:
            raise DomainError(f"s={self.s} must lie in 1..p={self.p}")
        if not self.snr > 0:
            raise DomainError("snr must be positive")
        if not -1 < self.rho < 1:
            raise DomainError("rho must lie in (-1, 1)")
        if self.test_size is not None and self.test_size < 1:
            raise DomainError("test_size must be >= 1")

    @classmethod
    def from_setting(cls, name: str, snr: float, **kw) -> "SyntheticSpec":
        try:
            n, p, s = SETTINGS[name]
        except KeyError:
            raise DomainError(
                f"unknown setting {name!r}; choose from {sorted(SETTINGS)}"
            ) from None
        return cls(n=n, p=p, s=s, snr=snr, **kw)


@dataclass(frozen=True, eq=False)
class GeneratedProblem:
    train: Dataset
    test: Dataset
    beta: np.ndarray
    sigma2: float
    signal: float
    validation: Optional[Dataset] = None


def make_sigma(p: int, rho: float) -> np.ndarray:
    if not abs(rho) < 1:
        raise DomainError("|rho| must be < 1")
    idx = np.arange(p)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :]).astype(np.float64)


def quadratic_form(beta, sigma) -> float:
    beta = np.asarray(beta, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (beta.size, beta.size):
        raise DomainError("beta and sigma dimensions disagree")
    return float(beta @ sigma @ beta)


def noise_variance(beta, sigma, snr: float) -> float:
    if not snr > 0:
        raise DomainError("snr must be positive")
    signal = quadratic_form(beta, sigma)
    if signal <= 0:
        raise DegenerateSpecError("beta' Sigma beta is zero; SNR undefined")
    return signal / snr


def snr_grid(lo: float = SNR_MIN, hi: float = SNR_MAX,
             num: int = N_SNR) -> np.ndarray:
    """``num`` log-equally spaced values from ``lo`` to ``hi`` inclusive."""
    ratio = (hi / lo) ** (1.0 / (num - 1))
    out = lo * ratio ** np.arange(num)
    out[0], out[-1] = lo, hi
    return out


def beta_type2(p: int, s: int) -> np.ndarray:
    beta = np.zeros(p)
    beta[:s] = 1.0
    return beta


def ar1_rows(n: int, p: int, rho: float, rng) -> np.ndarray:
    z = rng.standard_normal((n, p))
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    scale = np.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + scale * z[:, j]
    return x


def _draw(n, spec, beta, sigma2, rng) -> Dataset:
    X = ar1_rows(n, spec.p, spec.rho, rng)
    eps = np.sqrt(sigma2) * rng.standard_normal(n)
    return Dataset(X, X @ beta + eps)


def generate(spec: SyntheticSpec) -> GeneratedProblem:
    beta = beta_type2(spec.p, spec.s)
    signal = quadratic_form(beta, make_sigma(spec.p, spec.rho))
    sigma2 = noise_variance(beta, make_sigma(spec.p, spec.rho), spec.snr)
    rng = np.random.default_rng(spec.seed)
    train = _draw(spec.n, spec, beta, sigma2, rng)
    test = _draw(spec.test_size or spec.n, spec, beta, sigma2, rng)
    val = None
    if spec.validation_size:
        val = _draw(spec.validation_size, spec, beta, sigma2, rng)
    return GeneratedProblem(train, test, beta, sigma2, signal, val)


def label_noise_problem(n: int, p: int, flip: float = 0.2,
                        test_size: Optional[int] = None,
                        validation_size: int = 0, seed: int = 0):
    """Binary classification with Bayes error exactly ``flip``.

    Features are iid standard normal; the clean label is ``x_1 > 0`` and each
    label is flipped independently with probability ``flip`` < 1/2.
    Returns ``(train, validation_or_None, test)``.
    """
    if not 0 <= flip < 0.5:
        raise DomainError("flip must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)

    def draw(m):
        X = rng.standard_normal((m, p))
        y = (X[:, 0] > 0) ^ (rng.random(m) < flip)
        return Dataset(X, y.astype(np.float64), CLASSIFICATION, 2)

    train = draw(n)
    test = draw(test_size or n)
    val = draw(validation_size) if validation_size else None
    return train, val, test
