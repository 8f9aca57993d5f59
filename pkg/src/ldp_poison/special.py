"""Binomial upper tails and the regularized incomplete beta function.

For integer arguments ``I(x; a, N - a + 1) = Pr[Binomial(N, x) >= a]``; we
evaluate that tail exactly as a log-space sum of binomial pmf terms when
``N`` is at most :data:`EXACT_LIMIT`, and defer to the continued-fraction
routine in scipy otherwise.
"""

import math

import numpy as np
from scipy.special import betainc, gammaln

EXACT_LIMIT = 1_000_000


def log_binom_pmf(N: int, x: float) -> np.ndarray:
    """``log Pr[Binomial(N, x) = k]`` for ``k = 0..N``."""
    k = np.arange(N + 1, dtype=float)
    coef = gammaln(N + 1.0) - gammaln(k + 1.0) - gammaln(N - k + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = math.log(x) if x > 0 else -np.inf
        l1x = math.log1p(-x) if x < 1 else -np.inf
        terms = k * lx + (N - k) * l1x
    # 0 * log(0) terms are 0 by convention
    if x == 0:
        terms = np.where(k == 0, 0.0, -np.inf)
    elif x == 1:
        terms = np.where(k == N, 0.0, -np.inf)
    return coef + terms


def binomial_tail_curve(N: int, x: float) -> np.ndarray:
    """``tail[a] = Pr[Binomial(N, x) >= a]`` for ``a = 0..N+1``."""
    logpmf = log_binom_pmf(N, x)
    log_tail = np.logaddexp.accumulate(logpmf[::-1])[::-1]
    tail = np.exp(np.minimum(log_tail, 0.0))
    return np.append(tail, 0.0)


def binomial_tail(N: int, x: float, a: int) -> float:
    """``Pr[Binomial(N, x) >= a]``."""
    if a <= 0:
        return 1.0
    if a > N:
        return 0.0
    logpmf = log_binom_pmf(N, x)[a:]
    return float(min(1.0, math.exp(np.logaddexp.reduce(logpmf))))


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """``I(x; a, b)``; exact binomial-tail evaluation for integer ``a, b``."""
    if not 0 <= x <= 1:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if float(a).is_integer() and float(b).is_integer() and a + b - 1 <= EXACT_LIMIT:
        return binomial_tail(int(a + b - 1), x, int(a))
    return float(betainc(a, b, x))
