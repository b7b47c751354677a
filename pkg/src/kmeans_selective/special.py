"""
Regularized incomplete gamma functions in log space.

scipy's ``gammainc``/``gammaincc`` underflow to zero far in the tails, which
destroys ratios of tail masses. These routines return log P(a, x) and
log Q(a, x) directly: series expansion for x < a + 1, Lentz continued
fraction otherwise.
"""
import math
import sys

from scipy import special

from kmeans_selective.core.errors import InvalidArgumentError, NumericalConsistencyError

ACCURACY = 1.0e-14
MAX_ITERATION = 100_000

_TINY = sys.float_info.min / sys.float_info.epsilon


def _log_prefactor(a: float, x: float) -> float:
    return -x + a * math.log(x) - float(special.gammaln(a))


def _log_series(a: float, x: float) -> float:
    """log P(a, x) from the power series; converges fast for x < a + 1."""
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(MAX_ITERATION):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * ACCURACY:
            return _log_prefactor(a, x) + math.log(total)
    raise NumericalConsistencyError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _log_continued_fraction(a: float, x: float) -> float:
    """log Q(a, x) from the modified Lentz continued fraction; for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITERATION + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < ACCURACY:
            return _log_prefactor(a, x) + math.log(h)
    raise NumericalConsistencyError(
        f"incomplete gamma continued fraction did not converge (a={a}, x={x})"
    )


def _log1mexp(value: float) -> float:
    """log(1 - exp(value)) for value <= 0."""
    if value > -math.log(2.0):
        return math.log(-math.expm1(value))
    return math.log1p(-math.exp(value))


def log_gamma_q(a: float, x: float) -> float:
    """log of the regularized upper incomplete gamma Q(a, x)."""
    if a <= 0:
        raise InvalidArgumentError(f"a must be positive, got {a}")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    if x < a + 1.0:
        upper = float(special.gammaincc(a, x))
        if upper > 1e-300:
            return math.log(upper)
        return _log1mexp(_log_series(a, x))
    return _log_continued_fraction(a, x)


def log_gamma_p(a: float, x: float) -> float:
    """log of the regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise InvalidArgumentError(f"a must be positive, got {a}")
    if x <= 0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    lower = float(special.gammainc(a, x))
    if lower > 1e-300:
        return math.log(lower)
    if x < a + 1.0:
        return _log_series(a, x)
    return _log1mexp(_log_continued_fraction(a, x))
