"""Seedable random variate generators for the Gibbs samplers.

Parametrization conventions, used consistently everywhere in this package:

* ``normal``           -- mean and variance
* ``gamma``            -- shape and rate (mean = shape/rate)
* ``inverse_gamma``    -- shape and scale (mean = scale/(shape-1) for shape>1)
* ``inverse_gaussian`` -- mean and shape (variance = mean**3/shape)
* ``gig``              -- (a, b, p) with density proportional to
                          x**(p-1) * exp(-(a*x + b/x)/2) on (0, inf)

Every sampler takes an :class:`RngStream` (or a bare numpy ``Generator``) as
its first argument, so callers own reproducibility: the same (seed, stream_id)
pair always reproduces the same variate sequence, and distinct stream ids give
statistically independent streams.
"""

from __future__ import annotations

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular
from scipy.special import gammaln, kve

from .errors import InvalidParameter, NegativeVariance, NotPositiveDefinite

_MASK64 = 0xFFFFFFFFFFFFFFFF

# Stream "kinds" used to derive non-colliding stream ids for the different
# sampled blocks of a chain (factor rows, intercepts, noise, priors, ...).
KIND_ROW = 1
KIND_MU = 2
KIND_SIGMA = 3
KIND_PRIOR = 4
KIND_HOLDOUT = 5
KIND_SIM = 6
KIND_MASK = 7


def make_stream_id(kind: int, a: int = 0, b: int = 0) -> int:
    """Pack (kind, a, b) into a single 64-bit stream id."""
    if not (0 <= kind < 256 and 0 <= a < (1 << 12) and 0 <= b < (1 << 44)):
        raise InvalidParameter(f"stream id components out of range: {(kind, a, b)}")
    return (kind << 56) | (a << 44) | b


class RngStream:
    """One independently seeded random stream.

    Identical (seed, stream_id) pairs yield identical variate sequences;
    distinct stream ids yield independent streams. A single stream must not
    be shared between concurrent workers.
    """

    __slots__ = ("seed", "stream_id", "gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(
            entropy=self.seed & _MASK64, spawn_key=(self.stream_id & _MASK64,)
        )
        self.gen = np.random.Generator(np.random.PCG64(ss))


def _gen(rng) -> np.random.Generator:
    return rng.gen if isinstance(rng, RngStream) else rng


def normal(rng, mean: float, variance: float) -> float:
    """Draw from the univariate normal with the given mean and variance."""
    if not variance >= 0.0:
        raise NegativeVariance(f"variance must be >= 0, got {variance}")
    if variance == 0.0:
        return float(mean)
    return float(mean + np.sqrt(variance) * _gen(rng).standard_normal())


def mvn_precision(rng, h: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Draw from the multivariate normal with precision P and mean P^{-1} h.

    Uses one Cholesky factorization P = L L^T, one triangular solve for the
    mean part and one for the noise part: with w = L^{-1} h and z standard
    normal, L^{-T} (w + z) has mean P^{-1} h and covariance P^{-1}.
    """
    h = np.asarray(h, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"precision matrix is not positive definite: {exc}")
    w = solve_triangular(L, h, lower=True, check_finite=False)
    z = _gen(rng).standard_normal(h.shape[0])
    return solve_triangular(L.T, w + z, lower=False, check_finite=False)


def gamma(rng, shape: float, rate: float, size=None):
    """Draw from the gamma distribution with the given shape and rate."""
    if not (shape > 0.0 and rate > 0.0):
        raise InvalidParameter(f"gamma requires shape>0 and rate>0, got {(shape, rate)}")
    out = _gen(rng).gamma(shape, 1.0 / rate, size=size)
    return float(out) if size is None else out


def inverse_gamma(rng, shape: float, scale: float, size=None):
    """Draw the reciprocal of a gamma(shape, rate=scale) variate."""
    if not (shape > 0.0 and scale > 0.0):
        raise InvalidParameter(
            f"inverse_gamma requires shape>0 and scale>0, got {(shape, scale)}"
        )
    out = scale / _gen(rng).standard_gamma(shape, size=size)
    return float(out) if size is None else out


def inverse_gamma_many(rng, shape: float, scales: np.ndarray) -> np.ndarray:
    """Vector of inverse-gamma draws sharing one shape, one scale per entry."""
    scales = np.asarray(scales, dtype=np.float64)
    if not (shape > 0.0 and np.all(scales > 0.0)):
        raise InvalidParameter("inverse_gamma_many requires shape>0 and scales>0")
    return scales / _gen(rng).standard_gamma(shape, size=scales.shape)


def inverse_gaussian(rng, mean: float, shape: float, size=None):
    """Draw from the inverse Gaussian with the given mean and shape."""
    if not (mean > 0.0 and shape > 0.0):
        raise InvalidParameter(
            f"inverse_gaussian requires mean>0 and shape>0, got {(mean, shape)}"
        )
    out = _gen(rng).wald(mean, shape, size=size)
    return float(out) if size is None else out


def _check_gig_params(a: float, b: float, p: float) -> None:
    ok = (
        np.isfinite(a)
        and np.isfinite(b)
        and np.isfinite(p)
        and a >= 0.0
        and b >= 0.0
        and (
            (a > 0.0 and b > 0.0)
            or (a > 0.0 and b == 0.0 and p > 0.0)
            or (a == 0.0 and b > 0.0 and p < 0.0)
        )
    )
    if not ok:
        raise InvalidParameter(f"invalid GIG parameters (a, b, p) = {(a, b, p)}")


_GIG_OMEGA_TINY = 1e-35  # below this, limiting branches are exact in doubles


def _gig_tiny_omega(g, a: float, b: float, p: float, size):
    """Exact draws when sqrt(a*b) is far below floating resolution.

    For |p| >= 0.01 one of the exponential terms is negligible (relative
    density error <= a*b/(4|p|) < 1e-68) and the gamma / inverse-gamma limit
    applies. Otherwise the log-variable density p*u - omega*cosh(u) is nearly
    flat over a wide plateau; a uniform-envelope rejection on that plateau is
    exact because the tails beyond it carry mass below e^{-1e17}.
    """
    if p >= 0.01:
        return g.gamma(p, 2.0 / a, size=size)
    if p <= -0.01:
        return (b / 2.0) / g.standard_gamma(-p, size=size)
    log_omega = 0.5 * (np.log(a) + np.log(b))
    half_width = np.log(2.0) - log_omega + 40.0
    log_m = 0.5 * (np.log(b) - np.log(a))
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    log_cap = max(p * half_width, -p * half_width)
    for i in range(n):
        while True:
            u = g.uniform(-half_width, half_width)
            pen = 0.5 * (np.exp(log_omega + u) + np.exp(log_omega - u))
            if np.log(g.random()) <= p * u - pen - log_cap:
                out[i] = np.exp(np.clip(log_m + u, -708.0, 708.0))
                break
    return out[0] if size is None else out.reshape(size)


def gig(rng, a: float, b: float, p: float, size=None):
    """Draw from the generalized inverse Gaussian GIG(a, b, p).

    Special cases are dispatched exactly: b=0 reduces to gamma(p, a/2),
    a=0 to inverse_gamma(-p, b/2), and p = +-1/2 to (reciprocal) inverse
    Gaussian draws. The general case uses a rejection sampler valid for
    all admissible parameters.
    """
    _check_gig_params(a, b, p)
    g = _gen(rng)
    if b == 0.0:
        out = g.gamma(p, 2.0 / a, size=size)
    elif a == 0.0:
        out = (b / 2.0) / g.standard_gamma(-p, size=size)
    elif p == -0.5:
        out = g.wald(np.sqrt(b / a), b, size=size)
    elif p == 0.5:
        out = 1.0 / g.wald(np.sqrt(a / b), a, size=size)
    elif np.sqrt(a) * np.sqrt(b) < _GIG_OMEGA_TINY:
        out = _gig_tiny_omega(g, a, b, p, size)
    else:
        out = np.sqrt(b / a) * stats.geninvgauss.rvs(
            p, np.sqrt(a * b), size=size, random_state=g
        )
    return float(out) if size is None else out


def gig_logpdf(x, a: float, b: float, p: float):
    """Log density of GIG(a, b, p), normalized, at x > 0.

    For a,b > 0 the normalizing constant is (a/b)^(p/2) / (2 K_p(sqrt(ab)))
    with K_p the modified Bessel function of the second kind; the b=0 and
    a=0 boundaries reduce to gamma and inverse-gamma densities.
    """
    _check_gig_params(a, b, p)
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        if b == 0.0:
            logc = p * np.log(a / 2.0) - gammaln(p)
            out = logc + (p - 1.0) * np.log(x) - a * x / 2.0
        elif a == 0.0:
            q = -p
            logc = q * np.log(b / 2.0) - gammaln(q)
            out = logc + (p - 1.0) * np.log(x) - b / (2.0 * x)
        else:
            omega = np.sqrt(a * b)
            # K_p(omega) = kve(p, omega) * exp(-omega)
            logk = np.log(kve(p, omega)) - omega
            logc = 0.5 * p * (np.log(a) - np.log(b)) - np.log(2.0) - logk
            out = logc + (p - 1.0) * np.log(x) - (a * x + b / x) / 2.0
    return np.where(x > 0.0, out, -np.inf)
