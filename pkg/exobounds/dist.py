"""
Univariate distribution functions.

Every representation evaluates a right-continuous cdf, inverts it with the
left-inverse ``Q(t) = inf{y : F(y) >= t}`` and integrates polynomials of
degree <= 2 against it exactly. Q(0) and Q(1) are the support endpoints.
"""

import logging
from abc import ABC, abstractmethod
from typing import Sequence, Tuple, Union

import numpy as np
from scipy import optimize, stats

from exobounds.exceptions import DomainError, UnsupportedRepresentationError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

# Cap on the number of (point, kernel) pairs evaluated at once
_CHUNK_CELLS = 2_000_000


def _as_array(x: ArrayLike) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return np.atleast_1d(arr), arr.ndim == 0


def _restore(out: np.ndarray, scalar: bool):
    return float(out[0]) if scalar else out


def _check_probabilities(tau: np.ndarray) -> np.ndarray:
    if np.any(np.isnan(tau)) or np.any(tau < -1e-12) or np.any(tau > 1 + 1e-12):
        raise DomainError(f"probability outside [0, 1]: {tau[(tau < 0) | (tau > 1) | np.isnan(tau)][:3]}")
    return np.clip(tau, 0.0, 1.0)


def _check_order(k: int) -> None:
    if k not in (0, 1, 2):
        raise DomainError(f"partial moments are available for k in 0..2, got {k}")


class Cdf(ABC):
    """Distribution function on a closed, possibly infinite, support"""

    name = "cdf"

    @property
    @abstractmethod
    def lower(self) -> float:
        ...

    @property
    @abstractmethod
    def upper(self) -> float:
        ...

    @property
    def is_continuous(self) -> bool:
        return True

    @abstractmethod
    def _evaluate(self, y: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _quantile(self, tau: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _partial_moment(self, lo: np.ndarray, hi: np.ndarray, k: int) -> np.ndarray:
        ...

    def evaluate(self, y: ArrayLike):
        """F(y)"""
        arr, scalar = _as_array(y)
        return _restore(self._evaluate(arr), scalar)

    def quantile(self, tau: ArrayLike):
        """Left-inverse Q(tau) with Q(0) = lower and Q(1) = upper"""
        arr, scalar = _as_array(tau)
        arr = _check_probabilities(arr)
        out = self._quantile(arr)
        out = np.where(arr <= 0.0, self.lower, out)
        out = np.where(arr >= 1.0, self.upper, out)
        return _restore(out, scalar)

    def partial_moment(self, lo: ArrayLike, hi: ArrayLike, k: int = 0):
        """Integral of y**k over (lo, hi] against dF"""
        _check_order(k)
        lo_arr, lo_scalar = _as_array(lo)
        hi_arr, hi_scalar = _as_array(hi)
        lo_arr, hi_arr = np.broadcast_arrays(lo_arr, hi_arr)
        out = self._partial_moment(lo_arr, hi_arr, k)
        out = np.where(hi_arr > lo_arr, out, 0.0)
        return _restore(out, lo_scalar and hi_scalar)

    def quantile_integral(self, s: float, t: float) -> float:
        """Integral of Q over [s, t]"""
        if t <= s:
            return 0.0
        return float(self.partial_moment(self.quantile(s), self.quantile(t), 1))

    def mean(self) -> float:
        return float(self.partial_moment(-np.inf, np.inf, 1))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(lower={self.lower!r}, upper={self.upper!r})"


class StepCdf(Cdf):
    """Empirical cdf of a finite sample"""

    name = "empirical"

    def __init__(self, samples: ArrayLike):
        xs = np.sort(np.asarray(samples, dtype=float).ravel())
        if xs.size == 0:
            raise DomainError("empirical cdf needs at least one sample")
        if not np.all(np.isfinite(xs)):
            raise DomainError("empirical cdf samples must be finite")
        xs.setflags(write=False)
        self._xs = xs
        self._n = xs.size
        self._prefix = {k: np.concatenate([[0.0], np.cumsum(xs ** k)]) for k in (0, 1, 2)}

    @property
    def atoms(self) -> np.ndarray:
        return self._xs

    @property
    def lower(self) -> float:
        return float(self._xs[0])

    @property
    def upper(self) -> float:
        return float(self._xs[-1])

    @property
    def is_continuous(self) -> bool:
        return False

    def _evaluate(self, y):
        return np.searchsorted(self._xs, y, side="right") / self._n

    def _quantile(self, tau):
        idx = np.clip(np.ceil(tau * self._n - 1e-9).astype(int), 1, self._n) - 1
        return self._xs[idx]

    def _partial_moment(self, lo, hi, k):
        prefix = self._prefix[k]
        upper_idx = np.searchsorted(self._xs, hi, side="right")
        lower_idx = np.searchsorted(self._xs, lo, side="right")
        return (prefix[upper_idx] - prefix[lower_idx]) / self._n

    def quantile_integral(self, s: float, t: float) -> float:
        if t <= s:
            return 0.0
        edges = np.arange(self._n + 1) / self._n
        overlap = np.clip(np.minimum(t, edges[1:]) - np.maximum(s, edges[:-1]), 0.0, None)
        return float(np.dot(self._xs, overlap))


class PiecewiseLinearCdf(Cdf):
    """Continuous cdf interpolating linearly between knots"""

    name = "piecewise-linear"

    def __init__(self, knots: ArrayLike, values: ArrayLike):
        xs = np.asarray(knots, dtype=float).ravel()
        vs = np.asarray(values, dtype=float).ravel()
        if xs.size != vs.size or xs.size < 2:
            raise DomainError("knots and values must have the same length >= 2")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(vs))):
            raise DomainError("knots and values must be finite")
        if np.any(np.diff(xs) <= 0):
            raise DomainError("knots must be strictly increasing")
        if np.any(np.diff(vs) < -1e-12):
            raise DomainError("cdf values at knots are not monotone")
        if abs(vs[0]) > 1e-9 or abs(vs[-1] - 1.0) > 1e-9:
            raise DomainError(f"cdf must run from 0 to 1, got {vs[0]} .. {vs[-1]}")
        vs = np.maximum.accumulate(np.clip(vs, 0.0, 1.0))
        vs[0], vs[-1] = 0.0, 1.0

        # trim flat tails so the support is minimal
        start = int(np.flatnonzero(vs <= 0.0)[-1])
        stop = int(np.flatnonzero(vs >= 1.0)[0]) + 1
        xs, vs = xs[start:stop].copy(), vs[start:stop].copy()
        xs.setflags(write=False)
        vs.setflags(write=False)
        self._xs = xs
        self._vs = vs
        self._density = np.diff(vs) / np.diff(xs)

    @property
    def knots(self) -> np.ndarray:
        return self._xs

    @property
    def values(self) -> np.ndarray:
        return self._vs

    @property
    def lower(self) -> float:
        return float(self._xs[0])

    @property
    def upper(self) -> float:
        return float(self._xs[-1])

    def _evaluate(self, y):
        return np.interp(y, self._xs, self._vs, left=0.0, right=1.0)

    def _quantile(self, tau):
        xs, vs = self._xs, self._vs
        j = np.clip(np.searchsorted(vs, tau, side="left"), 1, xs.size - 1)
        v0, v1 = vs[j - 1], vs[j]
        width = np.where(v1 > v0, v1 - v0, 1.0)
        frac = np.clip((tau - v0) / width, 0.0, 1.0)
        return xs[j - 1] + frac * (xs[j] - xs[j - 1])

    def _partial_moment(self, lo, hi, k):
        left = np.maximum(lo[:, None], self._xs[None, :-1])
        right = np.minimum(hi[:, None], self._xs[None, 1:])
        right = np.maximum(right, left)
        pieces = (right ** (k + 1) - left ** (k + 1)) / (k + 1)
        return pieces @ self._density


class UniformCdf(PiecewiseLinearCdf):
    """Uniform distribution on [lower, upper]"""

    name = "uniform"

    def __init__(self, lower: float = 0.0, upper: float = 1.0):
        if not (np.isfinite(lower) and np.isfinite(upper)) or upper <= lower:
            raise DomainError(f"uniform support needs lower < upper, got [{lower}, {upper}]")
        super().__init__([lower, upper], [0.0, 1.0])


def _normal_moments(lo: np.ndarray, hi: np.ndarray, k: int, loc, scale: float) -> np.ndarray:
    """Integral of y**k over (lo, hi] against N(loc, scale**2); broadcasts lo, hi and loc"""
    zl = (lo - loc) / scale
    zh = (hi - loc) / scale
    upper_tail = zl > 0
    m0 = np.where(
        upper_tail,
        stats.norm.sf(zl) - stats.norm.sf(zh),
        stats.norm.cdf(zh) - stats.norm.cdf(zl),
    )
    if k == 0:
        return m0
    pdf_l = stats.norm.pdf(zl)
    pdf_h = stats.norm.pdf(zh)
    m1 = pdf_l - pdf_h
    if k == 1:
        return loc * m0 + scale * m1
    with np.errstate(invalid="ignore"):
        zpdf_l = np.where(np.isfinite(zl), zl * pdf_l, 0.0)
        zpdf_h = np.where(np.isfinite(zh), zh * pdf_h, 0.0)
    m2 = m0 + zpdf_l - zpdf_h
    return loc * loc * m0 + 2.0 * loc * scale * m1 + scale * scale * m2


class NormalCdf(Cdf):
    """Normal distribution with unbounded support"""

    name = "normal"

    def __init__(self, loc: float = 0.0, scale: float = 1.0):
        if not (np.isfinite(loc) and np.isfinite(scale)) or scale <= 0:
            raise DomainError(f"normal needs finite loc and positive scale, got {loc}, {scale}")
        self.loc = float(loc)
        self.scale = float(scale)

    @property
    def lower(self) -> float:
        return -np.inf

    @property
    def upper(self) -> float:
        return np.inf

    def _evaluate(self, y):
        return stats.norm.cdf(y, loc=self.loc, scale=self.scale)

    def _quantile(self, tau):
        return stats.norm.ppf(tau, loc=self.loc, scale=self.scale)

    def _partial_moment(self, lo, hi, k):
        return _normal_moments(lo, hi, k, self.loc, self.scale)

    def __repr__(self) -> str:
        return f"NormalCdf(loc={self.loc!r}, scale={self.scale!r})"


class GaussianMixtureCdf(Cdf):
    """
    Integrated Gaussian kernel estimate (1/n) sum Phi((y - c_i) / h).

    With ``truncate`` the centers are reflected about both sample extremes and
    the estimate is renormalized to the sample range, so the support is
    [min c, max c] and Q(0), Q(1) are the sample extremes.
    """

    name = "gaussian-kernel"

    def __init__(self, centers: ArrayLike, bandwidth: float, truncate: bool = True):
        cs = np.sort(np.asarray(centers, dtype=float).ravel())
        if cs.size == 0 or not np.all(np.isfinite(cs)):
            raise DomainError("kernel centers must be a nonempty finite sample")
        if not np.isfinite(bandwidth) or bandwidth <= 0:
            raise DomainError(f"kernel bandwidth must be positive, got {bandwidth}")
        if truncate and cs[-1] <= cs[0]:
            raise DomainError("truncated kernel estimate needs a nondegenerate sample range")
        cs.setflags(write=False)
        self._cs = cs
        self.bandwidth = float(bandwidth)
        self.truncate = truncate
        self._kc = cs
        if truncate:
            self._lo, self._hi = float(cs[0]), float(cs[-1])
            self._kc = np.concatenate([cs, 2.0 * self._lo - cs, 2.0 * self._hi - cs])
            raw = self._raw_cdf(np.array([self._lo, self._hi]))
            self._offset = float(raw[0])
            self._mass = float(raw[1] - raw[0])
        else:
            self._lo, self._hi = -np.inf, np.inf
            self._offset, self._mass = 0.0, 1.0

    @property
    def centers(self) -> np.ndarray:
        return self._cs

    @property
    def lower(self) -> float:
        return self._lo

    @property
    def upper(self) -> float:
        return self._hi

    def _chunks(self, size: int):
        step = max(1, _CHUNK_CELLS // self._kc.size)
        for start in range(0, size, step):
            yield slice(start, min(start + step, size))

    def _raw_cdf(self, y: np.ndarray) -> np.ndarray:
        out = np.empty(y.size)
        for part in self._chunks(y.size):
            z = (y[part, None] - self._kc[None, :]) / self.bandwidth
            out[part] = stats.norm.cdf(z).mean(axis=1)
        return out

    def _evaluate(self, y):
        clipped = np.clip(y, self._lo, self._hi)
        out = (self._raw_cdf(clipped) - self._offset) / self._mass
        return np.clip(out, 0.0, 1.0)

    def _bracket(self, tau: float) -> Tuple[float, float]:
        if self.truncate:
            return self._lo, self._hi
        width = 10.0 * self.bandwidth
        left, right = self._cs[0] - width, self._cs[-1] + width
        while self._evaluate(np.array([left]))[0] > tau:
            width *= 2.0
            left = self._cs[0] - width
        while self._evaluate(np.array([right]))[0] < tau:
            width *= 2.0
            right = self._cs[-1] + width
        return left, right

    def _quantile(self, tau):
        out = np.empty(tau.size)
        for i, t in enumerate(tau):
            if t <= 0.0 or t >= 1.0:
                out[i] = self._lo if t <= 0.0 else self._hi
                continue
            left, right = self._bracket(t)
            out[i] = optimize.brentq(
                lambda y: self._evaluate(np.array([y]))[0] - t, left, right, xtol=1e-12
            )
        return out

    def _partial_moment(self, lo, hi, k):
        lo_c = np.maximum(lo, self._lo)
        hi_c = np.minimum(hi, self._hi)
        out = np.empty(lo_c.size)
        for part in self._chunks(lo_c.size):
            raw = _normal_moments(
                lo_c[part, None], hi_c[part, None], k, self._kc[None, :], self.bandwidth
            )
            out[part] = raw.mean(axis=1)
        out = np.where(hi_c > lo_c, out, 0.0)
        return out / self._mass

    def __repr__(self) -> str:
        return (
            f"GaussianMixtureCdf(n={self._cs.size}, bandwidth={self.bandwidth!r}, "
            f"truncate={self.truncate!r})"
        )


class ComposedCdf(Cdf):
    """A rank-scale piecewise-linear cdf composed with a base cdf, G(F(y))"""

    name = "composed"

    def __init__(self, rank: PiecewiseLinearCdf, base: Cdf):
        if rank.lower < -1e-12 or rank.upper > 1 + 1e-12:
            raise DomainError("rank-scale cdf must live on [0, 1]")
        self.rank = rank
        self.base = base

    @property
    def lower(self) -> float:
        return float(self.base.quantile(max(self.rank.lower, 0.0)))

    @property
    def upper(self) -> float:
        return float(self.base.quantile(min(self.rank.upper, 1.0)))

    @property
    def is_continuous(self) -> bool:
        return self.base.is_continuous

    def _evaluate(self, y):
        return self.rank._evaluate(np.asarray(self.base.evaluate(y), dtype=float))

    def _quantile(self, tau):
        ranks = np.clip(self.rank._quantile(tau), 0.0, 1.0)
        return np.asarray(self.base.quantile(ranks), dtype=float)

    def _partial_moment(self, lo, hi, k):
        if not self.base.is_continuous:
            raise UnsupportedRepresentationError("composition moments need a continuous base cdf")
        edges = np.asarray(self.base.quantile(self.rank.knots), dtype=float)
        out = np.zeros(lo.size)
        for j, slope in enumerate(np.diff(self.rank.values) / np.diff(self.rank.knots)):
            if slope == 0.0:
                continue
            left = np.maximum(lo, edges[j])
            right = np.minimum(hi, edges[j + 1])
            out += slope * np.where(right > left, self.base.partial_moment(left, right, k), 0.0)
        return out


def step_cdf_from_samples(samples: ArrayLike) -> StepCdf:
    """Empirical cdf; quantile(k/n) is the k-th order statistic"""
    return StepCdf(samples)


def piecewise_linear_cdf(knots: ArrayLike, values: ArrayLike) -> PiecewiseLinearCdf:
    return PiecewiseLinearCdf(knots, values)


def uniform_cdf(lower: float = 0.0, upper: float = 1.0) -> UniformCdf:
    return UniformCdf(lower, upper)


def normal_cdf(loc: float = 0.0, scale: float = 1.0) -> NormalCdf:
    return NormalCdf(loc, scale)


def quantile(cdf: Cdf, tau: ArrayLike):
    """Left-inverse of ``cdf`` at ``tau``"""
    return cdf.quantile(tau)


def rank_transform(cdf: Cdf, y: ArrayLike):
    """Rank F(y) of an outcome; only defined for continuous cdfs"""
    if not cdf.is_continuous:
        raise UnsupportedRepresentationError(
            f"ranks need a continuous cdf, got {type(cdf).__name__}"
        )
    arr, scalar = _as_array(y)
    if np.any(arr < cdf.lower - 1e-12) or np.any(arr > cdf.upper + 1e-12):
        raise DomainError(f"outcome outside the support [{cdf.lower}, {cdf.upper}]")
    return _restore(np.asarray(cdf._evaluate(arr), dtype=float), scalar)


def cdf_from_spec(spec: str) -> Cdf:
    """
    Parse a distribution spec string.

    ``identity`` and ``unif01`` give Unif[0,1]; ``uniform:L:R`` a uniform;
    ``normal`` or ``normal:MU:SIGMA`` a normal.
    """
    text = spec.strip().lower()
    parts = text.split(":")
    try:
        if text in ("identity", "unif01", "uniform"):
            return uniform_cdf(0.0, 1.0)
        if parts[0] == "uniform" and len(parts) == 3:
            return uniform_cdf(float(parts[1]), float(parts[2]))
        if text in ("normal", "std-normal"):
            return normal_cdf()
        if parts[0] == "normal" and len(parts) == 3:
            return normal_cdf(float(parts[1]), float(parts[2]))
    except ValueError as e:
        raise DomainError(f"bad distribution spec {spec!r}: {e}") from e
    raise DomainError(f"unknown distribution spec {spec!r}")
