"""Seasonal peaks-over-threshold model with an exponential tail.

Exceedances above a high empirical quantile are modeled as f(D) * E where
D follows the empirical day-of-year distribution of the exceedances, f is
a cyclic cubic regression spline fitted by least squares, and E is
standard exponential (tail shape fixed at zero throughout).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .reduce import InsufficientDataError, UnivariateTarget

PERIOD = 365.0
SQRT50 = math.sqrt(50.0)

DEFAULT_N_BASIS = 10


class LevelTooHighError(ValueError):
    """Raised when the exceedance quantile violates a model constraint."""


def empirical_quantile(y: np.ndarray, p: float) -> float:
    """Ascending order statistic at index ceil(n*p) (1-based)."""
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("empty input")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    # guard against ceil() flipping on float noise like 100*0.99 = 99.0000...01
    k = int(math.ceil(y.size * p - 1e-9))
    k = min(max(k, 1), y.size)
    return float(np.partition(y, k - 1)[k - 1])


@dataclass
class ExceedanceSet:
    """Strict exceedances of a series above its empirical p-quantile."""

    p: float
    q: float
    t: np.ndarray       # indices into the source series
    days: np.ndarray    # day_of_year labels
    excess: np.ndarray  # y - q, all > 0

    def __len__(self) -> int:
        return len(self.excess)


def extract_exceedances(
    target: UnivariateTarget, p: float, use_aux: bool = False
) -> ExceedanceSet:
    """Collect strict exceedances above the empirical p-quantile.

    With use_aux the norm series is thresholded instead of y; the paired
    targets require the threshold to stay below sqrt(50) so the event
    probability factorizes through the norm exceedance.
    """
    if use_aux:
        if not target.has_aux:
            raise ValueError("use_aux requires a paired target")
        series = target.ybar
    else:
        series = target.y
    q = empirical_quantile(series, p)
    if use_aux and q >= SQRT50:
        raise LevelTooHighError(
            f"aux quantile {q:.4f} >= sqrt(50); choose a lower level than p={p}"
        )
    mask = series > q
    t = np.nonzero(mask)[0]
    return ExceedanceSet(
        p=p, q=q, t=t, days=target.d[t], excess=series[t] - q
    )


def _bspline3(u: np.ndarray) -> np.ndarray:
    """Cardinal cubic B-spline on [0, 4]."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    m = (u >= 0) & (u < 1)
    out[m] = u[m] ** 3 / 6.0
    m = (u >= 1) & (u < 2)
    v = u[m]
    out[m] = (-3 * v**3 + 12 * v**2 - 12 * v + 4) / 6.0
    m = (u >= 2) & (u < 3)
    v = u[m]
    out[m] = (3 * v**3 - 24 * v**2 + 60 * v - 44) / 6.0
    m = (u >= 3) & (u < 4)
    v = u[m]
    out[m] = (4 - v) ** 3 / 6.0
    return out


def cyclic_design_matrix(days, n_basis: int) -> np.ndarray:
    """Periodic uniform cubic B-spline basis evaluated at day-of-year values.

    The basis is a partition of unity (constants lie in its span) and is C2
    across the year wrap.
    """
    if n_basis < 4:
        raise ValueError("n_basis must be >= 4")
    h = PERIOD / n_basis
    x = (np.asarray(days, dtype=np.float64) - 1.0) % PERIOD
    cols = np.empty((x.size, n_basis))
    for j in range(n_basis):
        u = (x - j * h) / h
        u = (u + n_basis / 2.0) % n_basis - n_basis / 2.0
        cols[:, j] = _bspline3(u + 2.0)
    return cols


@dataclass
class CyclicScale:
    """365-periodic positive scale function on a cyclic cubic spline basis."""

    n_basis: int
    coefficients: np.ndarray
    floor: float

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.shape != (self.n_basis,):
            raise ValueError("coefficient length must equal n_basis")
        if self.floor <= 0:
            raise ValueError("floor must be > 0")

    @property
    def knots(self) -> np.ndarray:
        return np.arange(self.n_basis) * (PERIOD / self.n_basis)

    def __call__(self, days) -> np.ndarray:
        raw = cyclic_design_matrix(np.atleast_1d(days), self.n_basis) @ self.coefficients
        return np.maximum(raw, self.floor)


def fit_seasonal_scale(exc: ExceedanceSet, n_basis: int = DEFAULT_N_BASIS) -> CyclicScale:
    """Least-squares fit of the exceedance scale on the cyclic spline basis.

    Since E[excess | d] = f(d) for unit-mean residuals, ordinary least
    squares estimates the scale directly.  The fit is rescaled afterwards
    so the adjusted exceedances average to exactly 1.
    """
    n = len(exc)
    if n < 2 * n_basis:
        raise InsufficientDataError(
            f"{n} exceedances < 2*n_basis = {2 * n_basis}; lower the level or n_basis"
        )
    X = cyclic_design_matrix(exc.days, n_basis)
    coef, _, rank, _ = np.linalg.lstsq(X, exc.excess, rcond=None)
    if rank < n_basis:
        raise np.linalg.LinAlgError(
            f"rank-deficient design ({rank} < {n_basis}); reduce n_basis"
        )
    floor = 1e-6 * float(np.mean(exc.excess))
    scale = CyclicScale(n_basis=n_basis, coefficients=coef, floor=floor)
    # remove the scale/residual aliasing degree of freedom: mean(E) = 1 exactly
    mean_adj = float(np.mean(exc.excess / scale(exc.days)))
    return CyclicScale(n_basis=n_basis, coefficients=coef * mean_adj, floor=floor)


@dataclass
class AdjustedExceedances:
    """Exceedances divided by the fitted seasonal scale."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values <= 0):
            raise ValueError("adjusted exceedances must be > 0")


def adjust(exc: ExceedanceSet, scale: CyclicScale) -> AdjustedExceedances:
    return AdjustedExceedances(values=exc.excess / scale(exc.days))


@dataclass
class QQReport:
    """Exponential Q-Q plot data for adjusted exceedances."""

    theoretical: np.ndarray
    observed: np.ndarray
    max_abs_deviation: float


def qq_exponential(adj: AdjustedExceedances) -> QQReport:
    """Pairs (exponential quantile scaled by the sample mean, order statistic)."""
    n = len(adj.values)
    if n < 20:
        raise InsufficientDataError(f"need >= 20 values for a Q-Q report, got {n}")
    observed = np.sort(adj.values)
    k = np.arange(1, n + 1)
    theoretical = -np.log(1.0 - (k - 0.5) / n) * float(np.mean(adj.values))
    return QQReport(
        theoretical=theoretical,
        observed=observed,
        max_abs_deviation=float(np.max(np.abs(observed - theoretical))),
    )


@dataclass
class PotModel:
    """Fitted exceedance model, immutable after fitting.

    kind 'direct' samples q + f(D)*E; kind 'angular' (paired targets)
    multiplies by min(sin Theta, cos Theta) with Theta uniform on [0, pi/2].
    """

    target_id: str
    p: float
    q: float
    scale: CyclicScale
    day_pool: np.ndarray  # multiset of exceedance day-of-year values
    kind: str             # 'direct' | 'angular'
    shape: float = 0.0    # tail shape, fixed at 0 (exponential)

    def __post_init__(self):
        self.day_pool = np.asarray(self.day_pool, dtype=np.int64)
        if self.kind not in ("direct", "angular"):
            raise ValueError(f"kind must be 'direct' or 'angular', got {self.kind!r}")
        if self.shape != 0.0:
            raise ValueError("only the exponential tail (shape 0) is supported")

    def to_json(self) -> str:
        return json.dumps(
            {
                "target_id": self.target_id,
                "p": self.p,
                "q": self.q,
                "n_basis": self.scale.n_basis,
                "knots": list(self.scale.knots),
                "coefficients": [float(c) for c in self.scale.coefficients],
                "floor": self.scale.floor,
                "day_pool": [int(d) for d in self.day_pool],
                "kind": self.kind,
                "shape": self.shape,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "PotModel":
        obj = json.loads(text)
        scale = CyclicScale(
            n_basis=obj["n_basis"],
            coefficients=np.array(obj["coefficients"]),
            floor=obj["floor"],
        )
        return cls(
            target_id=obj["target_id"], p=obj["p"], q=obj["q"], scale=scale,
            day_pool=np.array(obj["day_pool"]), kind=obj["kind"],
            shape=obj.get("shape", 0.0),
        )


def fit_pot_model(
    target: UnivariateTarget,
    p: float,
    n_basis: int = DEFAULT_N_BASIS,
) -> PotModel:
    """Fit the full seasonal POT model at level p.

    Paired targets are fitted on the norm series and sampled through the
    angular decomposition; everything else is fitted on y directly.
    """
    use_aux = target.has_aux
    exc = extract_exceedances(target, p, use_aux=use_aux)
    scale = fit_seasonal_scale(exc, n_basis=n_basis)
    return PotModel(
        target_id=target.target_id,
        p=p,
        q=exc.q,
        scale=scale,
        day_pool=exc.days,
        kind="angular" if use_aux else "direct",
    )


def sample_model(model: PotModel, n: int, seed) -> np.ndarray:
    """Draw n independent exceedance-level samples from the fitted model.

    D is uniform on the exceedance day pool (with multiplicity), E is
    standard exponential; the angular kind multiplies by
    min(sin Theta, cos Theta), Theta ~ U([0, pi/2]).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if model.day_pool.size == 0:
        raise ValueError("model has an empty day pool")
    rng = np.random.default_rng(seed)
    d = rng.choice(model.day_pool, size=n, replace=True)
    e = rng.exponential(size=n)
    y = model.q + model.scale(d) * e
    if model.kind == "angular":
        theta = rng.uniform(0.0, math.pi / 2.0, size=n)
        y = y * np.minimum(np.sin(theta), np.cos(theta))
    return y


def observed_exceedance_values(target: UnivariateTarget, model: PotModel) -> np.ndarray:
    """Observed sample at the model's exceedance level.

    Direct models: the y values strictly above q.  Angular models: the y
    values at the times where the norm series exceeds q (the quantity the
    model's samples emulate).
    """
    if model.kind == "angular":
        if not target.has_aux:
            raise ValueError("angular model requires a paired target")
        return target.y[target.ybar > model.q]
    return target.y[target.y > model.q]
