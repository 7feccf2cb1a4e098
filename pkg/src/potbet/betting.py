"""Betting game on top order statistics for threshold-level selection.

A K-round game compares the K largest observed values with the K largest
values of one model sample of the same size, walking from the K-th largest
toward the maximum.  Capital processes for the constant bets 0 and 1 drive
an exponential-weighting bet whose wealth is a martingale when the model's
top order statistics are coherent with the observations; the terminal
wealth scores each candidate quantile level and the minimizer is selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import potmodel
from .reduce import UnivariateTarget

DEFAULT_LEVEL_GRID = (0.9, 0.99, 0.995, 0.999, 0.9992, 0.9995, 0.9997, 0.9999)


class GameInfeasibleError(ValueError):
    """Raised when a game or a whole level grid cannot be played."""


@dataclass
class GameConfig:
    """Knobs of the order-statistic betting game and the level selection."""

    K: int = 3
    alpha: float = 0.05
    clip: float = 1.0
    level_grid: tuple = DEFAULT_LEVEL_GRID
    max_level: float = 0.9997  # levels above this stay in the grid but are never selected
    seed: int = 0
    n_basis: int = potmodel.DEFAULT_N_BASIS

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if not 0.0 < self.clip < 2.0:
            raise ValueError("clip must be in (0, 2) to keep capital positive")
        if not self.level_grid:
            raise ValueError("level_grid must be non-empty")
        self.level_grid = tuple(sorted(self.level_grid))


@dataclass
class BettingState:
    """Capital and wealth processes of one game, updated round by round."""

    clip: float = 1.0
    L0: float = 1.0          # capital of the constant bet 0
    L1: float = 1.0          # capital of the constant bet 1
    W: float = 1.0           # wealth of the exponential-weighting bet
    gamma1: float = 0.5
    history: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.history)

    def step(self, y_obs: float, y_model: float) -> float:
        """Play one round; returns the updated wealth."""
        diff = min(max(y_model - y_obs, -self.clip), self.clip)
        factor = 1.0 + (self.gamma1 - 0.5) * diff
        self.L0 *= 1.0 - 0.5 * diff
        self.L1 *= 1.0 + 0.5 * diff
        self.W *= factor
        assert factor > 0.0 and self.L0 > 0.0 and self.L1 > 0.0
        self.history.append((y_obs, y_model, diff, factor))
        self.gamma1 = self.L1 / (self.L1 + self.L0)
        return self.W


@dataclass
class GameResult:
    """Outcome of one K-round game."""

    terminal_wealth: float
    wealth_path: np.ndarray            # W_k for k = 0..K-1
    rejection_round: Optional[int]     # first k with W_k >= 1/alpha, if any
    pairs: np.ndarray                  # (K, 2) observed/model order statistics, played order
    raw_diffs: np.ndarray              # unclipped model - observed differences


def run_rounds(
    obs_top: np.ndarray, model_top: np.ndarray, clip: float, alpha: float
) -> GameResult:
    """Play the game on already-extracted top order statistics.

    Both inputs must hold the K largest values; rounds visit the K-th
    largest first and the maximum last.
    """
    obs = np.sort(np.asarray(obs_top, dtype=np.float64))       # ascending = played order
    mod = np.sort(np.asarray(model_top, dtype=np.float64))
    if obs.shape != mod.shape:
        raise ValueError("observed and model sides must have equal length")
    state = BettingState(clip=clip)
    path = np.empty(len(obs))
    rejection_round = None
    for k in range(len(obs)):
        path[k] = state.step(obs[k], mod[k])
        if rejection_round is None and path[k] >= 1.0 / alpha:
            rejection_round = k
    return GameResult(
        terminal_wealth=float(path[-1]),
        wealth_path=path,
        rejection_round=rejection_round,
        pairs=np.column_stack([obs, mod]),
        raw_diffs=mod - obs,
    )


def play_game(
    y_obs: np.ndarray,
    model: potmodel.PotModel,
    cfg: GameConfig,
    seed=None,
) -> GameResult:
    """Draw one model sample of size |y_obs| and play the K-round game."""
    y_obs = np.asarray(y_obs, dtype=np.float64)
    n = y_obs.size
    if n < cfg.K:
        raise GameInfeasibleError(f"need at least K={cfg.K} observations, got {n}")
    sample = potmodel.sample_model(model, n, cfg.seed if seed is None else seed)
    obs_top = np.partition(y_obs, n - cfg.K)[n - cfg.K:]
    mod_top = np.partition(sample, n - cfg.K)[n - cfg.K:]
    return run_rounds(obs_top, mod_top, clip=cfg.clip, alpha=cfg.alpha)


def ville_rejects(result: GameResult, alpha: float) -> bool:
    """True iff the wealth path ever reaches the Ville threshold 1/alpha."""
    return bool(np.max(result.wealth_path) >= 1.0 / alpha)


def level_seed(seed: int, p: float) -> np.random.SeedSequence:
    """Deterministic per-level RNG seed (stable across processes)."""
    return np.random.SeedSequence([seed, int(round(p * 1e8))])


@dataclass
class LevelSelection:
    """Terminal-wealth scores across the level grid and the selected level."""

    p_star: float
    scores: dict          # level -> terminal wealth
    results: dict         # level -> GameResult
    failures: dict        # level -> reason the level was skipped


def select_level(
    target: UnivariateTarget, cfg: GameConfig
) -> LevelSelection:
    """Score every grid level by terminal wealth and pick the minimizer.

    Each level gets a full model fit and one game with a seed derived from
    (cfg.seed, level).  Levels above cfg.max_level are scored but never
    selected; ties go to the larger level.
    """
    scores: dict = {}
    results: dict = {}
    failures: dict = {}
    for p in cfg.level_grid:
        try:
            model = potmodel.fit_pot_model(target, p, n_basis=cfg.n_basis)
            y_obs = potmodel.observed_exceedance_values(target, model)
            result = play_game(y_obs, model, cfg, seed=level_seed(cfg.seed, p))
        except (ValueError, np.linalg.LinAlgError) as exc:
            failures[p] = str(exc)
            continue
        scores[p] = result.terminal_wealth
        results[p] = result
    selectable = [p for p in scores if p <= cfg.max_level]
    if not selectable:
        detail = "; ".join(f"p={p}: {msg}" for p, msg in failures.items())
        raise GameInfeasibleError(f"no selectable level succeeded ({detail})")
    # min score, ties broken toward the larger level
    best = min(selectable, key=lambda p: (scores[p], -p))
    return LevelSelection(p_star=best, scores=scores, results=results,
                          failures=failures)


@dataclass
class CalibrationReport:
    """Null-hypothesis calibration of the game (both sides from one model)."""

    trials: int
    rejection_fraction: float
    mean_terminal_wealth: float
    sd_terminal_wealth: float
    terminal_wealths: np.ndarray


def null_calibration(
    model: potmodel.PotModel,
    cfg: GameConfig,
    trials: int,
    n_sample: Optional[int] = None,
) -> CalibrationReport:
    """Simulate games with both sides drawn from the model (null true).

    Reports the Ville rejection fraction at cfg.alpha and the mean terminal
    wealth.  Note that differences of corresponding top order statistics of
    two iid samples are positively autocorrelated across rounds (each round's
    difference equals the previous one plus an independent spacing term), so
    the betting strategy can profit even under the null: the mean terminal
    wealth drifts above 1 as K grows.  The report makes that drift visible
    rather than hiding it.
    """
    if trials < 100:
        raise ValueError("trials must be >= 100")
    n = n_sample if n_sample is not None else int(model.day_pool.size)
    if n < cfg.K:
        raise GameInfeasibleError(f"sample size {n} < K={cfg.K}")
    root = np.random.SeedSequence([cfg.seed, 0xCA11B])
    wealths = np.empty(trials)
    rejections = 0
    for i, child in enumerate(root.spawn(trials)):
        s_obs, s_mod = child.spawn(2)
        obs = potmodel.sample_model(model, n, s_obs)
        mod = potmodel.sample_model(model, n, s_mod)
        result = run_rounds(
            np.partition(obs, n - cfg.K)[n - cfg.K:],
            np.partition(mod, n - cfg.K)[n - cfg.K:],
            clip=cfg.clip, alpha=cfg.alpha,
        )
        wealths[i] = result.terminal_wealth
        rejections += ville_rejects(result, cfg.alpha)
    return CalibrationReport(
        trials=trials,
        rejection_fraction=rejections / trials,
        mean_terminal_wealth=float(np.mean(wealths)),
        sd_terminal_wealth=float(np.std(wealths, ddof=1)),
        terminal_wealths=wealths,
    )
