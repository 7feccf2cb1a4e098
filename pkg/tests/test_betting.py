"""Tests for the order-statistic betting game and level selection."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potbet import (
    BettingState,
    GameConfig,
    SynthSpec,
    TargetSpec,
    generate_synthetic,
    fit_pot_model,
    null_calibration,
    play_game,
    reduce_target,
    run_rounds,
    select_level,
    ville_rejects,
)
from potbet.betting import GameInfeasibleError, level_seed
from potbet.potmodel import observed_exceedance_values


class TestBettingState:
    def test_identity_rounds_keep_everything_flat(self):
        state = BettingState()
        for v in (1.0, 2.0, 3.0):
            state.step(v, v)
        assert state.W == 1.0
        assert state.L0 == 1.0 and state.L1 == 1.0
        assert state.gamma1 == 0.5

    def test_single_round_hand_computed(self):
        state = BettingState()
        state.step(0.0, 0.4)
        assert state.L1 == pytest.approx(1.2)
        assert state.L0 == pytest.approx(0.8)
        assert state.gamma1 == pytest.approx(1.2 / 2.0)
        assert state.W == pytest.approx(1.0)  # first bet is 0.5

    def test_constant_positive_diffs_grow_l1_geometrically(self):
        state = BettingState()
        for k in range(6):
            state.step(0.0, 0.5)
            assert state.L1 == pytest.approx(1.25 ** (k + 1))
            # regret bound with explicit log(4) slack
            assert math.log(state.W) >= math.log(state.L1) - math.log(4) - 1e-12

    def test_clipping_bounds_the_update(self):
        state = BettingState(clip=1.0)
        state.step(0.0, 7.3)  # raw diff 7.3 clipped to 1.0
        assert state.L1 == pytest.approx(1.5)
        assert state.history[0][2] == 1.0

    @given(st.lists(st.floats(min_value=-1.0, max_value=1.0),
                    min_size=1, max_size=30))
    @settings(max_examples=200, deadline=None)
    def test_regret_bound_every_round(self, diffs):
        state = BettingState()
        for d in diffs:
            state.step(0.0, d)
            bound = max(math.log(state.L0), math.log(state.L1)) - math.log(4)
            assert math.log(state.W) >= bound - 1e-12


class TestRunRounds:
    def test_plays_from_kth_largest_to_maximum(self):
        res = run_rounds([1.0, 2.0, 3.0], [1.5, 2.0, 2.5], clip=1.0, alpha=0.05)
        assert np.array_equal(res.pairs[:, 0], [1.0, 2.0, 3.0])
        assert res.raw_diffs == pytest.approx([0.5, 0.0, -0.5])

    def test_identical_sides_terminal_wealth_one(self):
        res = run_rounds([4.0, 5.0, 9.0], [4.0, 5.0, 9.0], clip=1.0, alpha=0.05)
        assert res.terminal_wealth == 1.0
        assert res.rejection_round is None

    def test_deterministic_drift_crossing_round(self):
        # diffs exactly m=0.5: constant-bet capital 1.25^(k+1) crosses
        # 1/alpha = 2 first at k+1 = ceil(ln 2 / ln 1.25) = 4
        obs = np.zeros(12)
        mod = np.full(12, 0.5)
        state = BettingState()
        crossing = None
        for k in range(12):
            state.step(obs[k], mod[k])
            if crossing is None and state.L1 >= 2.0:
                crossing = k
        assert crossing + 1 == math.ceil(math.log(2) / math.log(1.25)) == 4


class TestVille:
    def test_flat_path_never_rejects(self):
        res = run_rounds([1.0, 2.0], [1.0, 2.0], clip=1.0, alpha=0.05)
        assert not ville_rejects(res, 0.05)

    def test_rejection_at_threshold_twenty(self):
        res = run_rounds([1.0, 2.0], [1.0, 2.0], clip=1.0, alpha=0.05)
        res.wealth_path = np.array([20.0, 1.0])
        assert ville_rejects(res, 0.05)


def small_target(seed=0, years=20):
    data = generate_synthetic(SynthSpec(n_runs=2, years_per_run=years, seed=seed))
    return reduce_target(data, TargetSpec.canonical("T2"))


class TestPlayGame:
    def test_infeasible_when_too_few_observations(self):
        target = small_target()
        model = fit_pot_model(target, 0.9, n_basis=4)
        cfg = GameConfig(K=5, level_grid=(0.9,), max_level=0.9)
        with pytest.raises(GameInfeasibleError):
            play_game(np.array([1.0, 2.0]), model, cfg)

    def test_seed_determinism(self):
        target = small_target()
        model = fit_pot_model(target, 0.99, n_basis=4)
        y_obs = observed_exceedance_values(target, model)
        cfg = GameConfig(K=3, seed=77, level_grid=(0.99,), max_level=0.99)
        a = play_game(y_obs, model, cfg)
        b = play_game(y_obs, model, cfg)
        assert a.terminal_wealth == b.terminal_wealth
        assert np.array_equal(a.wealth_path, b.wealth_path)


class TestGameConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            GameConfig(K=1)
        with pytest.raises(ValueError):
            GameConfig(alpha=0.0)
        with pytest.raises(ValueError):
            GameConfig(clip=2.5)
        with pytest.raises(ValueError):
            GameConfig(level_grid=())

    def test_grid_is_sorted(self):
        cfg = GameConfig(level_grid=(0.99, 0.9, 0.995))
        assert cfg.level_grid == (0.9, 0.99, 0.995)


class TestSelectLevel:
    def test_single_level_grid_returns_it(self):
        target = small_target(seed=1)
        cfg = GameConfig(level_grid=(0.95,), max_level=0.95, seed=5, n_basis=4)
        sel = select_level(target, cfg)
        assert sel.p_star == 0.95
        assert set(sel.scores) == {0.95}

    def test_levels_above_max_are_scored_but_not_selected(self):
        target = small_target(seed=2, years=40)
        cfg = GameConfig(level_grid=(0.9, 0.95, 0.99), max_level=0.95,
                         seed=5, n_basis=4)
        sel = select_level(target, cfg)
        assert 0.99 in sel.scores
        assert sel.p_star <= 0.95

    def test_deterministic_scores(self):
        target = small_target(seed=3)
        cfg = GameConfig(level_grid=(0.9, 0.95), max_level=0.95, seed=9, n_basis=4)
        assert select_level(target, cfg).scores == select_level(target, cfg).scores

    def test_infeasible_levels_reported(self):
        target = small_target(seed=4, years=2)  # 1460 days
        # 0.9999 leaves ~0 exceedances: recorded as a failure, not fatal
        cfg = GameConfig(level_grid=(0.9, 0.9999), max_level=0.9999,
                         seed=1, n_basis=4)
        sel = select_level(target, cfg)
        assert 0.9999 in sel.failures
        assert sel.p_star == 0.9

    def test_all_levels_infeasible_raises_with_details(self):
        target = small_target(seed=4, years=2)
        cfg = GameConfig(level_grid=(0.9995, 0.9999), max_level=0.9999,
                         seed=1, n_basis=4)
        with pytest.raises(GameInfeasibleError, match="0.9995"):
            select_level(target, cfg)

    def test_level_seed_is_stable(self):
        a = level_seed(42, 0.999).generate_state(4)
        b = level_seed(42, 0.999).generate_state(4)
        assert np.array_equal(a, b)


class TestNullCalibration:
    def test_trials_validated(self):
        target = small_target(seed=6)
        model = fit_pot_model(target, 0.9, n_basis=4)
        with pytest.raises(ValueError):
            null_calibration(model, GameConfig(), trials=0)

    def test_wealth_bounds_and_unreachable_threshold(self):
        # With K = 5 and clip = 1 every per-round factor lies in [0.5, 1.5],
        # so terminal wealth is confined to [0.5^5, 1.5^5] and the Ville
        # threshold 1/alpha = 10 > 1.5^5 can never be crossed.
        target = small_target(seed=6, years=30)
        model = fit_pot_model(target, 0.95, n_basis=4)
        cfg = GameConfig(K=5, alpha=0.1, seed=11)
        rep = null_calibration(model, cfg, trials=500, n_sample=200)
        assert rep.trials == 500
        assert rep.terminal_wealths.shape == (500,)
        assert np.all(rep.terminal_wealths >= 0.5**5 - 1e-12)
        assert np.all(rep.terminal_wealths <= 1.5**5 + 1e-12)
        assert rep.rejection_fraction == 0.0

    def test_mean_wealth_drifts_upward_with_k(self):
        # Differences of matching top order statistics carry momentum (each
        # round's difference is the previous one plus an independent spacing
        # term), so the strategy profits on average even when both samples
        # come from the same model.  The drift grows with K; assert it is
        # present and material so nobody mistakes these scores for a
        # calibrated e-process under this two-sample null.
        target = small_target(seed=6, years=30)
        model = fit_pot_model(target, 0.95, n_basis=4)
        means = {}
        for k in (5, 25):
            rep = null_calibration(
                model, GameConfig(K=k, alpha=0.1, seed=11), trials=500,
                n_sample=200,
            )
            se = rep.sd_terminal_wealth / math.sqrt(rep.trials)
            means[k] = (rep.mean_terminal_wealth, se)
        assert means[5][0] > 1.0 + 3 * means[5][1]
        assert means[25][0] > means[5][0]

    def test_deterministic_given_seed(self):
        target = small_target(seed=6, years=30)
        model = fit_pot_model(target, 0.95, n_basis=4)
        cfg = GameConfig(K=4, alpha=0.1, seed=23)
        rep1 = null_calibration(model, cfg, trials=200, n_sample=150)
        rep2 = null_calibration(model, cfg, trials=200, n_sample=150)
        assert np.array_equal(rep1.terminal_wealths, rep2.terminal_wealths)
        assert rep1.rejection_fraction == rep2.rejection_fraction
