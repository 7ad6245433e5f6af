import numpy as np
import pytest

from decqlearn.agent import Agent, AgentConfig
from decqlearn.exact_solver import QTable
from decqlearn.game_model import DeterministicPolicy


def _agent(rho=0.05, lam=0.2, delta=0.5, alpha=0.5, beta=0.8, q=None, baseline=(0, 0), boundaries=(0, 10, 20)):
    q = np.zeros((2, 2)) if q is None else np.asarray(q, dtype=float)
    return Agent(
        player=0,
        rho=rho,
        lam=lam,
        delta=delta,
        alpha=alpha,
        discount=beta,
        baseline=baseline,
        initial_q=q,
        boundaries=boundaries,
    )


class TestAgentConfig:
    def test_open_interval_validation(self):
        with pytest.raises(ValueError):
            AgentConfig(player=0, rho=0.0, lam=0.2, delta=0.5, alpha=0.1)
        with pytest.raises(ValueError):
            AgentConfig(player=0, rho=0.05, lam=1.0, delta=0.5, alpha=0.1)
        with pytest.raises(ValueError):
            AgentConfig(player=0, rho=0.05, lam=0.2, delta=0.0, alpha=0.1)
        with pytest.raises(ValueError):
            AgentConfig(player=0, rho=0.05, lam=0.2, delta=0.5, alpha=1.0)

    def test_initial_policy_player_must_match(self):
        with pytest.raises(ValueError):
            AgentConfig(
                player=0,
                rho=0.05,
                lam=0.2,
                delta=0.5,
                alpha=0.1,
                initial_policy=DeterministicPolicy(1, (0, 0)),
            )

    def test_from_config_fills_zero_q(self):
        cfg = AgentConfig(
            player=0,
            rho=0.05,
            lam=0.2,
            delta=0.5,
            alpha=0.1,
            initial_policy=DeterministicPolicy(0, (1, 0)),
        )
        agent = Agent.from_config(cfg, num_states=2, num_actions=2, discount=0.8, boundaries=(0, 5))
        assert agent.q == [[0.0, 0.0], [0.0, 0.0]]
        assert agent.baseline == [1, 0]
        assert agent.next_update_time == 5

    def test_initial_q_accepts_qtable(self):
        cfg = AgentConfig(
            player=0,
            rho=0.05,
            lam=0.2,
            delta=0.5,
            alpha=0.1,
            initial_policy=DeterministicPolicy(0, (0, 0)),
            initial_q=QTable(0, np.full((2, 2), 3.0)),
        )
        agent = Agent.from_config(cfg, num_states=2, num_actions=2, discount=0.8, boundaries=(0, 5))
        assert agent.q == [[3.0, 3.0], [3.0, 3.0]]
        assert agent.max_abs_q == 3.0


class TestSelectAction:
    def test_draw_above_rho_uses_baseline(self):
        agent = _agent(rho=0.05, baseline=(1, 0))
        assert agent.select_action(0, 0.9, 0) == 1

    def test_draw_at_or_below_rho_experiments(self):
        agent = _agent(rho=0.05, baseline=(1, 0))
        assert agent.select_action(0, 0.01, 0) == 0
        assert agent.select_action(0, 0.05, 0) == 0  # boundary draw experiments

    def test_rho_zero_always_baseline(self):
        agent = _agent(rho=0.0, baseline=(1, 0))
        for draw in (1e-12, 0.3, 0.9999, 1.0):
            assert agent.select_action(0, draw, 0) == 1


class TestQUpdate:
    def test_arithmetic_example(self):
        agent = _agent(alpha=0.5, beta=0.8)
        agent.q_update(0, 1, 2.0, 1)
        assert agent.q == [[0.0, 1.0], [0.0, 0.0]]

    def test_alpha_one_full_replacement(self):
        agent = _agent(alpha=1.0, beta=0.8, q=[[5.0, 5.0], [1.0, 3.0]])
        agent.q_update(0, 0, 2.0, 1)
        assert agent.q[0][0] == 2.0 + 0.8 * 1.0

    def test_fixed_point_entry_unchanged(self):
        # entry already equals cost + beta * min next row
        agent = _agent(alpha=0.5, beta=0.5, q=[[2.0, 0.0], [2.0, 2.0]])
        agent.q_update(0, 0, 1.0, 1)  # 1 + 0.5 * 2 = 2
        assert agent.q[0][0] == 2.0

    def test_touches_exactly_one_entry(self, rng):
        agent = _agent(alpha=0.3, beta=0.8, q=rng.normal(size=(2, 2)))
        for _ in range(200):
            before = [row[:] for row in agent.q]
            x = int(rng.integers(2))
            u = int(rng.integers(2))
            x_next = int(rng.integers(2))
            agent.q_update(x, u, float(rng.normal()), x_next)
            diffs = [
                (s, a)
                for s in range(2)
                for a in range(2)
                if agent.q[s][a] != before[s][a]
            ]
            assert diffs in ([], [(x, u)])

    def test_uses_pre_update_next_row(self):
        # self-referential update (x_next == x): the min must be taken
        # before the entry is overwritten
        agent = _agent(alpha=1.0, beta=0.5, q=[[1.0, 4.0], [0.0, 0.0]])
        agent.q_update(0, 0, 0.0, 0)
        assert agent.q[0][0] == 0.5 * 1.0

    def test_tracks_running_max(self):
        agent = _agent(alpha=1.0, beta=0.0, q=[[0.0, 0.0], [0.0, 0.0]])
        agent.q_update(0, 0, -7.0, 1)
        agent.q_update(0, 1, 3.0, 1)
        assert agent.max_abs_q == 7.0


class TestEndPhaseUpdate:
    def _no_draw(self, allowed):
        raise AssertionError("subset draw must not be consulted")

    def test_greedy_baseline_kept_regardless_of_draws(self):
        agent = _agent(delta=0.5, q=[[0.0, 10.0], [0.0, 10.0]], baseline=(0, 0), boundaries=(0, 10, 20))
        changed = agent.end_phase_update(10, 0.99, self._no_draw)
        assert not changed
        assert agent.baseline == [0, 0]
        assert agent.phase_index == 1
        assert agent.next_update_time == 20

    def test_inertia_keeps_poor_baseline(self):
        agent = _agent(lam=0.2, delta=0.5, q=[[0.0, 10.0], [0.0, 10.0]], baseline=(1, 1), boundaries=(0, 10, 20))
        changed = agent.end_phase_update(10, 0.1, self._no_draw)
        assert not changed and agent.baseline == [1, 1]

    def test_switch_draws_from_greedy_set(self):
        agent = _agent(lam=0.2, delta=0.5, q=[[0.0, 10.0], [0.0, 0.3]], baseline=(1, 1), boundaries=(0, 10, 20))
        seen = {}

        def draw(allowed):
            seen["allowed"] = allowed
            return (0, 1)

        changed = agent.end_phase_update(10, 0.9, draw)
        assert changed and agent.baseline == [0, 1]
        assert seen["allowed"] == ((0,), (0, 1))

    def test_huge_delta_accepts_everything(self):
        agent = _agent(delta=100.0, q=[[0.0, 10.0], [0.0, 10.0]], baseline=(1, 1), boundaries=(0, 10, 20))
        assert not agent.end_phase_update(10, 0.99, self._no_draw)
        assert agent.baseline == [1, 1]

    def test_non_boundary_call_rejected(self):
        agent = _agent(boundaries=(0, 10, 20))
        with pytest.raises(ValueError):
            agent.end_phase_update(7, 0.5, self._no_draw)

    def test_keep_frequency_matches_inertia(self, rng):
        # forced-switch situation: keep happens iff draw < lam
        lam = 0.2
        draws = rng.random(100_000)
        keeps = 0
        for draw in draws.tolist():
            agent = _agent(
                lam=lam, delta=0.5, q=[[0.0, 10.0], [0.0, 10.0]], baseline=(1, 1), boundaries=(0, 10, 20)
            )
            agent.end_phase_update(10, draw, lambda allowed: (0, 0))
            if agent.baseline == [1, 1]:
                keeps += 1
        se = np.sqrt(lam * (1 - lam) / draws.size)
        assert abs(keeps / draws.size - lam) <= 3 * se

    def test_schedule_exhaustion_disables_updates(self):
        agent = _agent(boundaries=(0, 10))
        agent.end_phase_update(10, 0.5, self._no_draw)
        assert agent.next_update_time == -1
