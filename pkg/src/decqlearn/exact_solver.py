"""Exact model-based computations for stochastic games.

Fixing the other players' stationary policies turns one player's problem into
a single-agent MDP; everything here is built on that reduction: optimal
Q-functions (value iteration on Q-factors), policy evaluation, epsilon-greedy
policy sets, equilibrium tests, the minimum nonzero Q-gap ``delta_bar``, the
experimentation perturbation gap, and a joint-reachability check. These are
the ground-truth oracles the learning code is tested against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .game_model import (
    DeterministicPolicy,
    JointDeterministicPolicy,
    StationaryPolicy,
    StochasticGame,
    enumerate_deterministic_policies,
    soften_policy,
)

__all__ = [
    "QTable",
    "InducedMdp",
    "induced_mdp",
    "q_star",
    "policy_value",
    "br_hat",
    "is_equilibrium",
    "equilibrium_set",
    "delta_bar",
    "perturbation_gap",
    "perturbation_check",
    "check_reachability",
    "EnumerationBudgetError",
]

_MAX_VALUE_ITERATIONS = 5_000_000
DEFAULT_SOLVE_BUDGET = 10**6


class EnumerationBudgetError(RuntimeError):
    """Raised when an exhaustive computation would exceed its solve budget."""


@dataclass(frozen=True)
class QTable:
    """One player's Q-function: a finite table over (state, own action)."""

    player: int
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2:
            raise ValueError("Q values must be a (num_states, num_actions) array")
        if not np.all(np.isfinite(vals)):
            raise ValueError("Q values must be finite")


@dataclass(frozen=True)
class InducedMdp:
    """The single-agent MDP one player faces when opponents play fixed
    stationary policies: marginalized cost and kernel plus own discount."""

    states: tuple[str, ...]
    actions: tuple[str, ...]
    cost: np.ndarray
    kernel: np.ndarray
    discount: float

    def __post_init__(self) -> None:
        rows = self.kernel.sum(axis=2)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            raise ValueError("induced kernel rows must sum to 1")


def _opponent_weights(
    game: StochasticGame, player: int, others: Sequence[StationaryPolicy]
) -> np.ndarray:
    """Probability of each opponent action combination, shaped
    (num_states, m0, ..., m_{N-1}) with the player's own axis left whole."""
    seen = sorted(pol.player for pol in others)
    expected = [j for j in range(game.num_players) if j != player]
    if seen != expected:
        raise ValueError(f"opponent policies must cover players {expected}, got {seen}")
    counts = game.action_counts
    n = game.num_players
    w = np.ones((game.num_states,) + counts)
    for pol in others:
        if pol.probs.shape != (game.num_states, counts[pol.player]):
            raise ValueError(f"policy for player {pol.player} has the wrong shape")
        shape = [1] * (n + 1)
        shape[0] = game.num_states
        shape[pol.player + 1] = counts[pol.player]
        w = w * pol.probs.reshape(shape)
    return w


def induced_mdp(
    game: StochasticGame, player: int, others: Sequence[StationaryPolicy]
) -> InducedMdp:
    """Marginalize the opponents' stationary policies out of the game."""
    if not 0 <= player < game.num_players:
        raise ValueError(f"player id {player} out of range")
    counts = game.action_counts
    w = _opponent_weights(game, player, others)
    opp_axes = tuple(j + 1 for j in range(game.num_players) if j != player)
    cost_full = game.costs[player].reshape((game.num_states,) + counts)
    cost = (cost_full * w).sum(axis=opp_axes)
    kernel_full = game.kernel.reshape((game.num_states,) + counts + (game.num_states,))
    kernel = (kernel_full * w[..., None]).sum(axis=opp_axes)
    return InducedMdp(
        states=game.states,
        actions=game.action_sets[player],
        cost=cost,
        kernel=kernel,
        discount=game.discounts[player],
    )


def _q_value_iteration(mdp: InducedMdp, tol: float) -> np.ndarray:
    beta = mdp.discount
    if beta == 0.0:
        return mdp.cost.copy()
    threshold = tol * (1.0 - beta) / (2.0 * beta)
    q = np.zeros_like(mdp.cost)
    for _ in range(_MAX_VALUE_ITERATIONS):
        q_next = mdp.cost + beta * (mdp.kernel @ q.min(axis=1))
        gap = float(np.abs(q_next - q).max())
        q = q_next
        if gap <= threshold:
            return q
    raise RuntimeError("value iteration failed to reach the stopping threshold")


def q_star(
    game: StochasticGame, player: int, others: Sequence[StationaryPolicy], tol: float
) -> QTable:
    """Optimal Q-function against the opponents' stationary policies.

    Runs value iteration on Q-factors from the all-zero table; the stopping
    rule (successive gap <= tol * (1 - beta) / (2 * beta), direct pass for
    beta = 0) guarantees a sup-norm error of at most ``tol``.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    return QTable(player, _q_value_iteration(induced_mdp(game, player, others), tol))


def policy_value(
    game: StochasticGame, player: int, joint: Sequence[StationaryPolicy], tol: float
) -> np.ndarray:
    """Player's expected discounted cost per initial state when everyone
    (player included) follows the given joint stationary policy."""
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    seen = sorted(pol.player for pol in joint)
    if seen != list(range(game.num_players)):
        raise ValueError("joint policy must contain exactly one policy per player")
    counts = game.action_counts
    n = game.num_players
    w = np.ones((game.num_states,) + counts)
    for pol in joint:
        shape = [1] * (n + 1)
        shape[0] = game.num_states
        shape[pol.player + 1] = counts[pol.player]
        w = w * pol.probs.reshape(shape)
    w_flat = w.reshape(game.num_states, game.num_joint_actions)
    cost = (game.costs[player] * w_flat).sum(axis=1)
    transition = np.einsum("sa,sat->st", w_flat, game.kernel)
    beta = game.discounts[player]
    eye = np.eye(game.num_states)
    return np.linalg.solve(eye - beta * transition, cost)


def br_hat(q: QTable, eps: float) -> list[DeterministicPolicy]:
    """All deterministic policies that are eps-greedy with respect to q
    in every state. Nonempty for eps >= 0."""
    if eps < 0.0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    allowed = []
    for row in q.values:
        cutoff = row.min() + eps
        allowed.append([a for a in range(row.shape[0]) if row[a] <= cutoff])
    return [
        DeterministicPolicy(q.player, combo) for combo in itertools.product(*allowed)
    ]


def _choice_is_greedy(values: np.ndarray, choice: Sequence[int], eps: float) -> bool:
    """Single membership rule shared by the equilibrium tests: the chosen
    action must be within eps of the best value in every state."""
    for x, a in enumerate(choice):
        row = values[x]
        if row[a] > row.min() + eps:
            return False
    return True


def _indicators(
    game: StochasticGame, joint_choices: Sequence[Sequence[int]], skip: int
) -> list[StationaryPolicy]:
    return [
        DeterministicPolicy(j, tuple(c)).as_stationary(game.action_counts[j])
        for j, c in enumerate(joint_choices)
        if j != skip
    ]


def is_equilibrium(
    game: StochasticGame, joint: JointDeterministicPolicy, eps: float, tol: float
) -> bool:
    """True iff every player's policy is an eps-best-response to the rest,
    judged on exact Q-values with numerical slack tol."""
    if eps < 0.0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    for pol in joint.policies:
        pol.validate_for(game)
    choices = joint.choices
    for i in range(game.num_players):
        q = q_star(game, i, _indicators(game, choices, skip=i), tol)
        if not _choice_is_greedy(q.values, choices[i], eps + tol):
            return False
    return True


def _opponent_joints(
    game: StochasticGame, player: int
) -> Iterable[tuple[tuple[int, ...], ...]]:
    """All deterministic opponent joint policies, as per-player choice tuples
    keyed by opponent id order."""
    per_player = [
        enumerate_deterministic_policies(game.num_states, game.action_counts[j])
        for j in range(game.num_players)
        if j != player
    ]
    return itertools.product(*per_player)


def _opponent_enumeration_cost(game: StochasticGame) -> int:
    total = 0
    for i in range(game.num_players):
        solves = 1
        for j in range(game.num_players):
            if j != i:
                solves *= game.action_counts[j] ** game.num_states
        total += solves
    return total


def _check_budget(game: StochasticGame, budget: int, what: str) -> None:
    cost = _opponent_enumeration_cost(game)
    if cost > budget:
        raise EnumerationBudgetError(
            f"{what} needs {cost} exact solves, above the budget of {budget}"
        )


def equilibrium_set(
    game: StochasticGame, tol: float, budget: int = DEFAULT_SOLVE_BUDGET
) -> frozenset[tuple[tuple[int, ...], ...]]:
    """Encodings (per-player choice tuples) of all deterministic
    0-equilibria, using slack tol on exact Q-values."""
    _check_budget(game, budget, "equilibrium enumeration")
    per_player = [
        enumerate_deterministic_policies(game.num_states, count)
        for count in game.action_counts
    ]
    cache: dict[tuple[int, tuple[tuple[int, ...], ...]], np.ndarray] = {}
    result = []
    for joint in itertools.product(*per_player):
        ok = True
        for i in range(game.num_players):
            opp_key = (i, tuple(c for j, c in enumerate(joint) if j != i))
            values = cache.get(opp_key)
            if values is None:
                values = q_star(game, i, _indicators(game, joint, skip=i), tol).values
                cache[opp_key] = values
            if not _choice_is_greedy(values, joint[i], tol):
                ok = False
                break
        if ok:
            result.append(joint)
    return frozenset(result)


def delta_bar(
    game: StochasticGame, tol: float, budget: int = DEFAULT_SOLVE_BUDGET
) -> float:
    """Minimum nonzero same-state gap between optimal Q-factors, over all
    players and all deterministic opponent joint policies.

    Gaps below 10 * tol are treated as exact ties (solver noise); returns
    ``math.inf`` when no nonzero gap remains.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    _check_budget(game, budget, "delta_bar")
    zero_cutoff = 10.0 * tol
    best = math.inf
    for i in range(game.num_players):
        others_ids = [j for j in range(game.num_players) if j != i]
        for opp in _opponent_joints(game, i):
            others = [
                DeterministicPolicy(j, choice).as_stationary(game.action_counts[j])
                for j, choice in zip(others_ids, opp)
            ]
            values = q_star(game, i, others, tol).values
            for row in values:
                gaps = np.abs(row[:, None] - row[None, :])
                nonzero = gaps[gaps >= zero_cutoff]
                if nonzero.size:
                    best = min(best, float(nonzero.min()))
    return best


def perturbation_gap(
    game: StochasticGame,
    rhos: Sequence[float],
    tol: float = 1e-10,
    budget: int = DEFAULT_SOLVE_BUDGET,
) -> float:
    """Largest sup-norm shift of any player's optimal Q-function when every
    deterministic opponent joint is softened by its experimentation rate."""
    if len(rhos) != game.num_players:
        raise ValueError("need one rho per player")
    for rho in rhos:
        if not 0.0 <= rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {rho}")
    _check_budget(game, budget, "perturbation_gap")
    worst = 0.0
    for i in range(game.num_players):
        others_ids = [j for j in range(game.num_players) if j != i]
        for opp in _opponent_joints(game, i):
            baseline = []
            softened = []
            for j, choice in zip(others_ids, opp):
                pol = DeterministicPolicy(j, choice)
                baseline.append(pol.as_stationary(game.action_counts[j]))
                softened.append(soften_policy(pol, rhos[j], game.action_counts[j]))
            q_base = q_star(game, i, baseline, tol).values
            q_soft = q_star(game, i, softened, tol).values
            worst = max(worst, float(np.abs(q_base - q_soft).max()))
    return worst


def perturbation_check(
    game: StochasticGame,
    rhos: Sequence[float],
    deltas: Sequence[float],
    tol: float = 1e-10,
    budget: int = DEFAULT_SOLVE_BUDGET,
) -> tuple[float, float, bool]:
    """Evaluate the perturbation gap against the tolerance margin
    min_i min(delta_i, delta_bar - delta_i) / 4.

    Returns (gap, bound, gap < bound).
    """
    if len(deltas) != game.num_players:
        raise ValueError("need one delta per player")
    gap = perturbation_gap(game, rhos, tol, budget)
    dbar = delta_bar(game, tol, budget)
    bound = min(min(d, dbar - d) for d in deltas) / 4.0
    return gap, bound, gap < bound


def check_reachability(game: StochasticGame) -> bool:
    """True iff the state graph (edge s -> s' when some joint action moves
    s to s' with positive probability) is strongly connected."""
    n = game.num_states
    positive = game.kernel.max(axis=1) > 0.0
    forward = [np.nonzero(positive[s])[0].tolist() for s in range(n)]
    backward: list[list[int]] = [[] for _ in range(n)]
    for s in range(n):
        for t in forward[s]:
            backward[t].append(s)

    def covers_all(adj: list[list[int]]) -> bool:
        seen = {0}
        frontier = [0]
        while frontier:
            s = frontier.pop()
            for t in adj[s]:
                if t not in seen:
                    seen.add(t)
                    frontier.append(t)
        return len(seen) == n

    return covers_all(forward) and covers_all(backward)
