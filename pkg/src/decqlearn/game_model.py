"""Finite stochastic games: data types, validation, and the noise-driven
transition mechanism.

A game couples N players, a finite state set, per-player finite action sets,
per-player stage-cost tensors, per-player discount factors, a transition
kernel over (state, joint action), and an initial state distribution.

Joint actions are indexed in row-major order of player index: player 0 is the
most significant digit, so for action counts (m0, ..., m_{N-1}) the joint
index of (a0, ..., a_{N-1}) is a0 * m1 * ... * m_{N-1} + ... + a_{N-1}.
The JSON game format (see ``game_to_dict``) uses the same ordering.
"""

from __future__ import annotations

import itertools
import json
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "StochasticGame",
    "DeterministicPolicy",
    "StationaryPolicy",
    "JointDeterministicPolicy",
    "validate_game",
    "soften_policy",
    "sample_transition",
    "sample_initial_state",
    "enumerate_deterministic_policies",
    "game_to_dict",
    "game_from_dict",
    "save_game",
    "load_game",
]

_SUM_TOL = 1e-12


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StochasticGame:
    """Immutable description of a finite discounted stochastic game.

    Shapes: ``costs[i]`` is (num_states, num_joint_actions); ``kernel`` is
    (num_states, num_joint_actions, num_states); ``initial_dist`` is
    (num_states,). Structural (shape) errors raise at construction; numeric
    invariants are checked by :func:`validate_game`.
    """

    states: tuple[str, ...]
    action_sets: tuple[tuple[str, ...], ...]
    costs: tuple[np.ndarray, ...]
    discounts: tuple[float, ...]
    kernel: np.ndarray
    initial_dist: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(
            self, "action_sets", tuple(tuple(str(a) for a in acts) for acts in self.action_sets)
        )
        n = len(self.action_sets)
        if n < 1:
            raise ValueError("game needs at least one player")
        if not self.states:
            raise ValueError("game needs at least one state")
        if any(len(acts) < 1 for acts in self.action_sets):
            raise ValueError("every player needs at least one action")
        object.__setattr__(self, "costs", tuple(_readonly(c) for c in self.costs))
        object.__setattr__(self, "discounts", tuple(float(b) for b in self.discounts))
        object.__setattr__(self, "kernel", _readonly(self.kernel))
        object.__setattr__(self, "initial_dist", _readonly(self.initial_dist))

        s, a = self.num_states, self.num_joint_actions
        if len(self.costs) != n or len(self.discounts) != n:
            raise ValueError("costs and discounts must have one entry per player")
        for i, c in enumerate(self.costs):
            if c.shape != (s, a):
                raise ValueError(f"costs[{i}] has shape {c.shape}, expected {(s, a)}")
        if self.kernel.shape != (s, a, s):
            raise ValueError(f"kernel has shape {self.kernel.shape}, expected {(s, a, s)}")
        if self.initial_dist.shape != (s,):
            raise ValueError(f"initial_dist has shape {self.initial_dist.shape}, expected {(s,)}")

    @property
    def num_players(self) -> int:
        return len(self.action_sets)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @cached_property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(len(acts) for acts in self.action_sets)

    @cached_property
    def num_joint_actions(self) -> int:
        out = 1
        for count in self.action_counts:
            out *= count
        return out

    @cached_property
    def joint_strides(self) -> tuple[int, ...]:
        """Multipliers turning a joint action tuple into its flat index."""
        counts = self.action_counts
        strides = [1] * len(counts)
        for i in range(len(counts) - 2, -1, -1):
            strides[i] = strides[i + 1] * counts[i + 1]
        return tuple(strides)

    def joint_index(self, actions: Sequence[int]) -> int:
        """Flat index of a joint action tuple (player 0 most significant)."""
        if len(actions) != self.num_players:
            raise ValueError("joint action needs one entry per player")
        idx = 0
        for a, count, stride in zip(actions, self.action_counts, self.joint_strides):
            if not 0 <= a < count:
                raise ValueError(f"action id {a} out of range")
            idx += a * stride
        return idx

    def joint_tuple(self, index: int) -> tuple[int, ...]:
        """Inverse of :meth:`joint_index`."""
        if not 0 <= index < self.num_joint_actions:
            raise ValueError(f"joint action index {index} out of range")
        out = []
        for stride, count in zip(self.joint_strides, self.action_counts):
            out.append((index // stride) % count)
        return tuple(out)

    @cached_property
    def cumulative_kernel(self) -> tuple[tuple[tuple[float, ...], ...], ...]:
        """Per (state, joint action): cumulative next-state masses, as plain
        lists for fast inverse-CDF sampling."""
        cum = np.cumsum(self.kernel, axis=2)
        return tuple(tuple(tuple(row) for row in block) for block in cum)

    @cached_property
    def last_positive_state(self) -> tuple[tuple[int, ...], ...]:
        """Per (state, joint action): index of the last next-state with
        positive mass (fallback target for w at the top of the CDF)."""
        out = []
        for s in range(self.num_states):
            row = []
            for ja in range(self.num_joint_actions):
                positive = np.nonzero(self.kernel[s, ja] > 0.0)[0]
                row.append(int(positive[-1]) if positive.size else self.num_states - 1)
            out.append(tuple(row))
        return tuple(out)


@dataclass(frozen=True)
class DeterministicPolicy:
    """One player's deterministic stationary policy: a total map
    state index -> action id."""

    player: int
    choice: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "choice", tuple(int(a) for a in self.choice))
        if self.player < 0:
            raise ValueError("player id must be nonnegative")
        if any(a < 0 for a in self.choice):
            raise ValueError("action ids must be nonnegative")

    def validate_for(self, game: StochasticGame) -> None:
        if not 0 <= self.player < game.num_players:
            raise ValueError(f"player id {self.player} out of range")
        if len(self.choice) != game.num_states:
            raise ValueError("policy must choose an action in every state")
        count = game.action_counts[self.player]
        for x, a in enumerate(self.choice):
            if not 0 <= a < count:
                raise ValueError(f"action id {a} invalid for player {self.player} in state {x}")

    def as_stationary(self, num_actions: int) -> StationaryPolicy:
        """Indicator (point-mass) representation of this policy."""
        probs = np.zeros((len(self.choice), num_actions))
        for x, a in enumerate(self.choice):
            probs[x, a] = 1.0
        return StationaryPolicy(self.player, probs)


@dataclass(frozen=True)
class StationaryPolicy:
    """One player's stationary randomized policy: per state, a probability
    vector over that player's actions."""

    player: int
    probs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _readonly(self.probs))
        if self.probs.ndim != 2:
            raise ValueError("probs must be a (num_states, num_actions) array")
        rows = self.probs.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > _SUM_TOL):
            raise ValueError("every probability row must sum to 1")
        if np.any(self.probs < 0.0):
            raise ValueError("probabilities must be nonnegative")

    def is_soft(self, xi: float) -> bool:
        """True iff every action has probability at least xi in every state."""
        return bool(np.all(self.probs >= xi))


@dataclass(frozen=True)
class JointDeterministicPolicy:
    """A deterministic policy for every player, ordered by player id."""

    policies: tuple[DeterministicPolicy, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "policies", tuple(self.policies))
        for i, pol in enumerate(self.policies):
            if pol.player != i:
                raise ValueError("policies must be ordered by player id, one per player")

    @property
    def choices(self) -> tuple[tuple[int, ...], ...]:
        """Nested-tuple encoding, convenient as a dict key."""
        return tuple(pol.choice for pol in self.policies)

    @staticmethod
    def from_choices(choices: Sequence[Sequence[int]]) -> "JointDeterministicPolicy":
        return JointDeterministicPolicy(
            tuple(DeterministicPolicy(i, tuple(c)) for i, c in enumerate(choices))
        )


def validate_game(game: StochasticGame) -> list[str]:
    """Check the numeric invariants of a game; returns violations as data.

    An empty list means the game is valid. Each violation names the offending
    player/state/joint-action.
    """
    violations: list[str] = []
    for i, beta in enumerate(game.discounts):
        if not 0.0 <= beta < 1.0:
            violations.append(f"discount for player {i} is {beta}, must lie in [0, 1)")
    for i, c in enumerate(game.costs):
        if not np.all(np.isfinite(c)):
            bad = np.argwhere(~np.isfinite(c))[0]
            violations.append(
                f"cost for player {i} is not finite at state {game.states[bad[0]]}, "
                f"joint action {game.joint_tuple(int(bad[1]))}"
            )
    for s in range(game.num_states):
        for ja in range(game.num_joint_actions):
            row = game.kernel[s, ja]
            if np.any(row < 0.0):
                violations.append(
                    f"kernel row (state {game.states[s]}, joint action "
                    f"{game.joint_tuple(ja)}) has a negative entry"
                )
            total = float(row.sum())
            if abs(total - 1.0) > _SUM_TOL:
                violations.append(
                    f"kernel row (state {game.states[s]}, joint action "
                    f"{game.joint_tuple(ja)}) sums to {total!r}, expected 1"
                )
    total = float(game.initial_dist.sum())
    if np.any(game.initial_dist < 0.0):
        violations.append("initial_dist has a negative entry")
    if abs(total - 1.0) > _SUM_TOL:
        violations.append(f"initial_dist sums to {total!r}, expected 1")
    return violations


def soften_policy(policy: DeterministicPolicy, rho: float, num_actions: int) -> StationaryPolicy:
    """Mix a deterministic policy with uniform experimentation.

    The result plays the chosen action with probability (1 - rho) + rho / m
    and every other action with probability rho / m, where m = num_actions.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    probs = np.full((len(policy.choice), num_actions), rho / num_actions)
    for x, a in enumerate(policy.choice):
        if not 0 <= a < num_actions:
            raise ValueError(f"action id {a} out of range for {num_actions} actions")
        probs[x, a] += 1.0 - rho
    return StationaryPolicy(policy.player, probs)


def _inverse_cdf(cumulative: Sequence[float], w: float, fallback: int) -> int:
    """First index whose cumulative mass strictly exceeds w; ``fallback``
    (the last index of positive mass) catches w at the very top of the CDF."""
    idx = bisect_right(cumulative, w)
    if idx >= len(cumulative):
        return fallback
    return idx


def sample_transition(game: StochasticGame, state: int, joint_action: int, w: float) -> int:
    """Deterministic inverse-CDF next-state selection.

    Returns the first next-state whose cumulative kernel mass strictly
    exceeds ``w``; ``w`` exactly at the top of the CDF maps to the last state
    of positive mass. Under w ~ Unif[0, 1] the induced law is the kernel row.
    """
    if not 0 <= state < game.num_states:
        raise ValueError(f"state id {state} out of range")
    if not 0 <= joint_action < game.num_joint_actions:
        raise ValueError(f"joint action index {joint_action} out of range")
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"w must lie in [0, 1], got {w}")
    return _inverse_cdf(
        game.cumulative_kernel[state][joint_action],
        w,
        game.last_positive_state[state][joint_action],
    )


def sample_initial_state(game: StochasticGame, w: float) -> int:
    """Inverse-CDF draw from the initial state distribution, with the same
    tie rule as :func:`sample_transition`."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"w must lie in [0, 1], got {w}")
    cumulative = tuple(np.cumsum(game.initial_dist))
    positive = np.nonzero(game.initial_dist > 0.0)[0]
    fallback = int(positive[-1]) if positive.size else game.num_states - 1
    return _inverse_cdf(cumulative, w, fallback)


def enumerate_deterministic_policies(num_states: int, num_actions: int) -> list[tuple[int, ...]]:
    """All choice tuples (one action id per state), lexicographic order."""
    return list(itertools.product(range(num_actions), repeat=num_states))


def game_to_dict(game: StochasticGame, players: Iterable[str] | None = None) -> dict:
    """JSON-ready description. Joint-action columns follow the row-major
    player-0-most-significant order documented in the module docstring."""
    names = list(players) if players is not None else [f"p{i}" for i in range(game.num_players)]
    if len(names) != game.num_players:
        raise ValueError("need one player name per player")
    return {
        "players": names,
        "states": list(game.states),
        "actions": [list(acts) for acts in game.action_sets],
        "discounts": list(game.discounts),
        "costs": [c.tolist() for c in game.costs],
        "kernel": game.kernel.tolist(),
        "initial_dist": game.initial_dist.tolist(),
    }


def game_from_dict(data: dict) -> StochasticGame:
    """Inverse of :func:`game_to_dict`; raises ValueError on malformed input."""
    try:
        players = data["players"]
        states = data["states"]
        actions = data["actions"]
        discounts = data["discounts"]
        costs = data["costs"]
        kernel = data["kernel"]
        initial = data["initial_dist"]
    except KeyError as exc:
        raise ValueError(f"game description is missing key {exc.args[0]!r}") from None
    if len(actions) != len(players) or len(discounts) != len(players) or len(costs) != len(players):
        raise ValueError("actions, discounts, and costs must have one entry per player")
    return StochasticGame(
        states=tuple(states),
        action_sets=tuple(tuple(a) for a in actions),
        costs=tuple(np.asarray(c, dtype=np.float64) for c in costs),
        discounts=tuple(float(b) for b in discounts),
        kernel=np.asarray(kernel, dtype=np.float64),
        initial_dist=np.asarray(initial, dtype=np.float64),
    )


def save_game(game: StochasticGame, path: str | Path, players: Iterable[str] | None = None) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game, players), indent=2) + "\n")


def load_game(path: str | Path) -> StochasticGame:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValueError(f"cannot read game file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"game file {path} is not valid JSON: {exc}") from exc
    return game_from_dict(data)
