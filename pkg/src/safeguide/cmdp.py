"""Tabular constrained MDPs and exact evaluation oracles.

A constrained MDP couples the usual reward signal with a nonnegative
cost signal and a budget ``threshold`` on the expected discounted
cost-return.  A policy is *safe* when its expected discounted
cost-return from the initial distribution stays within the budget.

Everything here is exact: Q-tables come from direct linear solves (or
fixed-point iteration to the same residual on larger instances), so the
module doubles as the ground-truth oracle for every learning component
in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Direct linear solve below this many (state, action) pairs; fixed-point
# iteration beyond it.  Both are driven to the same residual.
_DIRECT_SOLVE_LIMIT = 4096
_RESIDUAL_TOL = 1e-12


class InvalidPolicyError(ValueError):
    """A policy table row is not a probability distribution."""


@dataclass(frozen=True)
class Cmdp:
    """Finite constrained MDP with dense transition tensor.

    Attributes:
        transition: shape (S, A, S), ``transition[s, a, s']`` is the
            probability of stepping to ``s'``.  Rows sum to one.
        reward: shape (S, A).
        cost: shape (S, A), nonnegative.
        threshold: safety budget d on the expected discounted cost-return.
        discount: discount factor in [0, 1).
        initial: shape (S,), initial state distribution.
        horizon_cap: episode-length cap used by rollout code; the exact
            solvers treat the process as infinite-horizon.
    """

    transition: np.ndarray
    reward: np.ndarray
    cost: np.ndarray
    threshold: float
    discount: float
    initial: np.ndarray
    horizon_cap: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "transition", np.asarray(self.transition, dtype=float))
        object.__setattr__(self, "reward", np.asarray(self.reward, dtype=float))
        object.__setattr__(self, "cost", np.asarray(self.cost, dtype=float))
        object.__setattr__(self, "initial", np.asarray(self.initial, dtype=float))
        s, a = self.reward.shape
        if self.transition.shape != (s, a, s):
            raise ValueError(f"transition shape {self.transition.shape} != {(s, a, s)}")
        if self.cost.shape != (s, a):
            raise ValueError(f"cost shape {self.cost.shape} != {(s, a)}")
        if self.initial.shape != (s,):
            raise ValueError(f"initial shape {self.initial.shape} != {(s,)}")
        row_sums = self.transition.sum(axis=2)
        if not np.allclose(row_sums, 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to 1")
        if not np.isclose(self.initial.sum(), 1.0, atol=1e-12):
            raise ValueError("initial distribution must sum to 1")
        if (self.cost < 0).any():
            raise ValueError("costs must be nonnegative")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")

    @property
    def num_states(self) -> int:
        return self.reward.shape[0]

    @property
    def num_actions(self) -> int:
        return self.reward.shape[1]

    def signal(self, name: str) -> np.ndarray:
        if name == "reward":
            return self.reward
        if name == "cost":
            return self.cost
        raise ValueError(f"unknown signal {name!r} (expected 'reward' or 'cost')")


@dataclass
class Trajectory:
    """One rollout: parallel lists of (state, action, reward, cost, next_state)."""

    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)
    next_states: list = field(default_factory=list)

    def append(self, state, action, reward: float, cost: float, next_state) -> None:
        if self.next_states and self.next_states[-1] != state:
            raise ValueError("trajectory chain broken: state != previous next_state")
        self.states.append(state)
        self.actions.append(action)
        self.rewards.append(float(reward))
        self.costs.append(float(cost))
        self.next_states.append(next_state)

    def __len__(self) -> int:
        return len(self.states)


def discounted_return(trajectory: Trajectory, discount: float, signal: str = "reward") -> float:
    """Sum of discount**t * x_t over the trajectory; 0 for an empty one."""
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    values = trajectory.rewards if signal == "reward" else trajectory.costs
    if signal not in ("reward", "cost"):
        raise ValueError(f"unknown signal {signal!r}")
    if not values:
        return 0.0
    weights = discount ** np.arange(len(values))
    return float(weights @ np.asarray(values))


def _check_policy(cmdp: Cmdp, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (cmdp.num_states, cmdp.num_actions):
        raise InvalidPolicyError(
            f"policy shape {policy.shape} != {(cmdp.num_states, cmdp.num_actions)}"
        )
    if (policy < -1e-12).any() or not np.allclose(policy.sum(axis=1), 1.0, atol=1e-9):
        raise InvalidPolicyError("policy rows must be probability distributions")
    return policy


def exact_policy_evaluation(cmdp: Cmdp, policy: np.ndarray, signal: str = "cost") -> np.ndarray:
    """Exact Q-table of ``signal`` under ``policy``.

    Solves Q = x + discount * P Pi Q where Pi averages over the policy's
    next-action distribution.  Uses a dense solve up to 4096 (s, a) pairs
    and fixed-point iteration to the same 1e-12 residual beyond that.
    """
    policy = _check_policy(cmdp, policy)
    x = cmdp.signal(signal)
    s, a = x.shape
    n = s * a
    # M[(s,a), (s',a')] = P(s'|s,a) * pi(a'|s')
    flow = cmdp.transition.reshape(n, s)
    if n <= _DIRECT_SOLVE_LIMIT:
        mix = flow[:, :, None] * policy[None, :, :]  # (n, s', a')
        m = mix.reshape(n, n)
        q = np.linalg.solve(np.eye(n) - cmdp.discount * m, x.reshape(n))
        return q.reshape(s, a)
    q = np.zeros((s, a))
    while True:
        v = (policy * q).sum(axis=1)  # (s',)
        q_next = x + cmdp.discount * (cmdp.transition @ v)
        if np.max(np.abs(q_next - q)) <= _RESIDUAL_TOL:
            return q_next
        q = q_next


def state_values(cmdp: Cmdp, policy: np.ndarray, signal: str = "cost") -> np.ndarray:
    """V(s) = sum_a policy(a|s) Q(s,a), exactly."""
    q = exact_policy_evaluation(cmdp, policy, signal)
    return (np.asarray(policy) * q).sum(axis=1)


def expected_return(cmdp: Cmdp, policy: np.ndarray, signal: str = "reward") -> float:
    """Initial-distribution-weighted expected discounted return of ``signal``."""
    return float(cmdp.initial @ state_values(cmdp, policy, signal))


def is_safe(cmdp: Cmdp, policy: np.ndarray, tol: float = 0.0) -> bool:
    """True iff the expected discounted cost-return is within threshold + tol."""
    return expected_return(cmdp, policy, "cost") <= cmdp.threshold + tol


def uniform_policy(cmdp: Cmdp) -> np.ndarray:
    return np.full((cmdp.num_states, cmdp.num_actions), 1.0 / cmdp.num_actions)


def random_policy(cmdp: Cmdp, rng: np.random.Generator) -> np.ndarray:
    """Random stochastic policy with Dirichlet(1) rows."""
    raw = rng.gamma(1.0, size=(cmdp.num_states, cmdp.num_actions))
    return raw / raw.sum(axis=1, keepdims=True)


def rollout(
    cmdp: Cmdp,
    policy: np.ndarray,
    rng: np.random.Generator,
    horizon: int | None = None,
    absorbing: set[int] | frozenset[int] = frozenset(),
) -> Trajectory:
    """Sample one trajectory from the initial distribution under ``policy``.

    Stops on entering an ``absorbing`` state or at the horizon cap.
    """
    policy = _check_policy(cmdp, policy)
    horizon = cmdp.horizon_cap if horizon is None else horizon
    traj = Trajectory()
    state = int(rng.choice(cmdp.num_states, p=cmdp.initial))
    for _ in range(horizon):
        if state in absorbing:
            break
        action = int(rng.choice(cmdp.num_actions, p=policy[state]))
        nxt = int(rng.choice(cmdp.num_states, p=cmdp.transition[state, action]))
        traj.append(state, action, cmdp.reward[state, action], cmdp.cost[state, action], nxt)
        state = nxt
    return traj


# ---------------------------------------------------------------------------
# Line-based text serialization
# ---------------------------------------------------------------------------

_FORMAT_TAG = "cmdp-v1"


def cmdp_to_text(cmdp: Cmdp) -> str:
    """Serialize to the line format: header, then one line per (s, a).

    Each body line is ``s a reward cost s':p [s':p ...]`` with only the
    nonzero transition entries.
    """
    lines = [
        _FORMAT_TAG,
        f"states {cmdp.num_states} actions {cmdp.num_actions}",
        f"discount {cmdp.discount!r}",
        f"threshold {cmdp.threshold!r}",
        f"horizon {cmdp.horizon_cap}",
        "initial " + " ".join(
            f"{s}:{p!r}" for s, p in enumerate(cmdp.initial) if p != 0.0
        ),
    ]
    for s in range(cmdp.num_states):
        for a in range(cmdp.num_actions):
            entries = " ".join(
                f"{t}:{p!r}" for t, p in enumerate(cmdp.transition[s, a]) if p != 0.0
            )
            lines.append(f"{s} {a} {cmdp.reward[s, a]!r} {cmdp.cost[s, a]!r} {entries}")
    return "\n".join(lines) + "\n"


def cmdp_from_text(text: str) -> Cmdp:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _FORMAT_TAG:
        raise ValueError(f"not a {_FORMAT_TAG} document")
    header = dict()
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        key = line.split(None, 1)[0]
        if key in ("states", "discount", "threshold", "horizon", "initial"):
            header[key] = line.split(None, 1)[1]
        else:
            body_start = i
            break
    counts = header["states"].split()
    s, a = int(counts[0]), int(counts[2])
    initial = np.zeros(s)
    for entry in header["initial"].split():
        idx, p = entry.split(":")
        initial[int(idx)] = float(p)
    transition = np.zeros((s, a, s))
    reward = np.zeros((s, a))
    cost = np.zeros((s, a))
    for line in lines[body_start:]:
        parts = line.split()
        si, ai = int(parts[0]), int(parts[1])
        reward[si, ai] = float(parts[2])
        cost[si, ai] = float(parts[3])
        for entry in parts[4:]:
            t, p = entry.split(":")
            transition[si, ai, int(t)] = float(p)
    return Cmdp(
        transition=transition,
        reward=reward,
        cost=cost,
        threshold=float(header["threshold"]),
        discount=float(header["discount"]),
        initial=initial,
        horizon_cap=int(header["horizon"]),
    )
