"""
MDP data model, validation, file persistence and built-in example models.

Rewards are attached to transitions, ``r(s, s')`` for a given action, and
absent transitions have probability zero.  State and action order is the
declared order and every tie-break in the package refers to it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

ROW_SUM_TOL = 1e-9

_MDP_FIELDS = ("discount", "states", "actions", "allowed", "transitions")
_TRANSITION_FIELDS = ("from", "action", "to", "prob", "reward")


class MdpFileError(ValueError):
    """Raised when an MDP or policy file cannot be parsed."""


class MdpValidationError(ValueError):
    """Raised when a model violates its invariants where a valid one is required."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid MDP: " + "; ".join(self.violations))


@dataclass(frozen=True)
class Transition:
    source: str
    action: str
    target: str
    prob: float
    reward: float


@dataclass(frozen=True)
class MdpModel:
    """Finite discounted MDP.

    Construction does not check invariants; use :func:`validate_mdp` (or
    :meth:`require_valid`) before solving.  The dense arrays exposed as
    properties are computed once and cached.
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    allowed: Mapping[str, tuple[str, ...]]
    transitions: tuple[Transition, ...]
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(
            self, "allowed", {s: tuple(a) for s, a in dict(self.allowed).items()}
        )
        object.__setattr__(self, "transitions", tuple(self.transitions))
        object.__setattr__(self, "discount", float(self.discount))

    def __hash__(self):
        return id(self)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @cached_property
    def state_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def action_index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.actions)}

    @cached_property
    def _dense(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n, m = self.n_states, self.n_actions
        probs = np.zeros((m, n, n))
        rewards = np.zeros((m, n, n))
        mask = np.zeros((n, m), dtype=bool)
        for s, acts in self.allowed.items():
            for a in acts:
                mask[self.state_index[s], self.action_index[a]] = True
        for t in self.transitions:
            a, i, j = self.action_index[t.action], self.state_index[t.source], self.state_index[t.target]
            probs[a, i, j] += t.prob
            rewards[a, i, j] = t.reward
        for arr in (probs, rewards, mask):
            arr.setflags(write=False)
        return probs, rewards, mask

    @property
    def probs(self) -> np.ndarray:
        """``probs[a, s, s']`` = p(s'|s,a)."""
        return self._dense[0]

    @property
    def rewards(self) -> np.ndarray:
        """``rewards[a, s, s']`` = r(s,s') under action a."""
        return self._dense[1]

    @property
    def allowed_mask(self) -> np.ndarray:
        """Boolean ``[s, a]`` mask of allowed actions."""
        return self._dense[2]

    @cached_property
    def expected_reward(self) -> np.ndarray:
        """R(s,a) as an ``[a, s]`` array."""
        return (self.probs * self.rewards).sum(axis=2)

    @cached_property
    def reward_bounds(self) -> tuple[float, float]:
        rs = [t.reward for t in self.transitions if t.prob > 0]
        if not rs:
            return 0.0, 0.0
        return min(rs), max(rs)

    @property
    def max_abs_reward(self) -> float:
        lo, hi = self.reward_bounds
        return max(abs(lo), abs(hi))

    def successors(self, state: str, action: str) -> list[tuple[int, float, float]]:
        """(successor index, probability, reward) for every non-zero transition."""
        a, s = self.action_index[action], self.state_index[state]
        row = self.probs[a, s]
        return [(int(j), float(row[j]), float(self.rewards[a, s, j])) for j in np.flatnonzero(row > 0)]

    def require_valid(self) -> "MdpModel":
        report = validate_mdp(self)
        if not report.ok:
            raise MdpValidationError(report.violations)
        return self

    def structurally_equal(self, other: "MdpModel") -> bool:
        return (
            self.states == other.states
            and self.actions == other.actions
            and dict(self.allowed) == dict(other.allowed)
            and self.transitions == other.transitions
            and self.discount == other.discount
        )


@dataclass(frozen=True)
class Policy:
    """Deterministic policy: one action per state."""

    action_of: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "action_of", dict(self.action_of))

    def __getitem__(self, state: str) -> str:
        return self.action_of[state]

    def indices(self, model: MdpModel) -> np.ndarray:
        """Action index per state, in model state order."""
        return np.array([model.action_index[self.action_of[s]] for s in model.states], dtype=int)

    @classmethod
    def from_indices(cls, model: MdpModel, idx) -> "Policy":
        return cls({s: model.actions[int(a)] for s, a in zip(model.states, idx)})

    def check(self, model: MdpModel) -> None:
        for s in model.states:
            if s not in self.action_of:
                raise ValueError(f"policy has no action for state {s!r}")
            if self.action_of[s] not in model.allowed.get(s, ()):
                raise ValueError(f"policy action {self.action_of[s]!r} is not allowed in state {s!r}")
        extra = set(self.action_of) - set(model.states)
        if extra:
            raise ValueError(f"policy names unknown states: {sorted(extra)}")


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_mdp(model: MdpModel) -> ValidationReport:
    """Check every model invariant; violations are returned, never raised."""
    out: list[str] = []
    states, actions = set(model.states), set(model.actions)

    if len(states) != len(model.states):
        out.append("duplicate state identifiers")
    if len(actions) != len(model.actions):
        out.append("duplicate action identifiers")
    if not model.states:
        out.append("model has no states")
    lam = model.discount
    if not math.isfinite(lam) or lam < 0:
        out.append(f"discount must be >= 0 (got {lam:g})")
    elif lam >= 1:
        out.append("discount must be < 1")

    for s in model.allowed:
        if s not in states:
            out.append(f"allowed actions given for unknown state {s!r}")
    for s in model.states:
        acts = model.allowed.get(s, ())
        if not acts:
            out.append(f"state {s!r} has no allowed action")
        for a in acts:
            if a not in actions:
                out.append(f"state {s!r} allows unknown action {a!r}")

    seen = set()
    sums: dict[tuple[str, str], float] = {}
    for i, t in enumerate(model.transitions):
        where = f"transition {i} ({t.source}, {t.action} -> {t.target})"
        bad = False
        for role, name, pool in (("state", t.source, states), ("action", t.action, actions), ("state", t.target, states)):
            if name not in pool:
                out.append(f"{where}: unknown {role} {name!r}")
                bad = True
        if bad:
            continue
        if t.action not in model.allowed.get(t.source, ()):
            out.append(f"{where}: action {t.action!r} not allowed in state {t.source!r}")
        if not (0.0 <= t.prob <= 1.0) or math.isnan(t.prob):
            out.append(f"{where}: probability {t.prob:g} outside [0, 1]")
        if not math.isfinite(t.reward):
            out.append(f"{where}: reward must be finite")
        key = (t.source, t.action, t.target)
        if key in seen:
            out.append(f"{where}: duplicate transition")
        seen.add(key)
        sums[(t.source, t.action)] = sums.get((t.source, t.action), 0.0) + t.prob

    for s in model.states:
        for a in model.allowed.get(s, ()):
            if a not in actions:
                continue
            total = sums.get((s, a), 0.0)
            if abs(total - 1.0) > ROW_SUM_TOL:
                out.append(f"row ({s}, {a}) sums to {total:.6g}")
    return ValidationReport(out)


def recycling_robot(
    beta: float = 0.8,
    r_search: float = 0.9,
    r_wait: float = 0.4,
    r_rescue: float = -1.0,
    discount: float = 0.8,
) -> MdpModel:
    """Two battery levels ("low", "high"), actions search/wait/recharge.

    Searching from "high" drops to "low" with probability ``1 - beta``;
    searching from "low" keeps the level with probability ``beta`` and
    otherwise needs a rescue (negative reward) back to "high".
    """
    T = Transition
    transitions = [
        T("low", "search", "low", beta, r_search),
        T("low", "search", "high", 1 - beta, r_rescue),
        T("low", "wait", "low", 1.0, r_wait),
        T("low", "recharge", "high", 1.0, 0.0),
        T("high", "search", "high", beta, r_search),
        T("high", "search", "low", 1 - beta, r_search),
        T("high", "wait", "high", 1.0, r_wait),
        T("high", "recharge", "high", 1.0, 0.0),
    ]
    acts = ("search", "wait", "recharge")
    return MdpModel(
        states=("low", "high"),
        actions=acts,
        allowed={"low": acts, "high": acts},
        transitions=tuple(transitions),
        discount=discount,
    )


def random_mdp(n_states: int, n_actions: int, discount: float, seed: int) -> MdpModel:
    """Dense random MDP; rewards uniform in [-1, 1], every action allowed everywhere."""
    if int(n_states) != n_states or n_states < 1:
        raise ValueError("n_states must be a positive integer")
    if int(n_actions) != n_actions or n_actions < 1:
        raise ValueError("n_actions must be a positive integer")
    if not (0.0 <= discount < 1.0):
        raise ValueError("discount must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    states = tuple(f"s{i}" for i in range(n_states))
    actions = tuple(f"a{i}" for i in range(n_actions))
    transitions = []
    for s in states:
        for a in actions:
            w = rng.random(n_states) + 1e-3
            w = w / w.sum()
            r = rng.uniform(-1.0, 1.0, n_states)
            for j, s2 in enumerate(states):
                transitions.append(Transition(s, a, s2, float(w[j]), float(r[j])))
    return MdpModel(
        states=states,
        actions=actions,
        allowed={s: actions for s in states},
        transitions=tuple(transitions),
        discount=float(discount),
    )


# -- persistence -------------------------------------------------------------

def mdp_to_dict(model: MdpModel) -> dict:
    return {
        "discount": model.discount,
        "states": list(model.states),
        "actions": list(model.actions),
        "allowed": {s: list(a) for s, a in model.allowed.items()},
        "transitions": [
            {"from": t.source, "action": t.action, "to": t.target, "prob": t.prob, "reward": t.reward}
            for t in model.transitions
        ],
    }


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MdpFileError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _strings(value, where: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise MdpFileError(f"{where}: expected an array of strings")
    return value


def mdp_from_dict(data: dict) -> MdpModel:
    if not isinstance(data, dict):
        raise MdpFileError("top level must be an object")
    unknown = sorted(set(data) - set(_MDP_FIELDS))
    if unknown:
        raise MdpFileError(f"unknown field(s): {', '.join(unknown)}")
    for name in _MDP_FIELDS:
        if name not in data:
            raise MdpFileError(f"missing field {name!r}")

    discount = _number(data["discount"], "discount")
    states = _strings(data["states"], "states")
    actions = _strings(data["actions"], "actions")
    if not isinstance(data["allowed"], dict):
        raise MdpFileError("allowed: expected an object mapping state -> actions")
    allowed = {s: tuple(_strings(a, f"allowed.{s}")) for s, a in data["allowed"].items()}
    if not isinstance(data["transitions"], list):
        raise MdpFileError("transitions: expected an array")
    transitions = []
    for i, rec in enumerate(data["transitions"]):
        where = f"transitions[{i}]"
        if not isinstance(rec, dict):
            raise MdpFileError(f"{where}: expected an object")
        extra = sorted(set(rec) - set(_TRANSITION_FIELDS))
        if extra:
            raise MdpFileError(f"{where}: unknown field(s): {', '.join(extra)}")
        for name in _TRANSITION_FIELDS:
            if name not in rec:
                raise MdpFileError(f"{where}: missing field {name!r}")
        for name in ("from", "action", "to"):
            if not isinstance(rec[name], str):
                raise MdpFileError(f"{where}.{name}: expected a string")
        transitions.append(
            Transition(
                rec["from"],
                rec["action"],
                rec["to"],
                _number(rec["prob"], f"{where}.prob"),
                _number(rec["reward"], f"{where}.reward"),
            )
        )
    return MdpModel(tuple(states), tuple(actions), allowed, tuple(transitions), discount)


def _read_json(path) -> object:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MdpFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_mdp(path, validate: bool = True) -> MdpModel:
    """Read a model file.

    Raises :class:`MdpFileError` on malformed content and, when ``validate``
    is set, :class:`MdpValidationError` listing every violated invariant.
    """
    try:
        model = mdp_from_dict(_read_json(path))
    except MdpFileError as exc:
        msg = str(exc)
        raise MdpFileError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from None
    if validate:
        model.require_valid()
    return model


def save_mdp(model: MdpModel, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(model), indent=2) + "\n", encoding="utf-8")


def load_policy(path, model: MdpModel | None = None) -> Policy:
    data = _read_json(path)
    if not isinstance(data, dict) or not all(isinstance(k, str) and isinstance(v, str) for k, v in data.items()):
        raise MdpFileError(f"{path}: policy file must map state -> action")
    policy = Policy(data)
    if model is not None:
        policy.check(model)
    return policy


def save_policy(policy: Policy, path, model: MdpModel | None = None) -> None:
    order = model.states if model is not None else list(policy.action_of)
    data = {s: policy.action_of[s] for s in order}
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


BUILTIN_PREFIX = "builtin:"


def builtin_path(name: str) -> Path:
    """Path of a model file shipped with the package (e.g. ``recycling_robot``)."""
    p = Path(__file__).with_name("data") / f"{name.replace('-', '_')}.json"
    if not p.exists():
        raise FileNotFoundError(f"no built-in model named {name!r}")
    return p


def resolve_model_path(path: str) -> Path:
    if str(path).startswith(BUILTIN_PREFIX):
        return builtin_path(str(path)[len(BUILTIN_PREFIX):])
    return Path(path)
