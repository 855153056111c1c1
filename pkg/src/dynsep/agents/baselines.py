"""Scripted comparison agents and the novelty exploration reward."""

from __future__ import annotations

import numpy as np

from ..acoustics import HEADING_VEC, AgentPose, geodesic_distance
from ..bank import ConfigurationError
from ..envs import Action, Episode

SCRIPTED_KINDS = ("stand", "rotate", "doa", "random", "proximity")


class NoveltyCounter:
    """Per-episode visitation counts over navigation-graph nodes."""

    def __init__(self):
        self.counts: dict[tuple[int, int], int] = {}

    def reset(self) -> None:
        self.counts.clear()

    def visit(self, node: tuple[int, int]) -> int:
        self.counts[node] = self.counts.get(node, 0) + 1
        return self.counts[node]


def novelty_reward(counter: NoveltyCounter, node: tuple[int, int]) -> float:
    """1/sqrt(n) where n is the updated visitation count of the node."""
    return 1.0 / np.sqrt(counter.visit(node))


class ScriptedAgent:
    """Stateful per-episode action source for the scripted baselines."""

    def __init__(self, kind: str, rng: np.random.Generator | None = None):
        if kind not in SCRIPTED_KINDS:
            raise ConfigurationError(f"unknown baseline kind {kind!r}")
        self.kind = kind
        self.rng = rng or np.random.default_rng(0)
        self._doa_phase = 0  # 0 seek edge, 1..2 turn back, 3 hold

    def reset(self) -> None:
        self._doa_phase = 0

    def action(self, episode: Episode) -> Action:
        if self.kind == "stand":
            return Action.NO_OP
        if self.kind == "rotate":
            return Action.TURN_RIGHT
        if self.kind == "random":
            return Action(int(self.rng.integers(3)))
        if self.kind == "proximity":
            return self._proximity(episode)
        return self._doa(episode)

    def _proximity(self, episode: Episode) -> Action:
        """Random action, resampled if it would leave the 2 m target radius."""
        scene = episode.spec.scene
        target = episode.spec.target.location
        for _ in range(20):
            action = Action(int(self.rng.integers(3)))
            if action is not Action.MOVE_FORWARD:
                return action
            fr, fc = HEADING_VEC[episode.pose.heading]
            nxt = (episode.pose.node[0] + fr, episode.pose.node[1] + fc)
            if not scene.is_free(nxt):
                return action  # collision keeps the pose, still inside the radius
            if geodesic_distance(scene, nxt, target) <= 2.0:
                return action
        return Action.TURN_RIGHT

    def _doa(self, episode: Episode) -> Action:
        """Rotate clockwise to a forward edge, step off the target, turn around twice."""
        if self._doa_phase == 0:
            fr, fc = HEADING_VEC[episode.pose.heading]
            nxt = (episode.pose.node[0] + fr, episode.pose.node[1] + fc)
            if episode.spec.scene.is_free(nxt):
                self._doa_phase = 1
                return Action.MOVE_FORWARD
            return Action.TURN_RIGHT
        if self._doa_phase in (1, 2):
            self._doa_phase += 1
            return Action.TURN_RIGHT
        return Action.NO_OP
