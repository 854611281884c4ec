"""Tracker and Foveator worlds, motor actuators and run metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_AREAS = 8
# compass moves of the fovea as (row, col) steps, in area order
COMPASS = {
    "N": (-1, 0), "NE": (-1, 1), "E": (0, 1), "SE": (1, 1),
    "S": (1, 0), "SW": (1, -1), "W": (0, -1), "NW": (-1, -1),
}
EDGES = ("top", "right", "bottom", "left")


# -- worlds ---------------------------------------------------------------------


class TrackerWorld:
    """A square target sliding along one edge of the sensory grid.

    Case ``2 * edge + direction`` names the edge and whether the target moves
    towards increasing (0) or decreasing (1) coordinates along it; area ``c``
    of the motor layer is the correct answer to case ``c``.
    """

    def __init__(self, rng: np.random.Generator, size: int = 20, target: int = 2,
                 speed: int = 1, gap: int = 20):
        self.rng = rng
        self.size, self.target, self.speed, self.gap = size, target, speed, gap
        self.case: int | None = None
        self._path: list[int] = []
        self._step = 0
        self._blank = 0
        self.tic = 0
        self._start_episode()

    @property
    def n_positions(self) -> int:
        return self.size - self.target + 1

    def trajectory(self, case: int) -> list[int]:
        pos = list(range(0, self.n_positions, self.speed))
        return pos if case % 2 == 0 else pos[::-1]

    def _start_episode(self):
        self.case = int(self.rng.integers(N_AREAS))
        self._path = self.trajectory(self.case)
        self._step = 0

    @property
    def present(self) -> bool:
        return self._blank == 0 and self.case is not None

    def footprint(self, case: int, pos: int) -> np.ndarray:
        grid = np.zeros((self.size, self.size), dtype=bool)
        edge = EDGES[case // 2]
        t, n = self.target, self.size
        if edge == "top":
            grid[0:t, pos:pos + t] = True
        elif edge == "bottom":
            grid[n - t:n, pos:pos + t] = True
        elif edge == "left":
            grid[pos:pos + t, 0:t] = True
        else:
            grid[pos:pos + t, n - t:n] = True
        return grid

    def render(self) -> np.ndarray:
        if not self.present:
            return np.zeros((self.size, self.size), dtype=bool)
        return self.footprint(self.case, self._path[self._step])

    def judge(self, engaged) -> dict:
        """Reward per engaged area: +1 for the current case, -1 otherwise."""
        if not self.present:
            return {}
        return {int(a): (1.0 if a == self.case else -1.0) for a in engaged}

    def advance(self, engaged=()):
        self.tic += 1
        if self._blank:
            self._blank -= 1
            if self._blank == 0:
                self._start_episode()
            return
        self._step += 1
        if self._step >= len(self._path):
            if self.gap:
                self._blank = self.gap
            else:
                self._start_episode()

    def step(self, engaged=()):
        """Judge ``engaged`` against the current frame, advance, return (next frame, rewards)."""
        rewards = self.judge(engaged)
        self.advance(engaged)
        return self.render(), rewards


class FoveatorWorld:
    """An object on the retina that the fovea must be moved onto.

    ``offset`` is the object's (row, col) position relative to the fovea.
    Moving the fovea by ``m`` shifts the object by ``-m`` on the retina.
    """

    def __init__(self, rng: np.random.Generator, size: int = 20, target: int = 2,
                 gap: int = 5, max_steps: int = 60):
        self.rng = rng
        self.size, self.target, self.gap, self.max_steps = size, target, gap, max_steps
        self.half = (size - target) // 2
        self.offset = np.zeros(2, dtype=int)
        self._blank = 0
        self._steps = 0
        self.tic = 0
        self._spawn()

    def _spawn(self):
        h = self.half
        side = int(self.rng.integers(4))
        along = int(self.rng.integers(-h, h + 1))
        self.offset = np.array([[-h, along], [along, h], [h, along], [along, -h]][side])
        self._steps = 0

    @property
    def present(self) -> bool:
        return self._blank == 0

    @staticmethod
    def distance(offset) -> float:
        return float(np.hypot(*offset))

    def render(self) -> np.ndarray:
        grid = np.zeros((self.size, self.size), dtype=bool)
        if not self.present:
            return grid
        r, c = self.offset + self.half
        if 0 <= r <= self.size - self.target and 0 <= c <= self.size - self.target:
            grid[r:r + self.target, c:c + self.target] = True
        return grid

    def judge(self, engaged) -> dict:
        """+1 to an engaged area whose own move strictly reduces the distance, else -1."""
        if not self.present:
            return {}
        d0 = self.distance(self.offset)
        moves = list(COMPASS.values())
        return {int(a): (1.0 if self.distance(self.offset - moves[a]) < d0 else -1.0)
                for a in engaged}

    def advance(self, engaged=()):
        self.tic += 1
        if not self.present:
            self._blank -= 1
            if self._blank == 0:
                self._spawn()
            return
        moves = list(COMPASS.values())
        shift = np.sum([moves[a] for a in engaged], axis=0) if len(engaged) else np.zeros(2, int)
        self.offset = self.offset - shift
        self._steps += 1
        centred = not self.offset.any()
        lost = np.abs(self.offset).max() > self.half
        if centred or lost or self._steps >= self.max_steps:
            if self.gap:
                self._blank = self.gap
            else:
                self._spawn()

    def step(self, engaged=()):
        rewards = self.judge(engaged)
        self.advance(engaged)
        return self.render(), rewards


# -- actuators and metrics ---------------------------------------------------------


class ActuatorBank:
    """Motor areas that engage on more than ``threshold`` spikes within ``window`` tics."""

    def __init__(self, n_areas: int = N_AREAS, per_area: int = 10, threshold: int = 10,
                 window: int = 5):
        self.n_areas, self.per_area = n_areas, per_area
        self.threshold, self.window = threshold, window
        self._counts = np.zeros((window, n_areas), dtype=int)
        self._t = 0

    def neurons(self, area: int) -> np.ndarray:
        return np.arange(area * self.per_area, (area + 1) * self.per_area)

    def update(self, motor_spikes) -> list[int]:
        per_area = np.asarray(motor_spikes).reshape(self.n_areas, self.per_area).sum(1)
        self._counts[self._t % self.window] = per_area
        self._t += 1
        return [int(a) for a in np.flatnonzero(self._counts.sum(0) > self.threshold)]


@dataclass
class Metrics:
    tics: int = 0
    engagements: int = 0
    correct: int = 0
    area_rewards: list = field(default_factory=lambda: [[0, 0] for _ in range(N_AREAS)])

    def record(self, rewards: dict):
        self.tics += 1
        for a, r in rewards.items():
            self.engagements += 1
            self.correct += r > 0
            self.area_rewards[a][0 if r > 0 else 1] += 1

    @property
    def percent_correct(self) -> float:
        return 100.0 * self.correct / self.engagements if self.engagements else 0.0

    @property
    def correct_per_1000_tics(self) -> float:
        return 1000.0 * self.correct / self.tics if self.tics else 0.0

    def to_record(self) -> dict:
        return {"tics": self.tics, "engagements": self.engagements, "correct": self.correct,
                "percent_correct": self.percent_correct,
                "correct_per_1000_tics": self.correct_per_1000_tics,
                "area_rewards": [list(x) for x in self.area_rewards]}
