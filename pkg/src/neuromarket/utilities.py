"""Utility functions that tell a neuron what its spikes are worth."""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .scoring import activate


class ConfigurationError(ValueError):
    pass


class UtilityKind(str, Enum):
    FREQUENCY = "frequency"
    INVARIANCE = "invariance"
    NEUROMODULATOR = "neuromodulator"
    FEEDBACK = "feedback"


def _key(x) -> tuple[int, ...]:
    return tuple(int(b) for b in np.asarray(x).ravel())


@dataclass
class NeuromodulatorModel:
    """Reward distribution conditioned on the state.

    ``conditional`` maps a state (anything ``tuple(x)`` can key) to either a
    mapping ``{reward value: probability}`` or a callable returning one.
    ``default`` is used for states missing from the table.
    """

    conditional: Mapping | Callable = field(default_factory=dict)
    default: Mapping[float, float] | None = None

    def distribution(self, x) -> Mapping[float, float]:
        if callable(self.conditional):
            dist = self.conditional(x)
        else:
            dist = self.conditional.get(_key(x), self.default)
        if dist is None:
            raise ConfigurationError(f"no reward distribution for state {_key(x)}")
        return dist

    def expectation(self, x) -> float:
        dist = self.distribution(x)
        total = sum(dist.values())
        if not np.isclose(total, 1.0, atol=1e-12):
            raise ConfigurationError(f"reward probabilities sum to {total}")
        value = sum(nu * p for nu, p in dist.items())
        if not np.isfinite(value):
            raise ConfigurationError("reward expectation is not finite")
        return float(value)


def u_frequency(x) -> float:
    return 1.0


def u_invariance(x_prev, x_now, w, theta, history: Sequence = (), gamma: float = 0.0) -> float:
    """Worth of a spike is whether the neuron spiked on the previous tic.

    ``history`` holds older states, most recent first (t-2, t-3, ...); each is
    discounted by a further factor ``gamma``.  ``x_now`` only fixes the time
    reference.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ConfigurationError("discount must lie in [0, 1]")
    value = float(activate(w, x_prev, theta))
    for k, x in enumerate(history, start=1):
        value += gamma**k * activate(w, x, theta)
    return value


def u_neuromodulator(model: NeuromodulatorModel, x) -> float:
    return model.expectation(x)


def u_feedback(w_fb, x, fb_mask=None, ff_mask=None) -> float:
    """Feedback current ``<w_fb, x>`` from the downstream population."""
    w_fb = np.asarray(w_fb, dtype=float)
    x = np.asarray(x, dtype=float)
    if fb_mask is not None:
        fb_mask = np.asarray(fb_mask, dtype=bool)
        if ff_mask is not None and np.any(fb_mask & np.asarray(ff_mask, dtype=bool)):
            raise ConfigurationError("feedback and feedforward populations overlap")
        if np.any(w_fb[~fb_mask] != 0):
            raise ConfigurationError("feedback weights outside the feedback mask")
    return float(w_fb @ x)


@dataclass
class UtilitySpec:
    """A pluggable utility; call it with the keyword arguments its kind needs."""

    kind: UtilityKind
    gamma: float = 0.0
    model: NeuromodulatorModel | None = None

    def __post_init__(self):
        self.kind = UtilityKind(self.kind)
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("discount must lie in [0, 1]")
        if self.kind is UtilityKind.NEUROMODULATOR and self.model is None:
            raise ConfigurationError("neuromodulator utility needs a model")

    def __call__(self, x, **kw) -> float:
        if self.kind is UtilityKind.FREQUENCY:
            return u_frequency(x)
        if self.kind is UtilityKind.INVARIANCE:
            return u_invariance(kw["x_prev"], x, kw["w"], kw["theta"],
                                kw.get("history", ()), self.gamma)
        if self.kind is UtilityKind.NEUROMODULATOR:
            return u_neuromodulator(self.model, x)
        return u_feedback(kw["w_fb"], x, kw.get("fb_mask"), kw.get("ff_mask"))
