"""Threshold neurons scored as regularized proper scoring rules.

A neuron with weights ``w`` sees a binary state ``x`` and spikes when its
margin ``<w, x> - theta`` is strictly positive.  Its payment is

    score = mu(x) * (<w, x> - theta) * spike  -  A(w)

where ``A`` is one of three resource costs (l2, lH, l1).  Everything here is a
pure function of numpy arrays; an optional boolean ``mask`` marks which
synapses physically exist (entries outside the mask are forced to zero).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

EPS_W = 1e-12


class DimensionError(ValueError):
    pass


class DomainError(ValueError):
    pass


class Regularizer(str, Enum):
    L2 = "l2"
    LH = "lh"
    L1 = "l1"


@dataclass(frozen=True)
class ScoringConfig:
    regularizer: Regularizer = Regularizer.L2
    eta: float = 1.0
    theta: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "regularizer", Regularizer(self.regularizer))
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


def _pair(w, x):
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if w.shape != x.shape:
        raise DimensionError(f"weights {w.shape} and state {x.shape} differ")
    return w, x


def _mask(mask, n):
    if mask is None:
        return np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise DimensionError(f"mask {mask.shape} does not match {n} weights")
    return mask


def masked(w, mask):
    """Project ``w`` onto the synapses in ``mask`` (the rest become exactly 0)."""
    w = np.array(w, dtype=float)
    w[~_mask(mask, w.shape[-1])] = 0.0
    return w


def margin(w, x, theta):
    w, x = _pair(w, x)
    return float(w @ x) - theta


def activate(w, x, theta) -> int:
    """1 iff ``<w, x> - theta > 0``; the kink itself counts as silent."""
    return int(margin(w, x, theta) > 0)


def reward(x, w, mu, theta) -> float:
    m = margin(w, x, theta)
    return mu * m if m > 0 else 0.0


def _check_domain(cfg: ScoringConfig, w):
    if cfg.regularizer is Regularizer.L1 and (np.any(w < 0) or np.any(w > 1)):
        raise DomainError("l1 weights must lie in [0, 1]")
    if cfg.regularizer is Regularizer.LH and np.any(w < 0):
        raise DomainError("lH weights must be non-negative")


def synapse_costs(cfg: ScoringConfig, w, mask=None) -> np.ndarray:
    """Per-synapse resource cost; zero off the mask."""
    w = np.asarray(w, dtype=float)
    m = _mask(mask, w.shape[-1])
    wa = np.where(m, w, 0.0)
    _check_domain(cfg, wa[m])
    if cfg.regularizer is Regularizer.L2:
        cost = wa**2 / (2 * cfg.eta)
    elif cfg.regularizer is Regularizer.LH:
        wc = np.maximum(wa, EPS_W)
        cost = wc * np.log(wc) / cfg.eta
    else:
        cost = np.abs(wa) / cfg.eta
    return np.where(m, cost, 0.0)


def regularizer_cost(cfg: ScoringConfig, w, mask=None) -> float:
    return float(synapse_costs(cfg, w, mask).sum())


def score(x, w, mu, cfg: ScoringConfig, mask=None) -> float:
    w = masked(w, mask)
    return reward(x, w, mu, cfg.theta) - regularizer_cost(cfg, w, mask)


def synapse_scores(x, w, mu, cfg: ScoringConfig, mask=None) -> np.ndarray:
    """Split the neuron's score into one payment per active synapse.

    Synapse ``i`` is paid ``(w_i x_i - theta/K) * mu * spike - A(w_i)`` where
    ``K`` is the number of active synapses, so the payments sum to ``score``.
    Inactive synapses are paid nothing.
    """
    w = masked(w, mask)
    w, x = _pair(w, x)
    m = _mask(mask, w.size)
    k = max(int(m.sum()), 1)
    spike = activate(w, x, cfg.theta)
    pay = (w * x - cfg.theta / k) * mu * spike
    return np.where(m, pay, 0.0) - synapse_costs(cfg, w, m)


def penalty_gradient(cfg: ScoringConfig, w) -> np.ndarray:
    """Derivative of the resource cost, synapse by synapse."""
    w = np.asarray(w, dtype=float)
    if cfg.regularizer is Regularizer.L2:
        return w / cfg.eta
    if cfg.regularizer is Regularizer.LH:
        return (np.log(np.maximum(w, EPS_W)) + 1.0) / cfg.eta
    return np.full_like(w, 1.0 / cfg.eta)


def score_gradient(x, w, mu, cfg: ScoringConfig, mask=None, gate_penalty=False):
    """Gradient of ``score`` in ``w`` (non-spiking branch at the kink).

    With ``gate_penalty`` the whole update is spike-gated, which is the plain
    cospike rule without a decay between spikes.
    """
    w = masked(w, mask)
    w, x = _pair(w, x)
    m = _mask(mask, w.size)
    spike = activate(w, x, cfg.theta)
    g = mu * x * spike - penalty_gradient(cfg, w)
    if gate_penalty and not spike:
        g = np.zeros_like(w)
    return np.where(m, g, 0.0)


def project(cfg: ScoringConfig, w, mask=None) -> np.ndarray:
    """Clip weights back into the regularizer's feasible set (silently)."""
    w = np.asarray(w, dtype=float)
    if cfg.regularizer is Regularizer.L1:
        w = np.clip(w, 0.0, 1.0)
    elif cfg.regularizer is Regularizer.LH:
        w = np.maximum(w, EPS_W)
    return masked(w, mask)


def grad_update(cfg: ScoringConfig, w, x, mu, lr, mask=None, gate_penalty=False):
    """One online gradient-ascent step on ``score``; returns the new weights."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    g = score_gradient(x, w, mu, cfg, mask, gate_penalty)
    return project(cfg, masked(w, mask) + lr * g, mask)


def g_map(cfg: ScoringConfig, v) -> np.ndarray:
    """Link from (gated) expected utility per synapse to the optimal weight."""
    v = np.asarray(v, dtype=float)
    if cfg.regularizer is Regularizer.L2:
        return cfg.eta * v
    if cfg.regularizer is Regularizer.LH:
        return np.exp(cfg.eta * v - 1.0)
    # a tie eta*v == 1 maps to 0
    return (cfg.eta * v > 1.0).astype(float)


# -- Bregman construction ----------------------------------------------------

Func = Callable[[np.ndarray], float]
Grad = Callable[[np.ndarray], np.ndarray]


def bregman(F: Func, gradF: Grad, a, b) -> float:
    """``F(a) - F(b) - <gradF(b), a - b>``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"{a.shape} vs {b.shape}")
    return float(F(a) - F(b) - np.dot(gradF(b), a - b))


def proper_score_from_convex(F: Func, gradF: Grad, rho, x, w) -> float:
    """Score ``-D_F(rho(x), w) - F(rho(x))``, proper for the mean of ``rho``."""
    r = np.asarray(rho(x), dtype=float)
    return -bregman(F, gradF, r, w) - float(F(r))


def quadratic(eta: float = 1.0) -> tuple[Func, Grad]:
    """``F(v) = |v|^2 / (2 eta)`` and its gradient."""
    return (lambda v: float(np.dot(v, v)) / (2 * eta)), (lambda v: np.asarray(v) / eta)


def log_sum_exp(eta: float = 1.0) -> tuple[Func, Grad]:
    """``F(v) = eta * log sum exp(v / eta)`` and its gradient (softmax)."""

    def F(v):
        z = np.asarray(v, dtype=float) / eta
        top = z.max()
        return float(eta * (top + np.log(np.exp(z - top).sum())))

    def grad(v):
        z = np.asarray(v, dtype=float) / eta
        e = np.exp(z - z.max())
        return e / e.sum()

    return F, grad


def neg_entropy(eta: float = 1.0) -> tuple[Func, Grad]:
    """``F(v) = sum v log v / eta`` on the positive orthant, and its gradient."""

    def F(v):
        v = np.maximum(np.asarray(v, dtype=float), EPS_W)
        return float(np.sum(v * np.log(v)) / eta)

    def grad(v):
        v = np.maximum(np.asarray(v, dtype=float), EPS_W)
        return (np.log(v) + 1.0) / eta

    return F, grad
