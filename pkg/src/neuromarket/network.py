"""Tic-driven engine for layered networks of threshold neurons.

Each tic resolves layers in a fixed order.  A neuron integrates its
excitatory and inhibitory input into a leaky voltage, spikes when the voltage
exceeds the threshold and resets.  Feedback banks never drive voltage; they
only supply the feedback current that gates feedforward learning.

Weight matrices are stored ``(n_pre, n_post)`` so column ``j`` is the weight
vector of post-synaptic neuron ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .scoring import Regularizer, ScoringConfig, penalty_gradient, regularizer_cost

FF, FB, INH = "ff", "fb", "inh"
FEEDBACK_RULE, REWARD_RULE = "feedback", "reward"


class TopologyError(ValueError):
    pass


@dataclass
class DynamicsConfig:
    theta: float = 1.0
    delta: float = 0.05
    trace_decay: float = 0.95
    trace_increment: float = 0.4
    lr_ff: float = 0.01
    lr_fb: float = 0.01
    lr_m: float = 0.01
    m_window: int = 10
    use_trace: bool = True
    # per-tic regularizer penalty; None leaves regularization to sleep events
    penalty: Optional[ScoringConfig] = None
    gate_penalty: bool = False
    # per-layer overrides of theta and delta, e.g. {"M": 2.0}
    layer_theta: dict = field(default_factory=dict)
    layer_delta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.trace_decay < 1:
            raise ValueError("trace_decay must lie in (0, 1)")
        if self.m_window < 1:
            raise ValueError("m_window must be positive")

    def theta_of(self, layer) -> float:
        return self.layer_theta.get(layer, self.theta)

    def delta_of(self, layer) -> float:
        return self.layer_delta.get(layer, self.delta)


@dataclass
class SleepConfig:
    interval: int = 1000
    k: dict = field(default_factory=dict)  # (layer, bank) -> K, bank in {"ff", "fb"}
    feedback: bool = True
    positive_only: bool = False

    def __post_init__(self):
        if any(v < 1 for v in self.k.values()):
            raise ValueError("K must be at least 1")


@dataclass
class Projection:
    pre: str
    post: str
    weights: np.ndarray
    mask: np.ndarray
    kind: str = FF
    delay: int = 0
    rule: Optional[str] = None

    def __post_init__(self):
        if self.kind not in (FF, FB, INH):
            raise TopologyError(f"unknown projection kind {self.kind!r}")
        if self.delay < 0:
            raise TopologyError("delays must be non-negative")
        self.mask = np.asarray(self.mask, dtype=bool)
        self.weights = np.where(self.mask, np.asarray(self.weights, dtype=float), 0.0)

    @property
    def name(self) -> str:
        return f"{self.pre}->{self.post}:{self.kind}"

    @property
    def plastic(self) -> bool:
        return self.rule is not None


@dataclass
class Topology:
    """Layer sizes in resolution order, which layers are input/inhibitory, and projections."""

    layers: dict
    projections: list
    inputs: tuple = ("S",)
    inhibitory: tuple = ()

    def __post_init__(self):
        order = list(self.layers)
        for p in self.projections:
            if p.pre not in self.layers or p.post not in self.layers:
                raise TopologyError(f"{p.name}: unknown layer")
            if p.weights.shape != (self.layers[p.pre], self.layers[p.post]):
                raise TopologyError(f"{p.name}: weight shape {p.weights.shape}")
            if p.post in self.inputs and p.kind != FB:
                raise TopologyError(f"{p.name}: input layers take no drive")
            if p.plastic and (p.pre in self.inhibitory or p.post in self.inhibitory):
                raise TopologyError(f"{p.name}: synapses of inhibitory neurons are fixed")
            if p.kind in (FF, INH) and p.delay == 0 and order.index(p.pre) >= order.index(p.post):
                raise TopologyError(f"{p.name}: zero delay needs the source resolved first")
            if p.kind == INH and p.pre not in self.inhibitory:
                raise TopologyError(f"{p.name}: inhibition must come from an inhibitory layer")

    def incoming(self, layer, kind=None):
        return [p for p in self.projections if p.post == layer and (kind is None or p.kind == kind)]

    def get(self, pre, post, kind=FF) -> Projection:
        for p in self.projections:
            if (p.pre, p.post, p.kind) == (pre, post, kind):
                return p
        raise KeyError(f"{pre}->{post}:{kind}")

    @property
    def max_delay(self) -> int:
        return max((p.delay for p in self.projections), default=0)


# -- learning rules (pure) ----------------------------------------------------


def learn_ff(fb_current, x, post_activity, lr):
    """``lr * <w_fb, x> * x_i * trace_j`` for every synapse i -> j."""
    return lr * np.outer(x, np.asarray(fb_current) * np.asarray(post_activity))


def learn_fb(ff_current, theta, x_fb, post_activity, lr):
    """``lr * (<w_ff, x> - theta) * x_k * trace_j`` for every feedback synapse k -> j."""
    return lr * np.outer(x_fb, (np.asarray(ff_current) - theta) * np.asarray(post_activity))


def learn_m(reward, cospikes, lr):
    """``lr * reward * (cospike count)``."""
    return lr * reward * np.asarray(cospikes, dtype=float)


def agrel_update(w_fb_kj, x_k, x_i, x_j, f_delta, lr=1.0):
    """Attention-gated reinforcement update for synapse i -> j with feedback from k."""
    return lr * w_fb_kj * x_k * x_i * x_j * (1.0 - x_j) * f_delta


def top_k_binarize(weights, mask, k, positive_only=False):
    """Set the ``k`` largest masked weights of each column to 1, prune the rest.

    Ties are broken towards the lower row index.  A column with fewer than
    ``k`` masked synapses keeps all of them at 1.  With ``positive_only``
    synapses whose weight has fallen to zero are pruned even when fewer than
    ``k`` remain.
    """
    if positive_only:
        mask = mask & (weights > 0)
    W = np.where(mask, weights, -np.inf)
    n = W.shape[0]
    # stable sort on the negated weights keeps lower indices first among ties
    order = np.argsort(-W, axis=0, kind="stable")
    out = np.zeros_like(weights, dtype=float)
    cols = np.arange(W.shape[1])
    for r in range(min(k, n)):
        rows = order[r]
        keep = mask[rows, cols]
        out[rows[keep], cols[keep]] = 1.0
    return out


def feedback_score(w_ff, w_fb, x_ff, x_fb, theta, cfg: ScoringConfig | None = None) -> float:
    """``<w_fb, x> (<w_ff, x> - theta) 1_j - A(w)`` for one neuron."""
    ff = float(np.dot(w_ff, x_ff))
    spike = ff - theta > 0
    value = float(np.dot(w_fb, x_fb)) * (ff - theta) if spike else 0.0
    if cfg is not None:
        value -= regularizer_cost(cfg, np.concatenate([w_ff, w_fb]))
    return value


# -- engine --------------------------------------------------------------------


@dataclass
class SpikeReport:
    tic: int
    spikes: dict
    voltage: dict


class Network:
    def __init__(self, topology: Topology, dynamics: DynamicsConfig | None = None,
                 sleep: SleepConfig | None = None, learning: bool = True):
        self.topology = topology
        self.cfg = dynamics or DynamicsConfig()
        self.sleep = sleep
        self.learning = learning
        self.t = 0
        L = topology.layers
        self.voltage = {k: np.zeros(n) for k, n in L.items()}
        self.trace = {k: np.zeros(n) for k, n in L.items()}
        self.spikes = {k: np.zeros(n, dtype=bool) for k, n in L.items()}
        self.ff_current = {k: np.zeros(n) for k, n in L.items()}
        self.fb_current = {k: np.zeros(n) for k, n in L.items()}
        depth = topology.max_delay + 1
        self._hist = {k: np.zeros((depth, n), dtype=bool) for k, n in L.items()}
        self._in = {k: topology.incoming(k) for k in L}
        self._order = [k for k in L if k not in topology.inputs]
        self._reward_projs = [p for p in topology.projections if p.rule == REWARD_RULE]
        self._m_layers = sorted({p.post for p in self._reward_projs})
        w = self.cfg.m_window
        self._m_pre = {k: np.zeros((w, sum(L[p.pre] for p in self._reward_projs if p.post == k)))
                       for k in self._m_layers}
        self._m_post = {k: np.zeros((w, L[k])) for k in self._m_layers}
        self._m_tic = {k: np.full(w, -1, dtype=np.int64) for k in self._m_layers}
        self._last_event = {k: np.full(L[k], -1, dtype=np.int64) for k in self._m_layers}
        # deferred L1 depression per projection: (accumulated per column, settled per row)
        self._decay = {}
        pen = self.cfg.penalty
        if pen is not None and pen.regularizer is Regularizer.L1:
            for p in topology.projections:
                if p.rule == FEEDBACK_RULE:
                    n_pre, n_post = p.weights.shape
                    self._decay[p.name] = (np.zeros(n_post), np.zeros((n_pre, n_post)))

    # delivered spikes of ``layer`` as seen through a delay
    def delivered(self, layer, delay) -> np.ndarray:
        if delay == 0:
            return self.spikes[layer]
        return self._hist[layer][(self.t - delay) % len(self._hist[layer])]

    def _current(self, proj: Projection) -> np.ndarray:
        x = self.delivered(proj.pre, proj.delay)
        idx = np.flatnonzero(x)
        if idx.size == 0:
            return np.zeros(proj.weights.shape[1])
        if proj.name in self._decay:
            self._settle(proj, idx)
        return proj.weights[idx].sum(0)

    def tic(self, external: dict | np.ndarray) -> SpikeReport:
        topo, cfg = self.topology, self.cfg
        if not isinstance(external, dict):
            external = {topo.inputs[0]: external}
        for name in topo.inputs:
            x = np.asarray(external.get(name, np.zeros(topo.layers[name])), dtype=bool).ravel()
            if x.shape != (topo.layers[name],):
                raise ValueError(f"input for {name} has shape {x.shape}")
            self.spikes[name] = x
        # integrate and threshold, layer by layer
        for name in self._order:
            ff = np.zeros(topo.layers[name])
            inh = np.zeros(topo.layers[name])
            for p in self._in[name]:
                if p.kind == FF:
                    ff += self._current(p)
                elif p.kind == INH:
                    inh += self._current(p)
            self.ff_current[name] = ff
            v = np.maximum(self.voltage[name] + ff + inh - cfg.delta_of(name), 0.0)
            s = v > cfg.theta_of(name)
            v[s] = 0.0
            self.voltage[name] = v
            self.spikes[name] = s
        # traces include this tic's spikes
        for name, s in self.spikes.items():
            self.trace[name] = cfg.trace_decay * (self.trace[name] + cfg.trace_increment * s)
        for name in self._order:
            fb = np.zeros(topo.layers[name])
            for p in self._in[name]:
                if p.kind == FB:
                    fb += self._current(p)
            self.fb_current[name] = fb
        if self.learning:
            self._learn()
        self._record_m()
        for name, s in self.spikes.items():
            self._hist[name][self.t % len(self._hist[name])] = s
        report = SpikeReport(self.t, {k: v.copy() for k, v in self.spikes.items()},
                             {k: v.copy() for k, v in self.voltage.items()})
        self.t += 1
        if self.learning and self.sleep and self.sleep.interval and self.t % self.sleep.interval == 0:
            self.sleep_regularize()
        return report

    def _post_activity(self, layer):
        if self.cfg.use_trace:
            return self.trace[layer]
        return self.spikes[layer].astype(float)

    def _learn(self):
        cfg = self.cfg
        for p in self.topology.projections:
            if p.rule != FEEDBACK_RULE:
                continue
            act = self._post_activity(p.post)
            x = self.delivered(p.pre, p.delay)
            lr = cfg.lr_ff if p.kind == FF else cfg.lr_fb
            if p.kind == FF:
                drive = self.fb_current[p.post] * act
            else:
                drive = (self.ff_current[p.post] - cfg.theta_of(p.post)) * act
            if cfg.penalty is None:
                # only rows with a presynaptic spike can change
                rows = np.flatnonzero(x)
                cols = np.flatnonzero(drive)
                if rows.size == 0 or cols.size == 0:
                    continue
                self._apply_block(p, rows, cols, lr * np.outer(np.ones(rows.size), drive[cols]))
            elif p.name in self._decay:
                self._learn_lazy(p, x, lr, drive, act)
            else:
                xf = x.astype(float)
                dw = lr * np.outer(xf, drive)
                pen = lr * penalty_gradient(cfg.penalty, p.weights) * p.mask
                dw -= pen * act if cfg.gate_penalty else pen
                self._apply(p, dw)

    # L1 depression is the same for every synapse of a column, so it can be
    # accumulated per column and settled on a row only when that row is read
    # or potentiated.  Clipping at 0 commutes with a monotone decrease, which
    # keeps the deferred result equal to the per-tic one.
    def _settle(self, p: Projection, rows=None):
        total, paid = self._decay[p.name]
        if rows is None:
            p.weights = np.where(p.mask, np.maximum(p.weights - (total - paid), 0.0), 0.0)
            paid[:] = total
        elif rows.size:
            owed = total - paid[rows]
            p.weights[rows] = np.where(p.mask[rows], np.maximum(p.weights[rows] - owed, 0.0), 0.0)
            paid[rows] = total

    def _learn_lazy(self, p: Projection, x, lr, drive, act):
        cfg = self.cfg
        total, paid = self._decay[p.name]
        step = lr / cfg.penalty.eta * (act if cfg.gate_penalty else np.ones_like(act))
        rows = np.flatnonzero(x)
        if rows.size:
            self._settle(p, rows)
            w = p.weights[rows] + lr * drive - step
            p.weights[rows] = np.where(p.mask[rows], np.clip(w, 0.0, 1.0), 0.0)
        total += step
        paid[rows] = total

    def sync(self):
        """Settle all deferred depression so ``weights`` hold current values."""
        for p in self.topology.projections:
            if p.name in self._decay:
                self._settle(p)

    def _bounded(self, w):
        if self.cfg.penalty is None or self.cfg.penalty.regularizer is Regularizer.L1:
            return np.clip(w, 0.0, 1.0)
        return w

    def _apply(self, p: Projection, dw):
        p.weights = np.where(p.mask, self._bounded(p.weights + dw), 0.0)

    def _apply_block(self, p: Projection, rows, cols, dw):
        ix = np.ix_(rows, cols)
        p.weights[ix] = np.where(p.mask[ix], self._bounded(p.weights[ix] + dw), 0.0)

    def _record_m(self):
        slot = self.t % self.cfg.m_window
        for layer in self._m_layers:
            pre = [self.delivered(p.pre, p.delay) for p in self._reward_projs if p.post == layer]
            self._m_pre[layer][slot] = np.concatenate(pre)
            self._m_post[layer][slot] = self.spikes[layer]
            self._m_tic[layer][slot] = self.t

    def deliver_reward(self, layer: str, neurons, reward: float):
        """Neuromodulatory event for ``neurons`` of ``layer`` on the current tic.

        Each neuron's synapses move by ``lr_m * reward * cospikes``, counting
        cospikes since that neuron's previous event, at most ``m_window`` tics.
        Call after ``tic`` and before the next one.
        """
        neurons = np.atleast_1d(np.asarray(neurons, dtype=int))
        if not self.learning or neurons.size == 0 or layer not in self._m_layers:
            return
        now = self.t - 1
        tics = self._m_tic[layer]
        last = self._last_event[layer]
        for since in np.unique(last[neurons]):
            group = neurons[last[neurons] == since]
            valid = (tics > since) & (tics >= 0) & (tics > now - self.cfg.m_window)
            counts = self._m_pre[layer][valid].T @ self._m_post[layer][valid][:, group]
            dw = learn_m(reward, counts, self.cfg.lr_m)
            start = 0
            for p in self._reward_projs:
                if p.post != layer:
                    continue
                n = p.weights.shape[0]
                self._apply_block(p, np.arange(n), group, dw[start:start + n])
                start += n
        last[neurons] = now

    def sleep_regularize(self, layers=None) -> dict:
        """Binarize each plastic bank: top-K synapses per neuron to 1, the rest to 0."""
        self.sync()
        report = {}
        kinds = (FF, FB) if (self.sleep is None or self.sleep.feedback) else (FF,)
        ks = self.sleep.k if self.sleep else {}
        for layer in layers or self._order:
            for kind in kinds:
                projs = [p for p in self.topology.incoming(layer, kind) if p.plastic]
                k = ks.get((layer, kind))
                if not projs or k is None:
                    continue
                W = np.vstack([p.weights for p in projs])
                M = np.vstack([p.mask for p in projs])
                B = top_k_binarize(W, M, k, self.sleep.positive_only if self.sleep else False)
                start = 0
                for p in projs:
                    n = p.weights.shape[0]
                    p.weights = B[start:start + n]
                    start += n
                report[(layer, kind)] = int(B.sum())
        return report

    def weights(self, pre, post, kind=FF) -> np.ndarray:
        self.sync()
        return self.topology.get(pre, post, kind).weights

    def snapshot(self):
        """Global ``(N, N)`` weight matrix (row = source) and spike vector over all layers.

        Feedback banks are omitted: a feedback weight is an input to the
        neuron, not a use of the neuron's output.
        """
        self.sync()
        offs, n = {}, 0
        for k, size in self.topology.layers.items():
            offs[k] = n
            n += size
        W = np.zeros((n, n))
        for p in self.topology.projections:
            if p.kind == FB:
                continue
            a, b = offs[p.pre], offs[p.post]
            W[a:a + p.weights.shape[0], b:b + p.weights.shape[1]] = p.weights
        x = np.concatenate([self.spikes[k] for k in self.topology.layers]).astype(float)
        return W, x, offs

