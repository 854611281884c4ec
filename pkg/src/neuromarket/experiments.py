"""Network builders for the two tasks and the coupled tic loop."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .environments import N_AREAS, ActuatorBank, FoveatorWorld, Metrics, TrackerWorld
from .network import (
    FB,
    FEEDBACK_RULE,
    FF,
    INH,
    REWARD_RULE,
    DynamicsConfig,
    Network,
    Projection,
    SleepConfig,
    Topology,
    top_k_binarize,
)

TOPOLOGY_DEFAULTS = {
    "tracker": dict(grid=20, v=100, d=100, inh=100, delay=3),
    "foveator": dict(grid=20, v=100, d=0, inh=50, delay=3),
}
COMMON_TOPOLOGY = dict(
    areas=N_AREAS, per_area=10,
    ff_density=1.0, motor_density=1.0, fb_density=1.0,
    inh_in_density=0.1, inh_in_weight=1.0, inh_mid_density=0.0, inh_m_density=0.0, inh_fanout=0.1, w_inh=0.5,
    init_low=0.0, init_high=0.2, init_binarize=True,
    feedback_plastic=True,
)


@dataclass
class ExperimentConfig:
    task: str = "tracker"
    topology: dict = field(default_factory=dict)
    dynamics: dict = field(default_factory=dict)
    sleep: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    duration: int = 50_000
    warmup: int = 10_000
    snapshot_every: int = 0

    def __post_init__(self):
        if self.task not in TOPOLOGY_DEFAULTS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.duration < 0 or self.warmup < 0:
            raise ValueError("duration and warmup must be non-negative")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")

    def topology_params(self) -> dict:
        params = {**COMMON_TOPOLOGY, **TOPOLOGY_DEFAULTS[self.task], **self.topology}
        unknown = set(params) - set(COMMON_TOPOLOGY) - set(TOPOLOGY_DEFAULTS[self.task])
        if unknown:
            raise ValueError(f"unknown topology keys {sorted(unknown)}")
        return params

    def dynamics_config(self) -> DynamicsConfig:
        return DynamicsConfig(**{**DYNAMICS_DEFAULTS, **self.dynamics})

    def sleep_config(self) -> SleepConfig:
        d = {**SLEEP_DEFAULTS, **self.sleep}
        k = {("V", "ff"): d.pop("k_ff"), ("D", "ff"): d.pop("k_ff_d", None),
             ("V", "fb"): d.pop("k_fb"), ("D", "fb"): d.pop("k_fb_d", None),
             ("M", "ff"): d.pop("k_m")}
        k[("D", "ff")] = k[("D", "ff")] or k[("V", "ff")]
        k[("D", "fb")] = k[("D", "fb")] or k[("V", "fb")]
        return SleepConfig(interval=d.pop("interval"), k=k, feedback=d.pop("feedback"), **d)

    def replace(self, **changes) -> "ExperimentConfig":
        new = copy.deepcopy(self)
        for key, value in changes.items():
            if "." in key:
                section, name = key.split(".", 1)
                getattr(new, section)[name] = value
            else:
                setattr(new, key, value)
        new.__post_init__()
        return new


DYNAMICS_DEFAULTS = dict(theta=1.0, delta=0.05, lr_ff=0.01, lr_fb=0.01, lr_m=0.01, m_window=10)
SLEEP_DEFAULTS = dict(interval=1000, k_ff=20, k_fb=5, k_m=15, feedback=True)


def _uniform(rng, shape, p):
    lo, hi = p["init_low"], p["init_high"]
    return rng.uniform(lo, hi, size=shape)


def _mask(rng, shape, density):
    if density >= 1:
        return np.ones(shape, dtype=bool)
    return rng.random(shape) < density


def build_network(cfg: ExperimentConfig, rng: np.random.Generator) -> Network:
    """Sensory grid S, intermediate V (and delayed D), inhibitory INH, motor M."""
    p = cfg.topology_params()
    n_s = p["grid"] ** 2
    n_m = p["areas"] * p["per_area"]
    mids = ["V"] + (["D"] if p["d"] else [])
    layers = {"S": n_s, "V": p["v"]}
    if p["d"]:
        layers["D"] = p["d"]
    layers["INH"] = p["inh"]
    layers["M"] = n_m
    mid_rule = FEEDBACK_RULE if p["feedback_plastic"] else None
    projs = []

    def plastic(pre, post, kind, density, rule, delay=0):
        shape = (layers[pre], layers[post])
        mask = _mask(rng, shape, density)
        projs.append(Projection(pre, post, _uniform(rng, shape, p) * mask, mask, kind, delay, rule))

    for mid in mids:
        plastic("S", mid, FF, p["ff_density"], mid_rule, p["delay"] if mid == "D" else 0)
    for mid in mids:
        plastic(mid, "M", FF, p["motor_density"], REWARD_RULE)
    for mid in mids:
        plastic("M", mid, FB, p["fb_density"], mid_rule)
    # inhibition: fixed weights, sparse random fan-in from S and fan-out to everything else
    shape = (n_s, p["inh"])
    mask = _mask(rng, shape, p["inh_in_density"])
    projs.append(Projection("S", "INH", mask * p["inh_in_weight"], mask, FF))
    # optional activity-dependent drive from the excitatory layers
    for source, density, delay in [(m, p["inh_mid_density"], 0) for m in mids] + [("M", p["inh_m_density"], 1)]:
        if density > 0:
            mask = _mask(rng, (layers[source], p["inh"]), density)
            projs.append(Projection(source, "INH", mask * p["inh_in_weight"], mask, FF, delay))
    for target in mids + ["M"]:
        shape = (p["inh"], layers[target])
        mask = _mask(rng, shape, p["inh_fanout"])
        projs.append(Projection("INH", target, -p["w_inh"] * mask, mask, INH, delay=1))
    topo = Topology(layers, projs, inputs=("S",), inhibitory=("INH",))
    sleep = cfg.sleep_config()
    net = Network(topo, cfg.dynamics_config(), sleep)
    if p["init_binarize"]:
        # a sleep event before the first tic: K-sparse binary weights per neuron,
        # counted across every excitatory bank of a kind, frozen banks included
        for layer in mids + ["M"]:
            for kind in (FF, FB):
                k = sleep.k.get((layer, kind))
                projs = [q for q in topo.incoming(layer, kind) if q.pre not in topo.inhibitory]
                if k is None or not projs:
                    continue
                B = top_k_binarize(np.vstack([q.weights for q in projs]),
                                   np.vstack([q.mask for q in projs]), k)
                start = 0
                for q in projs:
                    n = q.weights.shape[0]
                    q.weights = B[start:start + n]
                    start += n
    return net


def make_world(cfg: ExperimentConfig, rng):
    if cfg.task == "tracker":
        return TrackerWorld(rng, size=cfg.topology_params()["grid"], **cfg.environment)
    return FoveatorWorld(rng, size=cfg.topology_params()["grid"], **cfg.environment)


@dataclass
class RunResult:
    seed: int
    metrics: Metrics
    network: Network
    snapshots: list = field(default_factory=list)


def run_experiment(cfg: ExperimentConfig, seed: int, stats=None, callback=None) -> RunResult:
    """Couple one network to its world for ``cfg.duration`` tics.

    Metrics count engagement events after ``cfg.warmup`` tics.  ``stats`` (a
    ``CospikeStats`` over V x M) is fed V/M cospikes after warmup when given.
    """
    rng = np.random.default_rng(seed)
    net = build_network(cfg, rng)
    world = make_world(cfg, rng)
    bank = ActuatorBank(N_AREAS, cfg.topology_params()["per_area"])
    metrics = Metrics()
    result = RunResult(seed, metrics, net)
    frame = world.render()
    for t in range(cfg.duration):
        rep = net.tic(frame.ravel())
        engaged = bank.update(rep.spikes["M"])
        frame, rewards = world.step(engaged)
        utility = np.zeros(net.topology.layers["M"])
        for area, r in rewards.items():
            net.deliver_reward("M", bank.neurons(area), r)
            utility[bank.neurons(area)] = r
        if t >= cfg.warmup:
            metrics.record(rewards)
            if stats is not None:
                stats.update(rep.spikes["V"], rep.spikes["M"], utility, net.ff_current["V"])
        if cfg.snapshot_every and (t + 1) % cfg.snapshot_every == 0:
            result.snapshots.append((t + 1, weight_banks(net)))
        if callback is not None:
            callback(t, net, world, rewards)
    return result


def weight_banks(net: Network) -> dict:
    net.sync()
    return {p.name: p.weights.copy() for p in net.topology.projections}


def path_average_weights(net: Network, via: str, area: int, direction: str = "ff",
                         source: str = "S", per_area: int = 10) -> np.ndarray:
    """Mean over paths source -> via -> area (ff) or source -> via <- area (fb).

    Entry ``s`` is ``mean_{v, m} w[s, v] * w[v, m]`` (or ``w[m, v]`` for fb)
    over all via-neurons v and neurons m of the motor area.
    """
    layers = net.topology.layers
    for name in (via, source):
        if name not in layers:
            raise KeyError(f"unknown layer {name!r}")
    first = net.weights(source, via, FF)
    m = slice(area * per_area, (area + 1) * per_area)
    if direction == "ff":
        second = net.weights(via, "M", FF)[:, m]
    elif direction == "fb":
        second = net.weights("M", via, FB)[m, :].T
    else:
        raise ValueError("direction must be 'ff' or 'fb'")
    avg = first @ second.sum(1) / (first.shape[1] * second.shape[1])
    side = int(round(np.sqrt(layers[source])))
    return avg.reshape(side, side)
