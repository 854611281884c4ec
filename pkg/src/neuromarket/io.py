"""Config files, environment overrides, weight snapshots, heatmaps and metric logs."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np
import yaml

from .experiments import ExperimentConfig

ENV_PREFIX = "NEUROMARKET"
SECTIONS = ("topology", "dynamics", "sleep", "environment")
SCALARS = ("task", "seeds", "duration", "warmup")


class ConfigError(ValueError):
    pass


def config_from_dict(data: dict | None) -> ExperimentConfig:
    """Build a config from the hierarchical mapping a config file parses to."""
    data = dict(data or {})
    unknown = set(data) - set(SECTIONS) - set(SCALARS) - {"snapshot"}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    kw = {k: data[k] for k in SCALARS if k in data}
    for section in SECTIONS:
        value = data.get(section) or {}
        if not isinstance(value, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        kw[section] = dict(value)
    snapshot = data.get("snapshot") or {}
    if not isinstance(snapshot, dict):
        raise ConfigError("section 'snapshot' must be a mapping")
    kw["snapshot_every"] = int(snapshot.get("every", 0))
    if "seeds" in kw:
        kw["seeds"] = parse_seeds(kw["seeds"])
    try:
        cfg = ExperimentConfig(**kw)
        cfg.topology_params()
        cfg.dynamics_config()
        cfg.sleep_config()
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {"task": cfg.task, "seeds": list(cfg.seeds), "duration": cfg.duration,
           "warmup": cfg.warmup, "snapshot": {"every": cfg.snapshot_every}}
    for section in SECTIONS:
        out[section] = dict(getattr(cfg, section))
    return out


def load_config(path, environ=None) -> ExperimentConfig:
    """Read a YAML config file, then apply ``NEUROMARKET_SECTION_KEY`` overrides."""
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as err:
            raise ConfigError(f"{path}: {err}") from err
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(apply_env_overrides(data or {}, environ))


def apply_env_overrides(data: dict, environ=None) -> dict:
    """Overlay variables like ``NEUROMARKET_DYNAMICS_DELTA=0.3`` onto ``data``.

    The part after the section name is the key, lower-cased; values are parsed
    as YAML scalars so numbers and booleans keep their types.  Top-level
    scalars use the bare name, e.g. ``NEUROMARKET_DURATION=2000``.
    """
    environ = os.environ if environ is None else environ
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    head = ENV_PREFIX + "_"
    for name, raw in sorted(environ.items()):
        if not name.startswith(head):
            continue
        rest = name[len(head):].lower()
        value = yaml.safe_load(raw) if raw != "" else None
        if rest in SCALARS:
            data[rest] = value
            continue
        section, _, key = rest.partition("_")
        if section not in SECTIONS + ("snapshot",) or not key:
            raise ConfigError(f"cannot place override {name}")
        data.setdefault(section, {})
        data[section] = dict(data[section] or {})
        data[section][key] = value
    return data


def parse_seeds(spec) -> list[int]:
    """``5`` means seeds 0..4; ``"3,7,9"`` or a list names them explicitly."""
    if isinstance(spec, bool):
        raise ConfigError("seeds must be a count or a list")
    if isinstance(spec, int):
        if spec < 0:
            raise ConfigError("seed count must be non-negative")
        return list(range(spec))
    if isinstance(spec, str):
        parts = [p for p in spec.replace(" ", "").split(",") if p]
        if len(parts) == 1 and "," not in spec:
            return parse_seeds(int(parts[0]))
        seeds = [int(p) for p in parts]
    else:
        seeds = [int(s) for s in spec]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    return seeds


# -- weight snapshots --------------------------------------------------------------


def write_weights_csv(path, weights: np.ndarray):
    """One row per target neuron; the header lists source indices."""
    W = np.asarray(weights, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target"] + [str(i) for i in range(W.shape[0])])
        for j in range(W.shape[1]):
            writer.writerow([j] + [repr(float(v)) for v in W[:, j]])


def read_weights_csv(path) -> np.ndarray:
    """Inverse of ``write_weights_csv``: returns the ``(n_pre, n_post)`` matrix."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    n_pre = len(rows[0]) - 1
    body = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    return body.T if body.size else np.zeros((n_pre, 0))


# -- heatmaps ----------------------------------------------------------------------


def write_heatmap(stem, matrix: np.ndarray) -> dict:
    """Write ``stem.pgm`` (8-bit grayscale), ``stem.csv`` and ``stem.range.txt``.

    The image spans the matrix's own min..max; the sidecar records both so the
    scaling is never implicit.  A constant matrix renders mid-gray.
    """
    M = np.asarray(matrix, dtype=float)
    stem = Path(stem)
    lo, hi = float(M.min()), float(M.max())
    if hi > lo:
        pixels = np.rint(255 * (M - lo) / (hi - lo)).astype(np.uint8)
    else:
        pixels = np.full(M.shape, 128, dtype=np.uint8)
    with open(stem.with_suffix(".pgm"), "wb") as fh:
        fh.write(f"P5\n{M.shape[1]} {M.shape[0]}\n255\n".encode())
        fh.write(pixels.tobytes())
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in M])
    with open(stem.with_suffix(".range.txt"), "w") as fh:
        fh.write(f"min {lo!r}\nmax {hi!r}\n")
    return {"min": lo, "max": hi}


def read_heatmap_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)], dtype=float)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, dims, maxval, body = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    width, height = (int(v) for v in dims.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


# -- logs --------------------------------------------------------------------------


def append_jsonl(path, record: dict):
    with open(path, "a") as fh:
        fh.write(json.dumps(record, default=_jsonable) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")
