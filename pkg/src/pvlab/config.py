"""Experiment configuration: flat JSON documents, validated field by field.

Every run materializes all defaults into a resolved config and writes it
next to the artifacts, so an output directory always records exactly what
produced it. Validation failures name the offending field.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .estimator import DEFAULT_EPSILON
from .geometry import ConvexBody

SHAPES = ("ball", "box", "ellipse", "polygon")
ESTIMATORS = ("mc", "exact2d")
SCAN_MODES = ("diameter", "ray")

DEFAULT_SMALL_BODY_RADII = (0.3, 0.1, 0.03, 0.017, 0.01, 0.0055, 0.003)

# every key a config document may carry
_KNOWN_KEYS = {
    "shape", "dim", "center", "radius", "half_widths", "semi_axes",
    "vertices", "lambda", "replications", "seed", "estimator", "n_query",
    "stratified", "epsilon", "threads", "out", "n_scan", "scan_mode",
    "n_outer", "n_pairs", "radii", "dump_geometry",
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config.{field}: {message}")
        self.field = field


def load_config(path) -> dict:
    """Read a JSON config file, mapping I/O and syntax problems to
    ConfigError so the CLI can report them uniformly."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be a JSON object")
    return data


def _as_int(data, key, default=None, minimum=None, maximum=None):
    if key not in data or data[key] is None:
        if default is None and key in ("dim", "replications", "seed"):
            raise ConfigError(key, "required field is missing")
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigError(key, f"must be <= {maximum}, got {v}")
    return v


def _as_float(data, key, default=None, positive=False, maximum=None):
    if key not in data or data[key] is None:
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"must be a number, got {v!r}")
    v = float(v)
    if positive and not v > 0:
        raise ConfigError(key, f"must be > 0, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigError(key, f"must be <= {maximum}, got {v}")
    return v


def _as_bool(data, key, default):
    if key not in data or data[key] is None:
        return default
    v = data[key]
    if not isinstance(v, bool):
        raise ConfigError(key, f"must be true or false, got {v!r}")
    return v


def _as_choice(data, key, choices, default=None):
    if key not in data or data[key] is None:
        if default is None:
            raise ConfigError(key, "required field is missing")
        return default
    v = data[key]
    if v not in choices:
        raise ConfigError(key, f"must be one of {list(choices)}, got {v!r}")
    return v


def _as_vector(data, key, length, default=None, positive=False):
    if key not in data or data[key] is None:
        if default is None:
            raise ConfigError(key, "required field is missing")
        return default
    v = data[key]
    if not isinstance(v, (list, tuple)) or len(v) != length:
        raise ConfigError(key, f"must be a list of {length} numbers, got {v!r}")
    out = []
    for i, item in enumerate(v):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{key}[{i}]", f"must be a number, got {item!r}")
        if positive and not item > 0:
            raise ConfigError(f"{key}[{i}]", f"must be > 0, got {item}")
        out.append(float(item))
    return tuple(out)


def _as_positive_list(data, key, default=None):
    if key not in data or data[key] is None:
        if default is None:
            raise ConfigError(key, "required field is missing")
        return default
    v = data[key]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, (list, tuple)) or len(v) == 0:
        raise ConfigError(key, f"must be a positive number or non-empty list, got {v!r}")
    out = []
    for i, item in enumerate(v):
        if isinstance(item, bool) or not isinstance(item, (int, float)) or not item > 0:
            raise ConfigError(f"{key}[{i}]", f"must be > 0, got {item!r}")
        out.append(float(item))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    shape: str
    dim: int
    center: tuple
    radius: float | None
    half_widths: tuple | None
    semi_axes: tuple | None
    vertices: tuple | None
    lams: tuple
    replications: int
    seed: int
    estimator: str
    n_query: int | None
    stratified: bool
    epsilon: float
    threads: int
    out: str
    n_scan: int
    scan_mode: str
    n_outer: int
    n_pairs: int
    radii: tuple
    dump_geometry: bool

    def body(self) -> ConvexBody:
        center = np.asarray(self.center)
        if self.shape == "ball":
            return ConvexBody.ball(center, self.radius)
        if self.shape == "box":
            return ConvexBody.box(center, np.asarray(self.half_widths))
        if self.shape == "ellipse":
            return ConvexBody.ellipse(center, np.asarray(self.semi_axes))
        return ConvexBody.polygon(np.asarray(self.vertices))

    def resolved(self) -> dict:
        """JSON-ready echo with every default materialized."""
        out = {"shape": self.shape, "dim": self.dim,
               "center": list(self.center)}
        if self.shape == "ball":
            out["radius"] = self.radius
        elif self.shape == "box":
            out["half_widths"] = list(self.half_widths)
        elif self.shape == "ellipse":
            out["semi_axes"] = list(self.semi_axes)
        else:
            out["vertices"] = [list(v) for v in self.vertices]
        out.update({
            "lambda": list(self.lams),
            "replications": self.replications,
            "seed": self.seed,
            "estimator": self.estimator,
            "n_query": self.n_query,
            "stratified": self.stratified,
            "epsilon": self.epsilon,
            "threads": self.threads,
            "out": self.out,
            "n_scan": self.n_scan,
            "scan_mode": self.scan_mode,
            "n_outer": self.n_outer,
            "n_pairs": self.n_pairs,
            "radii": list(self.radii),
            "dump_geometry": self.dump_geometry,
        })
        return out


def parse_config(data: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a config document (plus CLI overrides) into an
    ExperimentConfig; raises ConfigError naming the first offending field."""
    merged = dict(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    for key in merged:
        if key not in _KNOWN_KEYS:
            raise ConfigError(key, "unknown field")

    shape = _as_choice(merged, "shape", SHAPES)
    dim = _as_int(merged, "dim", minimum=2)
    if shape in ("ellipse", "polygon") and dim != 2:
        raise ConfigError("shape", f"{shape} with dim {dim} is an unsupported combination")

    center = _as_vector(merged, "center", dim, default=tuple([0.0] * dim))
    radius = half_widths = semi_axes = vertices = None
    if shape == "ball":
        radius = _as_float(merged, "radius", positive=True)
        if radius is None:
            raise ConfigError("radius", "required for shape \"ball\"")
    elif shape == "box":
        half_widths = _as_vector(merged, "half_widths", dim, positive=True)
    elif shape == "ellipse":
        semi_axes = _as_vector(merged, "semi_axes", 2, positive=True)
    else:
        raw = merged.get("vertices")
        if not isinstance(raw, (list, tuple)) or len(raw) < 3:
            raise ConfigError("vertices", "must be a list of at least 3 [x, y] points")
        vertices = tuple(_as_vector({"v": v}, "v", 2) for v in raw)
        try:
            ConvexBody.polygon(np.asarray(vertices))
        except ValueError as exc:
            raise ConfigError("vertices", str(exc)) from exc

    lams = _as_positive_list(merged, "lambda")
    replications = _as_int(merged, "replications", minimum=1)
    seed = _as_int(merged, "seed", minimum=0, maximum=2 ** 64 - 1)
    est = _as_choice(merged, "estimator", ESTIMATORS, default="mc")
    if est == "exact2d" and dim != 2:
        raise ConfigError("estimator", f"exact2d with dim {dim} is an unsupported combination")
    n_query = _as_int(merged, "n_query", minimum=1)
    stratified = _as_bool(merged, "stratified", False)
    epsilon = _as_float(merged, "epsilon", default=DEFAULT_EPSILON,
                        positive=True, maximum=0.1)
    threads = _as_int(merged, "threads", default=os.cpu_count() or 1, minimum=1)
    out = merged.get("out", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("out", f"must be a non-empty path, got {out!r}")
    n_scan = _as_int(merged, "n_scan", default=40, minimum=2)
    scan_mode = _as_choice(merged, "scan_mode", SCAN_MODES, default="diameter")
    n_outer = _as_int(merged, "n_outer", default=400, minimum=2)
    n_pairs = _as_int(merged, "n_pairs", default=20, minimum=1)
    radii = _as_positive_list(merged, "radii", default=DEFAULT_SMALL_BODY_RADII)
    dump_geometry = _as_bool(merged, "dump_geometry", False)

    cfg = ExperimentConfig(shape, dim, center, radius, half_widths, semi_axes,
                           vertices, lams, replications, seed, est, n_query,
                           stratified, epsilon, threads, out, n_scan,
                           scan_mode, n_outer, n_pairs, radii, dump_geometry)
    # structural validation the field checks cannot see (degenerate geometry)
    try:
        cfg.body()
    except ValueError as exc:
        raise ConfigError("shape", str(exc)) from exc
    return cfg
