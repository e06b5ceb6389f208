"""Declarative experiment configs: validation and the data they describe.

A config is one JSON object with the keys ``shape``, ``noise``,
``pipeline``, ``analysis``, ``seed`` and ``repetitions``.  Every field is
checked, and unknown keys are rejected, before anything is computed.

Example::

    {"shape": {"kind": "annulus", "r_in": 0.8, "r_out": 1.2},
     "noise": {"kind": "diameter_linkage", "count": 25},
     "pipeline": {"N": 1000, "n": 75, "k": 1, "K": 1000, "cutoff": 0.375},
     "analysis": {"method": "ks", "projection": "DB", "reference": "1x[0.25,0.375)"},
     "seed": 1, "repetitions": 20}
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mm_space
from .barcode import Barcode, parse_reference
from .filtration import DEFAULT_MAX_SIMPLICES

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config"]


class ConfigError(ValueError):
    """A config field is missing, malformed or unknown."""


# field name -> (type check, required)
_SHAPES = {
    "annulus": {"r_in": (float, False), "r_out": (float, False)},
    "two_circles": {},
    "sphere": {"radius": (float, False)},
    "torus": {"r": (float, False), "R": (float, False)},
    "box": {"bounds": (list, True)},
    "metric_circle": {"k": (int, True), "ell": (float, False), "cyclic_standard": (bool, False)},
    "file": {
        "path": (str, True),
        "format": (str, False),
        "skip_header": (bool, False),
        "density_k": (int, False),
        "keep_fraction": (float, False),
    },
}
_NOISES = {
    "none": {},
    "gaussian": {"sigma2": (float, True)},
    "uniform": {"fraction": (float, False), "count": (int, False), "bounds": (list, True)},
    "diameter_linkage": {"count": (int, False), "fraction": (float, False), "half_length": (float, False)},
}
_PIPELINE = {
    "N": (int, False),
    "n": (int, False),
    "k": (int, False),
    "K": (int, False),
    "cutoff": (float, True),
    "complex_kind": (str, False),
    "landmarks": (int, False),
    "replace": (bool, False),
    "reduced_h0": (bool, False),
    "max_simplices": (int, False),
}
_ANALYSIS = {
    "method": (str, True),
    "projection": (str, False),
    "reference": (str, False),
    "references": (list, False),
    "bins": (int, False),
    "alpha": (float, False),
    "eps": (float, False),
    "threshold": (float, False),
    "max_bars": (int, False),
    "m": (int, False),
    "trim": (float, False),
    "pair_count": (int, False),
    "on_d2": (bool, False),
    "compare": (dict, False),
    "ci_samples": (int, False),
}
_TOP = {"shape", "noise", "pipeline", "analysis", "seed", "repetitions"}

METHODS = (
    "ks",
    "chi2",
    "chi2_reference",
    "mass",
    "likelihood",
    "mhd",
    "trimmed_mhd",
    "hd",
    "gap",
    "long_bars",
    "median_ci",
)
COMPARE_KEYS = {"shape", "noise", "seed"}


def _check_fields(section: str, data, spec: dict) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object")
    for key in data:
        if key not in spec:
            raise ConfigError(f"{section}.{key}: unknown key (allowed: {', '.join(sorted(spec))})")
    out = {}
    for key, (typ, required) in spec.items():
        if key not in data or data[key] is None:
            if required:
                raise ConfigError(f"{section}.{key}: required")
            continue
        val = data[key]
        if typ is float and isinstance(val, (int, float)) and not isinstance(val, bool):
            val = float(val)
        elif typ is int and isinstance(val, int) and not isinstance(val, bool):
            pass
        elif not isinstance(val, typ) or (typ is not bool and isinstance(val, bool)):
            raise ConfigError(f"{section}.{key}: expected {typ.__name__}, got {val!r}")
        out[key] = val
    return out


def _kind(section: str, data, table: dict) -> tuple[str, dict]:
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object")
    kind = data.get("kind")
    if kind not in table:
        raise ConfigError(f"{section}.kind: unknown value {kind!r} (allowed: {', '.join(table)})")
    rest = {k: v for k, v in data.items() if k != "kind"}
    return kind, _check_fields(f"{section}", rest, table[kind])


def _check_bounds(section: str, bounds) -> None:
    try:
        mm_space._check_bounds(bounds)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}.bounds: {exc}") from None


def _positive(section: str, params: dict, *names: str) -> None:
    for name in names:
        if name in params and not params[name] > 0:
            raise ConfigError(f"{section}.{name}: must be positive")


def _validate_shape(data) -> tuple[str, dict]:
    kind, p = _kind("shape", data, _SHAPES)
    _positive("shape", p, "r_in", "r_out", "radius", "r", "R", "ell")
    if kind == "annulus" and p.get("r_in", 0.8) >= p.get("r_out", 1.2):
        raise ConfigError("shape.r_in: must be smaller than r_out")
    if kind == "torus" and p.get("r", 0.5) >= p.get("R", 1.0):
        raise ConfigError("shape.r: must be smaller than R")
    if kind == "box":
        _check_bounds("shape", p["bounds"])
    if kind == "metric_circle" and p["k"] < 3:
        raise ConfigError("shape.k: must be at least 3")
    if kind == "file":
        if p.get("format", "csv") not in ("csv", "json"):
            raise ConfigError("shape.format: must be 'csv' or 'json'")
        if not 0 < p.get("keep_fraction", 1.0) <= 1:
            raise ConfigError("shape.keep_fraction: must lie in (0, 1]")
        _positive("shape", p, "density_k")
    return kind, p


def _validate_noise(data) -> tuple[str, dict]:
    kind, p = _kind("noise", data, _NOISES)
    if kind == "gaussian" and p["sigma2"] < 0:
        raise ConfigError("noise.sigma2: must be nonnegative")
    if kind in ("uniform", "diameter_linkage"):
        if ("fraction" in p) == ("count" in p):
            raise ConfigError(f"noise: give exactly one of fraction or count for {kind}")
        if "fraction" in p and not 0 <= p["fraction"] <= 1:
            raise ConfigError("noise.fraction: must lie in [0, 1]")
        if "count" in p and p["count"] < 0:
            raise ConfigError("noise.count: must be nonnegative")
    if kind == "uniform":
        _check_bounds("noise", p["bounds"])
    return kind, p


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated config.  ``raw`` keeps the normalized JSON form."""

    shape_kind: str
    shape: dict
    noise_kind: str
    noise: dict
    pipeline: dict
    analysis: dict
    seed: int
    repetitions: int
    raw: dict

    @property
    def references(self) -> list[Barcode]:
        a = self.analysis
        if "references" in a:
            return [parse_reference(r) for r in a["references"]]
        if "reference" in a:
            return [parse_reference(a["reference"])]
        return []

    @property
    def reference(self) -> Barcode:
        refs = self.references
        if len(refs) != 1:
            raise ConfigError("analysis.reference: exactly one reference barcode is needed")
        return refs[0]

    def with_overrides(self, **sections) -> ExperimentConfig:
        raw = copy.deepcopy(self.raw)
        raw.update(copy.deepcopy(sections))
        return parse_config(raw)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)

    # -- data ------------------------------------------------------------------

    def is_point_cloud(self) -> bool:
        return self.shape_kind != "metric_circle"

    def sample_points(self, rng: np.random.Generator) -> np.ndarray:
        """Draw the shape, then apply the noise model."""
        if not self.is_point_cloud():
            raise ConfigError("shape.kind: metric_circle is not a point cloud")
        return self.apply_noise(self.base_points(rng), rng)

    def base_points(self, rng: np.random.Generator) -> np.ndarray:
        p, N = self.shape, self.pipeline.get("N")
        kind = self.shape_kind
        if kind == "annulus":
            return mm_space.sample_annulus(N, p.get("r_in", 0.8), p.get("r_out", 1.2), rng)
        if kind == "two_circles":
            return mm_space.sample_two_circles(N, rng)
        if kind == "sphere":
            return mm_space.sample_sphere(N, p.get("radius", 1.0), rng)
        if kind == "torus":
            return mm_space.sample_torus(N, p.get("r", 0.5), p.get("R", 1.0), rng)
        if kind == "box":
            return mm_space.sample_box(N, p["bounds"], rng)
        try:
            pts = mm_space.load_point_cloud(p["path"], p.get("format"), skip_header=p.get("skip_header", False))
        except ValueError as exc:
            raise ConfigError(f"shape.path: {exc}") from None
        if "density_k" in p:
            pts = mm_space.density_filter_knn(pts, p["density_k"], p.get("keep_fraction", 1.0))
        return pts

    def apply_noise(self, pts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        p, kind = self.noise, self.noise_kind
        if kind == "none":
            return np.array(pts, dtype=np.float64)
        if kind == "gaussian":
            return mm_space.add_gaussian_noise(pts, p["sigma2"], rng)
        if kind == "uniform":
            return mm_space.replace_uniform_noise(
                pts, p.get("fraction", 0.0), p["bounds"], rng, count=p.get("count")
            )
        count = p["count"] if "count" in p else int(round(p["fraction"] * len(pts)))
        return mm_space.add_diameter_linkage(pts, count, rng, p.get("half_length", 0.8))

    def space(self, rng: np.random.Generator) -> mm_space.FiniteMetricSpace:
        """The finite metric measure space the pipeline samples from."""
        if self.shape_kind == "metric_circle":
            p = self.shape
            return mm_space.metric_circle(p["k"], p.get("ell", 1.0), cyclic_standard=p.get("cyclic_standard", True))
        return mm_space.from_points(self.sample_points(rng))


def _validate_pipeline(data, shape_kind: str) -> dict:
    p = _check_fields("pipeline", data, _PIPELINE)
    p.setdefault("k", 1)
    p.setdefault("K", 1000)
    p.setdefault("complex_kind", "rips")
    p.setdefault("replace", True)
    p.setdefault("reduced_h0", False)
    p.setdefault("max_simplices", DEFAULT_MAX_SIMPLICES)
    if p["complex_kind"] not in ("rips", "witness"):
        raise ConfigError("pipeline.complex_kind: must be 'rips' or 'witness'")
    if shape_kind not in ("metric_circle", "file") and "N" not in p:
        raise ConfigError("pipeline.N: required for sampled shapes")
    for name in ("N", "n", "K", "landmarks", "max_simplices"):
        if name in p and p[name] < 1:
            raise ConfigError(f"pipeline.{name}: must be at least 1")
    if p["k"] < 0:
        raise ConfigError("pipeline.k: must be nonnegative")
    if not p["cutoff"] > 0:
        raise ConfigError("pipeline.cutoff: must be positive")
    if "N" in p and "n" in p and not p["replace"] and p["n"] > p["N"]:
        raise ConfigError("pipeline.n: exceeds N while sampling without replacement")
    return p


def _validate_analysis(data) -> dict:
    a = _check_fields("analysis", data if data is not None else {"method": "none"}, _ANALYSIS)
    if a["method"] not in METHODS + ("none",):
        raise ConfigError(f"analysis.method: unknown value {a['method']!r} (allowed: {', '.join(METHODS)})")
    if a.get("projection", "D2") not in ("D2", "DB"):
        raise ConfigError("analysis.projection: must be 'D2' or 'DB'")
    if "bins" in a and a["bins"] < 1:
        raise ConfigError("analysis.bins: must be positive")
    for name in ("alpha", "eps"):
        if name in a and not 0 < a[name] < 1:
            raise ConfigError(f"analysis.{name}: must lie in (0, 1)")
    if "trim" in a and not 0 < a["trim"] < 0.5:
        raise ConfigError("analysis.trim: must lie in (0, 0.5)")
    try:
        for text in a.get("references", []) + ([a["reference"]] if "reference" in a else []):
            if not isinstance(text, str):
                raise ValueError(f"expected a string, got {text!r}")
            parse_reference(text)
    except ValueError as exc:
        raise ConfigError(f"analysis.reference: {exc}") from None
    if "compare" in a:
        extra = set(a["compare"]) - COMPARE_KEYS
        if extra:
            raise ConfigError(f"analysis.compare.{sorted(extra)[0]}: unknown key")
        if "shape" in a["compare"]:
            _validate_shape(a["compare"]["shape"])
        if "noise" in a["compare"]:
            _validate_noise(a["compare"]["noise"])
    return a


def parse_config(data) -> ExperimentConfig:
    """Validate a config object; raises :class:`ConfigError` naming the bad field."""
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = set(data) - _TOP
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key (allowed: {', '.join(sorted(_TOP))})")
    if "shape" not in data:
        raise ConfigError("shape: required")
    if "pipeline" not in data:
        raise ConfigError("pipeline: required")
    shape_kind, shape = _validate_shape(data["shape"])
    noise_kind, noise = _validate_noise(data.get("noise", {"kind": "none"}))
    if noise_kind == "diameter_linkage" and shape_kind not in ("annulus", "two_circles", "box", "file"):
        raise ConfigError("noise.kind: diameter_linkage needs planar points")
    if noise_kind != "none" and shape_kind == "metric_circle":
        raise ConfigError("noise.kind: metric_circle takes no noise")
    pipeline = _validate_pipeline(data["pipeline"], shape_kind)
    analysis = _validate_analysis(data.get("analysis"))
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed: expected a nonnegative integer")
    reps = data.get("repetitions", 20)
    if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
        raise ConfigError("repetitions: expected a positive integer")
    raw = copy.deepcopy(data)
    raw.setdefault("noise", {"kind": "none"})
    raw.setdefault("seed", seed)
    raw.setdefault("repetitions", reps)
    return ExperimentConfig(shape_kind, shape, noise_kind, noise, pipeline, analysis, seed, reps, raw)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file (OSError / ConfigError on failure)."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    return parse_config(data)
