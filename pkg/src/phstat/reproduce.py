"""Re-run the synthetic experiments from the checked-in configs.

Each experiment lives in ``phstat/experiments/<id>.json`` and holds one
or more *parts*.  A part is an :class:`~phstat.config.ExperimentConfig`
plus a list of noise *levels* and the reference table to compare with.
Three runners cover all experiments:

``comparison``
    Per repetition, draw a base point cloud, estimate the barcode law of
    it and of a noisy copy, and test D2 (and D_B, given a reference) for
    equality with KS and chi-squared.  Cells are rejection fractions.
``long_bars``
    Histogram of the number of bars longer than a threshold.
``mhd``
    Median and median confidence interval of d_B(m x [a, b), -).

All randomness derives from the master seed through fixed stream keys,
so a run is reproducible bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .barcode import long_bar_count, parse_reference
from .config import ConfigError, ExperimentConfig, parse_config
from .inference import (
    LEVELS,
    InsufficientData,
    binomial_tail,
    chi2_histogram,
    ks_two_sample,
    median_confidence_interval,
)
from .mm_space import from_points
from .stats import (
    BarcodeDistribution,
    distance_distribution_D2,
    distance_distribution_DB,
    phi_estimate,
    subsample_stream,
)

__all__ = ["EXPERIMENT_IDS", "Experiment", "load_experiment", "reproduce", "ReproductionResult"]

log = logging.getLogger(__name__)

RUNNERS = ("comparison", "long_bars", "mhd")
_PART_KEYS = {"label", "config", "levels", "reference", "degrees"}
_TOP_KEYS = {"id", "title", "runner", "parts", "tolerance", "notes"}


def _experiment_files() -> dict[str, str]:
    root = resources.files("phstat") / "experiments"
    out = {}
    for entry in root.iterdir():
        if entry.name.endswith(".json"):
            out[entry.name[:-5]] = entry.read_text()
    return dict(sorted(out.items()))


EXPERIMENT_IDS = tuple(_experiment_files())


@dataclass(frozen=True)
class Level:
    label: str
    noise: dict


@dataclass(frozen=True)
class Part:
    label: str
    config: ExperimentConfig
    levels: tuple[Level, ...]
    reference: dict
    degrees: tuple[int, ...]


@dataclass(frozen=True)
class Experiment:
    id: str
    title: str
    runner: str
    parts: tuple[Part, ...]
    tolerance: float


def parse_experiment(data: dict) -> Experiment:
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown key")
    if data.get("runner") not in RUNNERS:
        raise ConfigError(f"runner: must be one of {', '.join(RUNNERS)}")
    parts = []
    for i, p in enumerate(data.get("parts", [])):
        extra = set(p) - _PART_KEYS
        if extra:
            raise ConfigError(f"parts[{i}].{sorted(extra)[0]}: unknown key")
        cfg = parse_config(p["config"])
        levels = []
        for lv in p.get("levels", [{"label": "none", "noise": {"kind": "none"}}]):
            cfg.with_overrides(noise=lv["noise"])  # validates the noise spec
            levels.append(Level(str(lv["label"]), lv["noise"]))
        degrees = tuple(p.get("degrees", [cfg.pipeline["k"]]))
        parts.append(Part(str(p.get("label", i)), cfg, tuple(levels), p.get("reference", {}), degrees))
    if not parts:
        raise ConfigError("parts: at least one part is required")
    return Experiment(data["id"], data.get("title", ""), data["runner"], tuple(parts), float(data.get("tolerance", 0.2)))


def load_experiment(experiment_id: str) -> Experiment:
    files = _experiment_files()
    if experiment_id not in files:
        raise KeyError(f"unknown experiment {experiment_id!r}; valid ids: {', '.join(files)}")
    return parse_experiment(json.loads(files[experiment_id]))


@dataclass
class ReproductionResult:
    """Tables produced by one experiment plus the comparison with the reference."""

    experiment_id: str
    columns: list[str]
    rows: list[list]
    reference_columns: list[str] = field(default_factory=list)
    reference_rows: list[list] = field(default_factory=list)
    comparison: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        w.writerows(self.rows)
        return buf.getvalue()

    def reference_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.reference_columns)
        w.writerows(self.reference_rows)
        return buf.getvalue()

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            f"{self.experiment_id}.csv": self.to_csv(),
            f"{self.experiment_id}_reference.csv": self.reference_csv(),
            f"{self.experiment_id}_comparison.json": json.dumps(self.comparison, indent=2, sort_keys=True) + "\n",
        }
        paths = []
        for name, text in files.items():
            path = out / name
            path.write_text(text)
            paths.append(path)
        return paths


def _scaled(value: int, scale: float, floor: int) -> int:
    return max(floor, int(round(value * scale)))


def _phi(cfg: ExperimentConfig, pts, k: int, K: int, key: tuple[int, ...], threads: int) -> BarcodeDistribution:
    p = cfg.pipeline
    return phi_estimate(
        from_points(pts),
        p["n"],
        k,
        K,
        p["cutoff"],
        p["complex_kind"],
        np.random.SeedSequence(cfg.seed, spawn_key=key),
        replace=p["replace"],
        reduced_h0=p["reduced_h0"],
        threads=threads,
        max_simplices=p["max_simplices"],
    )


def _run_comparison(exp: Experiment, seed: int, scale: float, threads: int, levels) -> tuple[list, list, dict]:
    columns = ["part", "noise", "projection"]
    columns += [f"chi2_{int(lv * 100)}" for lv in reversed(LEVELS)]
    columns += [f"ks_{int(lv * 100)}" for lv in reversed(LEVELS)]
    columns += ["runs", "chi2_failures"]
    rows, details = [], {}
    for pi, part in enumerate(exp.parts):
        cfg = part.config.with_overrides(seed=seed)
        K = _scaled(cfg.pipeline["K"], scale, 20)
        reps = _scaled(cfg.repetitions, scale, 1)
        bins = cfg.analysis.get("bins", 25)
        refs = cfg.references
        projections = ["D2"] + (["DB"] if refs else [])
        chosen = [(j, lv) for j, lv in enumerate(part.levels) if levels is None or lv.label in levels]
        # counts[level][projection][test] -> rejections at each level
        tally = {j: {pr: {"chi2": np.zeros(3, int), "ks": np.zeros(3, int), "fail": 0} for pr in projections} for j, _ in chosen}
        for r in range(reps):
            base = cfg.base_points(subsample_stream(seed, 2, pi, r))
            phi_base = _phi(cfg, base, cfg.pipeline["k"], K, (5, pi, r), threads)
            for j, lv in chosen:
                noisy = cfg.with_overrides(noise=lv.noise).apply_noise(base, subsample_stream(seed, 3, pi, r, j))
                phi_noisy = _phi(cfg, noisy, cfg.pipeline["k"], K, (4, pi, r, j), threads)
                pair_rng = subsample_stream(seed, 6, pi, r, j)
                for pr in projections:
                    if pr == "D2":
                        s1 = distance_distribution_D2(phi_base, K, pair_rng)
                        s2 = distance_distribution_D2(phi_noisy, K, pair_rng)
                    else:
                        s1 = distance_distribution_DB(phi_base, refs[0])
                        s2 = distance_distribution_DB(phi_noisy, refs[0])
                    top = max(s1.samples[-1], s2.samples[-1])
                    t = tally[j][pr]
                    ks = ks_two_sample(s1, s2)
                    t["ks"] += [ks.rejects(lv_) for lv_ in reversed(LEVELS)]
                    try:
                        chi = chi2_histogram(s1, s2, bins, (0.0, top))
                        t["chi2"] += [chi.rejects(lv_) for lv_ in reversed(LEVELS)]
                    except InsufficientData:
                        # both samples in a single bin: no evidence of difference
                        t["fail"] += 1
                log.info("%s part %s rep %d level %s done", exp.id, part.label, r, lv.label)
        for j, lv in chosen:
            for pr in projections:
                t = tally[j][pr]
                rows.append(
                    [part.label, lv.label, pr]
                    + [round(x / reps, 4) for x in t["chi2"]]
                    + [round(x / reps, 4) for x in t["ks"]]
                    + [reps, t["fail"]]
                )
        details[part.label] = {"K": K, "repetitions": reps, "bins": bins}
    return columns, rows, details


def _run_long_bars(exp: Experiment, seed: int, scale: float, threads: int, levels) -> tuple[list, list, dict]:
    rows, details = [], {}
    columns = None
    for pi, part in enumerate(exp.parts):
        cfg = part.config.with_overrides(seed=seed)
        K = _scaled(cfg.pipeline["K"], scale, 20)
        thr = cfg.analysis.get("threshold", 0.25)
        max_bars = cfg.analysis.get("max_bars", 5)
        eps = cfg.analysis.get("eps", 0.05)
        columns = ["part", "noise"] + [f"{b}_bars" for b in range(max_bars + 1)] + [f"over_{max_bars}", "K", "mass_test_tail"]
        base = cfg.base_points(subsample_stream(seed, 2, pi, 0))
        for j, lv in enumerate(part.levels):
            if levels is not None and lv.label not in levels:
                continue
            noisy = cfg.with_overrides(noise=lv.noise).apply_noise(base, subsample_stream(seed, 3, pi, 0, j))
            dist = _phi(cfg, noisy, cfg.pipeline["k"], K, (4, pi, 0, j), threads)
            counts = np.zeros(max_bars + 2, dtype=int)
            for atom, c in zip(dist.atoms, dist.counts):
                counts[min(long_bar_count(atom, thr), max_bars + 1)] += c
            # mass on barcodes with more than 3 long bars, tested against eps
            q = int(sum(c for a, c in zip(dist.atoms, dist.counts) if long_bar_count(a, thr) > 3))
            rows.append([part.label, lv.label] + counts.tolist() + [K, binomial_tail(K, q, eps)])
            log.info("%s level %s done", exp.id, lv.label)
        details[part.label] = {"K": K, "threshold": thr, "eps": eps}
    return columns, rows, details


def _run_mhd(exp: Experiment, seed: int, scale: float, threads: int, levels, degrees=None) -> tuple[list, list, dict]:
    columns = ["part", "noise", "k", "m", "median", "ci_low", "ci_high", "ci_samples"]
    rows, details = [], {}
    for pi, part in enumerate(exp.parts):
        cfg = part.config.with_overrides(seed=seed)
        K = _scaled(cfg.pipeline["K"], scale, 20)
        alpha = cfg.analysis.get("alpha", 0.05)
        ci_n = min(cfg.analysis.get("ci_samples", K), K)
        refs = cfg.analysis["references"]
        base = cfg.base_points(subsample_stream(seed, 2, pi, 0))
        for j, lv in enumerate(part.levels):
            if levels is not None and lv.label not in levels:
                continue
            noisy = cfg.with_overrides(noise=lv.noise).apply_noise(base, subsample_stream(seed, 3, pi, 0, j))
            for k in part.degrees:
                if degrees is not None and k not in degrees:
                    continue
                dist = _phi(cfg, noisy, k, K, (4, pi, 0, j, k), threads)
                ordered = dist.in_draw_order()
                for text in refs:
                    ref = parse_reference(text)
                    med = distance_distribution_DB(dist, ref).median()
                    first = distance_distribution_DB(BarcodeDistribution.from_samples(ordered[:ci_n]), ref)
                    ci = median_confidence_interval(first, alpha)
                    rows.append([part.label, lv.label, k, len(ref), med, ci.low, ci.high, ci_n])
                log.info("%s level %s k=%d done", exp.id, lv.label, k)
        details[part.label] = {"K": K, "alpha": alpha, "ci_samples": ci_n}
    return columns, rows, details


def _compare(exp: Experiment, columns: list, rows: list) -> tuple[list, list, dict]:
    """Match reference rows by their key columns and report the differences."""
    ref_cols, ref_rows, cells = None, [], []
    for part in exp.parts:
        ref = part.reference
        if not ref:
            continue
        ref_cols = ["part"] + ref["columns"]
        nkeys = int(ref.get("keys", 1))
        for rrow in ref["rows"]:
            ref_rows.append([part.label] + rrow)
            key = [part.label] + [str(x) for x in rrow[:nkeys]]
            match = next((r for r in rows if [str(x) for x in r[: len(key)]] == key), None)
            if match is None:
                continue
            for name, want in zip(ref["columns"][nkeys:], rrow[nkeys:]):
                if name in columns and want is not None:
                    got = match[columns.index(name)]
                    if name.endswith("_bars") or name.startswith("over_"):
                        got, want = got / match[columns.index("K")], want / ref.get("total", 1000)
                    cells.append({"key": key, "column": name, "ours": got, "reference": want, "diff": abs(got - want)})
    within = [c["diff"] <= exp.tolerance for c in cells]
    summary = {
        "tolerance": exp.tolerance,
        "cells": cells,
        "compared": len(cells),
        "within_tolerance": int(sum(within)),
        "max_abs_diff": max((c["diff"] for c in cells), default=None),
    }
    return ref_cols or [], ref_rows, summary


def reproduce(
    experiment_id: str,
    seed: int | None = None,
    scale: float = 1.0,
    *,
    threads: int = 1,
    levels=None,
    degrees=None,
) -> ReproductionResult:
    """Run one experiment.

    Args:
        experiment_id: one of ``EXPERIMENT_IDS``.
        seed: master seed (default: the one in the config).
        scale: in (0, 1]; multiplies K and the repetition count.
        levels: optional subset of noise-level labels to run.
        degrees: optional subset of homology degrees (``mhd`` runner).
    """
    if not 0 < scale <= 1:
        raise ValueError("scale must lie in (0, 1]")
    exp = load_experiment(experiment_id)
    seed = exp.parts[0].config.seed if seed is None else int(seed)
    levels = None if levels is None else {str(x) for x in levels}
    if exp.runner == "comparison":
        columns, rows, details = _run_comparison(exp, seed, scale, threads, levels)
    elif exp.runner == "long_bars":
        columns, rows, details = _run_long_bars(exp, seed, scale, threads, levels)
    else:
        columns, rows, details = _run_mhd(exp, seed, scale, threads, levels, degrees)
    ref_cols, ref_rows, summary = _compare(exp, columns, rows)
    summary.update({"experiment": exp.id, "seed": seed, "scale": scale, "parts": details})
    return ReproductionResult(exp.id, columns, rows, ref_cols, ref_rows, summary, details)


def fraction_rows(result: ReproductionResult, column: str) -> dict:
    """Map ``(part, noise[, projection])`` keys to one numeric column."""
    idx = result.columns.index(column)
    key_len = 3 if "projection" in result.columns else 2
    return {tuple(str(x) for x in row[:key_len]): row[idx] for row in result.rows}
