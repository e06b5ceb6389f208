"""``phstat`` command-line interface.

Commands: ``sample``, ``barcode``, ``phi``, ``stat``, ``test``, ``ci`` and
``reproduce``.  Results are written as JSON to ``--out`` (CSV for point
clouds and reproduction tables) and echoed to standard output in the
``--format`` of choice.

Exit codes: 0 success, 1 analysis failure (e.g. zero degrees of freedom
or an oversized complex), 2 I/O or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .barcode import long_bar_count
from .config import ConfigError, ExperimentConfig, load_config
from .filtration import ComplexTooLarge, DEFAULT_MAX_SIMPLICES, vietoris_rips, weak_witness
from .inference import (
    InsufficientData,
    chi2_histogram,
    chi2_reference_barcodes,
    ks_two_sample,
    likelihood_score,
    mass_hypothesis_test,
    median_confidence_interval,
)
from .mm_space import (
    format_point_cloud,
    from_distance_matrix,
    from_points,
    load_point_cloud,
    save_point_cloud,
)
from .persistence import compute_barcode
from .stats import (
    BarcodeDistribution,
    distance_distribution_D2,
    distance_distribution_DB,
    gap_max,
    hd,
    mhd,
    phi_estimate,
    subsample_stream,
    trimmed_mhd,
)

log = logging.getLogger("phstat")

EXIT_OK, EXIT_ANALYSIS, EXIT_IO = 0, 1, 2

STAT_METHODS = ("mhd", "trimmed_mhd", "hd", "gap", "long_bars", "likelihood")
TEST_METHODS = ("ks", "chi2", "chi2_reference", "mass")
CI_METHODS = ("mhd", "median_ci")


class AnalysisError(RuntimeError):
    """The computation ran but the requested quantity is undefined."""


# -- output ---------------------------------------------------------------------


def _text_table(headers: list[str], rows: list[list]) -> str:
    cells = [[str(h) for h in headers]] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def _csv(headers: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(headers)
    w.writerows(rows)
    return buf.getvalue()


def _flat_rows(record: dict) -> tuple[list[str], list[list]]:
    return ["field", "value"], [[k, v] for k, v in record.items()]


def _emit(args, record, headers=None, rows=None, out_text: str | None = None) -> None:
    """Write ``record`` to --out as JSON (or ``out_text``) and echo it."""
    text = out_text if out_text is not None else json.dumps(record, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    if headers is None:
        headers, rows = _flat_rows(record)
    if args.format == "json":
        sys.stdout.write(json.dumps(record, sort_keys=True, indent=2) + "\n")
    elif args.format == "csv":
        sys.stdout.write(_csv(headers, rows))
    else:
        sys.stdout.write(_text_table(headers, rows))


# -- shared helpers -------------------------------------------------------------


def _seed(args, cfg: ExperimentConfig | None) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.seed if cfg is not None else 0


def _require(cfg: ExperimentConfig, section: str, name: str):
    block = cfg.pipeline if section == "pipeline" else cfg.analysis
    if name not in block:
        raise ConfigError(f"{section}.{name}: required for this command")
    return block[name]


def _check_method(cfg: ExperimentConfig, allowed: tuple[str, ...]) -> str:
    method = cfg.analysis["method"]
    if method not in allowed:
        raise ConfigError(f"analysis.method: {method!r} is not valid here (allowed: {', '.join(allowed)})")
    return method


def _phi_for(cfg: ExperimentConfig, seed: int, stream: int, threads: int) -> BarcodeDistribution:
    p = cfg.pipeline
    space = cfg.space(subsample_stream(seed, 2, stream))
    dist = phi_estimate(
        space,
        p["n"],
        p["k"],
        p["K"],
        p["cutoff"],
        p["complex_kind"],
        np.random.SeedSequence(seed, spawn_key=(4, stream)),
        replace=p["replace"],
        reduced_h0=p["reduced_h0"],
        threads=threads,
        max_simplices=p["max_simplices"],
    )
    dist.meta["seed"] = seed
    return dist


def _load_dist(path) -> BarcodeDistribution:
    try:
        return BarcodeDistribution.from_json(Path(path).read_text())
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a barcode distribution ({exc})") from None


def _dists(args, cfg: ExperimentConfig, count: int) -> list[BarcodeDistribution]:
    """``count`` distributions: from --dist files, else computed from the config."""
    given = [_load_dist(p) for p in (args.dist or [])]
    if len(given) > count:
        raise ConfigError(f"--dist: at most {count} file(s) expected")
    seed = _seed(args, cfg)
    out = list(given)
    for i in range(len(given), count):
        if i == 0:
            out.append(_phi_for(cfg, seed, 0, args.threads))
        else:
            other = _compare_config(cfg)
            out.append(_phi_for(other, other.seed if "seed" in cfg.analysis.get("compare", {}) else seed, 1, args.threads))
    return out


def _compare_config(cfg: ExperimentConfig) -> ExperimentConfig:
    compare = cfg.analysis.get("compare")
    if compare is None:
        raise ConfigError("analysis.compare: required for a second sample (or pass --dist twice)")
    return cfg.with_overrides(**compare)


def _dist_summary(dist: BarcodeDistribution) -> tuple[list[str], list[list]]:
    rows = [
        [i, c, len(a), " ".join(f"[{x:.4g},{y:.4g})" for x, y in a.intervals)]
        for i, (a, c) in enumerate(zip(dist.atoms, dist.counts))
    ]
    return ["atom", "count", "bars", "intervals"], rows


def _preflight_phi(cfg: ExperimentConfig, need_second: bool = False, have: int = 0) -> None:
    if have < 1:
        _require(cfg, "pipeline", "n")
    if need_second and have < 2:
        _compare_config(cfg)


# -- commands -------------------------------------------------------------------


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    if not cfg.is_point_cloud():
        raise ConfigError("shape.kind: metric_circle is a finite metric space, not a point cloud")
    pts = cfg.sample_points(subsample_stream(_seed(args, cfg), 2, 0))
    if args.out:
        save_point_cloud(args.out, pts, "json" if args.out.endswith(".json") else "csv")
    if args.format == "json":
        sys.stdout.write(format_point_cloud(pts, "json") + "\n")
    elif args.format == "csv" or not args.out:
        sys.stdout.write(format_point_cloud(pts, "csv"))
    else:
        sys.stdout.write(f"wrote {len(pts)} points of dimension {pts.shape[1]} to {args.out}\n")
    return EXIT_OK


def cmd_barcode(args) -> int:
    if (args.input is None) == (args.config is None):
        raise ConfigError("barcode: give exactly one of INPUT or --config")
    cfg = load_config(args.config) if args.config else None
    seed = _seed(args, cfg)
    k = args.k if args.k is not None else (cfg.pipeline["k"] if cfg else None)
    cutoff = args.cutoff if args.cutoff is not None else (cfg.pipeline["cutoff"] if cfg else None)
    if k is None or cutoff is None:
        raise ConfigError("barcode: --k and --cutoff are required")
    if k < 0 or not cutoff > 0:
        raise ConfigError("barcode: need k >= 0 and cutoff > 0")
    kind = args.complex or (cfg.pipeline["complex_kind"] if cfg else "rips")
    landmarks = args.landmarks if args.landmarks is not None else (cfg.pipeline.get("landmarks") if cfg else None)
    max_simplices = args.max_simplices or (cfg.pipeline["max_simplices"] if cfg else DEFAULT_MAX_SIMPLICES)
    if cfg is not None:
        space = cfg.space(subsample_stream(seed, 2, 0))
    else:
        try:
            data = load_point_cloud(args.input)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        space = from_distance_matrix(data) if args.distance_matrix else from_points(data)
    if kind == "witness":
        L = landmarks or space.n_points
        if L > space.n_points:
            raise ConfigError("landmarks: more landmarks than points")
        lm = np.sort(subsample_stream(seed, 8).choice(space.n_points, size=L, replace=False))
        cx = weak_witness(space, lm, k + 1, cutoff, max_simplices=max_simplices)
    else:
        cx = vietoris_rips(space, k + 1, cutoff, max_simplices)
    bc = compute_barcode(cx, k, args.reduced, cutoff)
    record = {"intervals": [list(iv) for iv in bc.intervals], "k": k, "cutoff": cutoff, "complex_kind": kind, "simplices": cx.counts()}
    rows = [[a, b, b - a] for a, b in bc.intervals]
    _emit(args, record, ["birth", "death", "length"], rows)
    return EXIT_OK


def cmd_phi(args) -> int:
    cfg = load_config(args.config)
    _preflight_phi(cfg)
    dist = _phi_for(cfg, _seed(args, cfg), 0, args.threads)
    headers, rows = _dist_summary(dist)
    _emit(args, dist.to_dict(), headers, rows, out_text=json.dumps(dist.to_dict(), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_stat(args) -> int:
    cfg = load_config(args.config)
    method = _check_method(cfg, STAT_METHODS)
    have = len(args.dist or [])
    if method in ("mhd", "trimmed_mhd", "likelihood"):
        if not cfg.analysis.get("on_d2"):
            cfg.reference  # noqa: B018 - validates presence
    if method == "likelihood":
        _require(cfg, "analysis", "eps")
    _preflight_phi(cfg, method == "hd", have)
    a = cfg.analysis
    dists = _dists(args, cfg, 2 if method == "hd" else 1)
    dist = dists[0]
    record = {"method": method, "K": dist.total, "atoms": len(dist)}
    if method == "mhd":
        rng = subsample_stream(_seed(args, cfg), 6)
        ref = None if a.get("on_d2") else cfg.reference
        record["value"] = mhd(dist, ref, on_d2=a.get("on_d2", False), pair_count=a.get("pair_count"), rng=rng)
    elif method == "trimmed_mhd":
        record["value"] = trimmed_mhd(dist, cfg.reference, a.get("trim", 0.1))
        record["trim"] = a.get("trim", 0.1)
    elif method == "hd":
        record["value"] = hd(dist, dists[1])
    elif method == "likelihood":
        record["value"] = likelihood_score(cfg.reference, dist, a["eps"])
    elif method == "gap":
        m, g = gap_max(dist, a.get("m", 5))
        record.update({"value": g, "argmax_m": m})
    else:
        thr = a.get("threshold", 0.25)
        hist: dict[int, int] = {}
        for atom, c in zip(dist.atoms, dist.counts):
            nb = long_bar_count(atom, thr)
            hist[nb] = hist.get(nb, 0) + c
        record.update({"threshold": thr, "histogram": {str(k): hist[k] for k in sorted(hist)}})
        _emit(args, record, ["long_bars", "count"], [[k, hist[k]] for k in sorted(hist)])
        return EXIT_OK
    _emit(args, record)
    return EXIT_OK


def _real_samples(cfg: ExperimentConfig, dist: BarcodeDistribution, projection: str, rng):
    if projection == "DB":
        return distance_distribution_DB(dist, cfg.reference)
    return distance_distribution_D2(dist, cfg.analysis.get("pair_count", dist.total), rng)


def cmd_test(args) -> int:
    cfg = load_config(args.config)
    method = _check_method(cfg, TEST_METHODS)
    a = cfg.analysis
    projection = a.get("projection", "D2")
    if method in ("ks", "chi2") and projection == "DB":
        cfg.reference  # noqa: B018
    if method == "chi2_reference" and not cfg.references:
        raise ConfigError("analysis.references: required for chi2_reference")
    if method == "mass":
        _require(cfg, "analysis", "eps")
    have = len(args.dist or [])
    _preflight_phi(cfg, method != "mass", have)
    dists = _dists(args, cfg, 1 if method == "mass" else 2)
    seed = _seed(args, cfg)
    if method == "mass":
        thr, limit = a.get("threshold", 0.25), a.get("max_bars", 3)
        report = mass_hypothesis_test(dists[0], lambda b: long_bar_count(b, thr) > limit, a["eps"], a.get("alpha", 0.05))
    elif method == "chi2_reference":
        report = chi2_reference_barcodes(dists[0], dists[1], cfg.references)
    else:
        s1 = _real_samples(cfg, dists[0], projection, subsample_stream(seed, 6, 0))
        s2 = _real_samples(cfg, dists[1], projection, subsample_stream(seed, 6, 1))
        if method == "ks":
            report = ks_two_sample(s1, s2)
        else:
            top = max(s1.samples[-1], s2.samples[-1])
            report = chi2_histogram(s1, s2, a.get("bins", 25), (0.0, top))
    record = report.to_dict()
    record["projection"] = projection if method in ("ks", "chi2") else None
    rows = [["statistic", report.statistic], ["p_value", report.p_value], ["method", report.method]]
    rows += [[f"reject_{k}", v] for k, v in record["decisions"].items()]
    _emit(args, record, ["field", "value"], rows)
    return EXIT_OK


def cmd_ci(args) -> int:
    cfg = load_config(args.config)
    _check_method(cfg, CI_METHODS)
    ref = cfg.reference
    _preflight_phi(cfg, False, len(args.dist or []))
    dist = _dists(args, cfg, 1)[0]
    alpha = cfg.analysis.get("alpha", 0.05)
    samples = distance_distribution_DB(dist, ref)
    ci = median_confidence_interval(samples, alpha)
    record = ci.to_dict()
    record["reference"] = [list(iv) for iv in ref.intervals]
    _emit(args, record, ["field", "value"], [[k, v] for k, v in record.items()])
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .reproduce import EXPERIMENT_IDS, reproduce

    if args.experiment not in EXPERIMENT_IDS:
        sys.stderr.write(f"phstat: unknown experiment {args.experiment!r}\nvalid ids:\n")
        for i in EXPERIMENT_IDS:
            sys.stderr.write(f"  {i}\n")
        return EXIT_IO
    if not 0 < args.scale <= 1:
        raise ConfigError("--scale: must lie in (0, 1]")
    result = reproduce(args.experiment, args.seed, args.scale, threads=args.threads, levels=args.levels)
    if args.out:
        for path in result.write(args.out):
            log.info("wrote %s", path)
    if args.format == "json":
        sys.stdout.write(json.dumps({"columns": result.columns, "rows": result.rows, "comparison": result.comparison}, sort_keys=True, indent=2) + "\n")
    elif args.format == "csv":
        sys.stdout.write(result.to_csv())
    else:
        sys.stdout.write(_text_table(result.columns, result.rows))
        c = result.comparison
        sys.stdout.write(
            f"\nreference cells within {c['tolerance']}: {c['within_tolerance']}/{c['compared']}"
            f" (max |diff| {_fmt(c['max_abs_diff'])})\n"
        )
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, defaults: bool) -> None:
    kw = {} if defaults else {"default": argparse.SUPPRESS}
    p.add_argument("--seed", type=int, help="master seed (overrides the config)", **({"default": None} if defaults else kw))
    p.add_argument("--threads", type=int, help="worker processes for the subsample loop", **({"default": 1} if defaults else kw))
    p.add_argument("--out", help="output file (directory for reproduce)", **({"default": None} if defaults else kw))
    p.add_argument("--format", choices=("json", "csv", "text"), help="standard output format", **({"default": "text"} if defaults else kw))
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr", **({"default": False} if defaults else kw))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phstat", description="Statistics on persistent homology barcodes of subsamples.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], help="draw a point cloud from a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("barcode", parents=[common], help="barcode of a point cloud or config space")
    p.add_argument("input", nargs="?", help="CSV or JSON point cloud")
    p.add_argument("--config")
    p.add_argument("--k", type=int, help="homology degree")
    p.add_argument("--cutoff", type=float, help="scale cutoff")
    p.add_argument("--complex", choices=("rips", "witness"))
    p.add_argument("--landmarks", type=int, help="number of random landmarks (witness complex)")
    p.add_argument("--distance-matrix", action="store_true", help="INPUT is a distance matrix")
    p.add_argument("--reduced", action="store_true", help="reduced degree-0 homology")
    p.add_argument("--max-simplices", type=int, help=f"simplex-count guard (default {DEFAULT_MAX_SIMPLICES})")
    p.set_defaults(func=cmd_barcode)

    p = sub.add_parser("phi", parents=[common], help="estimate the barcode distribution")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_phi)

    for name, func, helptext in (
        ("stat", cmd_stat, "distribution statistic (mhd, trimmed_mhd, hd, gap, long_bars, likelihood)"),
        ("test", cmd_test, "hypothesis test (ks, chi2, chi2_reference, mass)"),
        ("ci", cmd_ci, "median confidence interval of d_B to a reference"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--dist", action="append", help="precomputed distribution JSON (repeatable)")
        p.set_defaults(func=func)

    p = sub.add_parser("reproduce", parents=[common], help="re-run a synthetic experiment")
    p.add_argument("experiment")
    p.add_argument("--scale", type=float, default=1.0, help="shrink K and repetitions, in (0, 1]")
    p.add_argument("--levels", nargs="+", help="only these noise-level labels")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"phstat: error: {exc}\n")
        return EXIT_IO
    except (InsufficientData, ComplexTooLarge, AnalysisError) as exc:
        sys.stderr.write(f"phstat: analysis failed: {exc}\n")
        return EXIT_ANALYSIS
    except ValueError as exc:
        sys.stderr.write(f"phstat: analysis failed: {exc}\n")
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
