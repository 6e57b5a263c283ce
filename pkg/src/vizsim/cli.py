"""Command-line entry point.

Every subcommand reads an optional JSON config (``--config``), applies
``--set section.key=value`` overrides, validates the result and writes CSV
output. Exit status: 0 success, 1 runtime failure, 2 usage or validation
error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import itertools
import json
import sys
from dataclasses import fields
from pathlib import Path


from vizsim import __version__
from vizsim.clustering import (
    MembershipError,
    cluster_quality,
    consensus_distance,
    distance_matrix,
    read_clustering_csv,
    read_distance_csv,
    ward_cluster,
    write_clustering_csv,
    write_dendrogram_csv,
    write_distance_csv,
)
from vizsim.imagecore import ImageDecodeError, gaussian_kernel, load_image, save_plane, to_grayscale
from vizsim.msssim import MsSsimParams, PyramidDepthError, image_similarity, ms_ssim, ms_ssim_yuv, similarity_to_distance
from vizsim.render import DomainError, EncodingSpec, equiluminant_palette, read_table_csv, write_table_csv
from vizsim.simbench import (
    BenchmarkCondition,
    correlate_with_accuracy,
    fit_category_models,
    rank_encodings,
    read_accuracy_csv,
    read_scores_csv,
    run_global,
    run_local,
    simulate_replacements,
    write_correlations_csv,
    write_rankings_csv,
    write_scores_csv,
)
from vizsim.ssim import SsimParams, mean_ssim, ssim_map
from vizsim.tuning import (
    ImageStore,
    TuneConfig,
    coarse_scale_triplets,
    read_manifest_csv,
    read_triplets_csv,
    sgd_fit,
    split_holdout,
    write_trace_csv,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

FACTORS = ("cardinality", "per_category", "entropy_q1", "entropy_q2")

DEFAULTS = {
    "seed": 0,
    "output_dir": "out",
    "ssim": {"window_size": 3, "window_sigma": 1.0, "padding": "zero", "c1": None, "c2": None, "c3": None},
    "msssim": {"weights": [1.0, 1.0, 1.0, 1.0, 1.0], "color_mode": "yuv", "color_standard": "bt601"},
    "render": {
        "width": 256,
        "height": 256,
        "mark_radius": 4.0,
        "size_range": [2.0, 12.0],
        "domain_q1": [0.0, 1.0],
        "domain_q2": [0.0, 1.0],
        "palette_size": 30,
        "quantize": True,
    },
    "bench": {
        "encodings": ["y_x_color", "size_y_x", "color_y_x"],
        "cardinalities": [3],
        "per_category": [30],
        "entropy_q1": ["medium"],
        "entropy_q2": ["medium"],
        "replicates": 20,
        "kinds": ["global"],
        "sd_multiplier": 1.0,
        "group_by": ["cardinality"],
        "accuracy_csv": None,
        "correlate_factors": ["cardinality"],
    },
    "tune": {
        "learning_rate": 0.5,
        "batch_size": 16,
        "epochs": 40,
        "grad_epsilon": 1e-3,
        "alpha": 0.5,
        "reg_scale": 1e-4,
        "weight_bounds": [0.01, 0.99],
        "init_weight": 0.5,
        "triplets": None,
        "manifest": None,
        "synthetic_triplets": 200,
        "synthetic_size": 64,
        "holdout_fraction": 0.2,
    },
    "cluster": {"k": 2},
}


class ConfigError(Exception):
    """Invalid configuration; ``problems`` lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {p}" for p in self.problems))


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, over: dict, prefix: str, problems: list) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        name = f"{prefix}{key}"
        if key not in base:
            problems.append(f"{name}: unknown field")
        elif isinstance(base[key], dict):
            if not isinstance(val, dict):
                problems.append(f"{name}: expected a section (object)")
            else:
                out[key] = _merge(base[key], val, name + ".", problems)
        else:
            out[key] = val
    return out


def _type_ok(default, val) -> bool:
    """Loose JSON type check against the default value."""
    number = isinstance(val, (int, float)) and not isinstance(val, bool)
    if default is None:
        return val is None or number or isinstance(val, str)
    if isinstance(default, bool):
        return isinstance(val, bool)
    if isinstance(default, int):
        return isinstance(val, int) and not isinstance(val, bool)
    if isinstance(default, float):
        return number
    if isinstance(default, list):
        return isinstance(val, list)
    if isinstance(default, str):
        return isinstance(val, str)
    return True


def _build_ssim(s: dict) -> SsimParams:
    kw = {k: s[k] for k in ("c1", "c2", "c3") if s[k] is not None}
    return SsimParams(window=gaussian_kernel(s["window_size"], s["window_sigma"]), padding=s["padding"], **kw)


def _build_msssim(cfg: dict) -> MsSsimParams:
    m = cfg["msssim"]
    return MsSsimParams(
        weights=tuple(m["weights"]),
        base=_build_ssim(cfg["ssim"]),
        color_mode=m["color_mode"],
        color_standard=m["color_standard"],
    )


def _build_spec(r: dict, name: str = "y_x_color") -> EncodingSpec:
    return EncodingSpec(
        name=name,
        width=r["width"],
        height=r["height"],
        mark_radius=float(r["mark_radius"]),
        palette=equiluminant_palette(r["palette_size"]),
        size_range=tuple(r["size_range"]),
        domain_q1=tuple(r["domain_q1"]),
        domain_q2=tuple(r["domain_q2"]),
        quantize=r["quantize"],
    )


def _build_tune(t: dict, seed: int) -> TuneConfig:
    names = {f.name for f in fields(TuneConfig)} - {"seed"}
    kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in t.items() if k in names}
    if not 0.0 <= t["holdout_fraction"] < 1.0:
        raise ValueError("holdout_fraction must lie in [0, 1)")
    if t["synthetic_triplets"] < 2:
        raise ValueError("synthetic_triplets must be at least 2")
    return TuneConfig(seed=seed, **kw)


def _bench_conditions(cfg: dict) -> list[BenchmarkCondition]:
    b = cfg["bench"]
    for kind in b["kinds"]:
        if kind not in ("global", "local"):
            raise ValueError(f"unknown kind {kind!r}; expected global or local")
    for g in b["group_by"] + b["correlate_factors"]:
        if g not in FACTORS:
            raise ValueError(f"unknown factor {g!r}; expected one of {FACTORS}")
    if b["sd_multiplier"] < 0:
        raise ValueError("sd_multiplier must be non-negative")
    out = []
    for enc, card, per, e1, e2 in itertools.product(
        b["encodings"], b["cardinalities"], b["per_category"], b["entropy_q1"], b["entropy_q2"]
    ):
        out.append(BenchmarkCondition(card, per, enc, b["replicates"], cfg["seed"], e1, e2))
    if not out:
        raise ValueError("no conditions (an empty list)")
    return out


# section -> builder taking the whole config
_BUILDERS = {
    "ssim": lambda c: _build_ssim(c["ssim"]),
    "msssim": _build_msssim,
    "render": lambda c: _build_spec(c["render"]),
    "bench": _bench_conditions,
    "tune": lambda c: _build_tune(c["tune"], c["seed"]),
    "cluster": lambda c: _check_k(c["cluster"]["k"]),
}


# builders that read another section
_DEPENDS = {"msssim": {"ssim"}}


def _check_k(k):
    if k < 1:
        raise ValueError("k must be at least 1")


def resolve_config(user: dict) -> dict:
    """Merge ``user`` over the defaults and validate every field.

    Each changed field is first checked on its own against the defaults so
    that all independent problems are reported together.
    """
    problems: list[str] = []
    cfg = _merge(DEFAULTS, user, "", problems)
    mistyped = set()
    for sec, body in cfg.items():
        items = body.items() if isinstance(body, dict) else [(None, body)]
        for key, val in items:
            default = DEFAULTS[sec][key] if key else DEFAULTS[sec]
            if not _type_ok(default, val):
                name = f"{sec}.{key}" if key else sec
                problems.append(f"{name}: wrong type {type(val).__name__}")
                mistyped.add(sec)
    if "seed" in mistyped:
        raise ConfigError(problems)
    failed = set(mistyped)
    for sec, build in _BUILDERS.items():
        if sec in failed:
            continue
        changed = [k for k in cfg[sec] if cfg[sec][k] != DEFAULTS[sec][k]]
        bad = False
        for key in changed:
            trial = copy.deepcopy(DEFAULTS)
            trial["seed"] = cfg["seed"]
            trial[sec][key] = cfg[sec][key]
            try:
                build(trial)
            except (ValueError, TypeError) as exc:
                problems.append(f"{sec}.{key}: {exc}")
                bad = True
                failed.add(sec)
        # field trials use default sections; only the full build needs its dependencies
        if not bad and not _DEPENDS.get(sec, set()) & failed:
            try:
                build(cfg)
            except (ValueError, TypeError) as exc:
                problems.append(f"{sec}: {exc}")
                failed.add(sec)
    if problems:
        raise ConfigError(problems)
    return cfg


def _parse_set(item: str):
    if "=" not in item:
        raise UsageError(f"--set expects section.key=value, got {item!r}")
    path, raw = item.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    keys = path.split(".")
    out = val
    for k in reversed(keys):
        out = {k: out}
    return out


def _deep_update(dst: dict, src: dict) -> None:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _deep_update(dst[k], v)
        else:
            dst[k] = v


def load_config(args) -> dict:
    user: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{args.config}: not valid JSON ({exc})"]) from exc
        if not isinstance(user, dict):
            raise ConfigError([f"{args.config}: top level must be an object"])
    for item in getattr(args, "set", None) or []:
        _deep_update(user, _parse_set(item))
    if getattr(args, "seed", None) is not None:
        user["seed"] = args.seed
    if getattr(args, "output_dir", None) is not None:
        user["output_dir"] = args.output_dir
    return resolve_config(user)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out_dir: Path, command: str, cfg: dict, outputs: list[Path]) -> Path:
    files = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(outputs)}
    record = {
        "command": command,
        "version": __version__,
        "seed": cfg["seed"],
        "config_sha256": config_hash(cfg),
        "config": cfg,
        "outputs": files,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
    return path


def _out_dir(cfg: dict) -> Path:
    p = Path(cfg["output_dir"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(rows: list[list], path) -> None:
    buf = io.StringIO()
    csv.writer(buf).writerows(rows)
    if path:
        Path(path).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


# ---------------------------------------------------------------------------
# commands


def _load_pair(a, b):
    ia, ib = load_image(a), load_image(b)
    if ia.shape != ib.shape:
        raise UsageError(
            f"image dimensions differ: {a} is {ia.width}x{ia.height}, {b} is {ib.width}x{ib.height}"
        )
    return ia, ib


def cmd_compare(args, cfg) -> int:
    ia, ib = _load_pair(args.image_a, args.image_b)
    params = _build_msssim(cfg)
    ga, gb = to_grayscale(ia), to_grayscale(ib)
    gray_params = MsSsimParams(params.weights, params.base, "grayscale", params.color_standard)
    rows = [
        ["metric", "value"],
        ["mean_ssim", repr(mean_ssim(ga, gb, params.base))],
        ["ms_ssim", repr(ms_ssim(ga, gb, gray_params))],
        ["ms_ssim_yuv", repr(ms_ssim_yuv(ia, ib, params))],
        ["distance", repr(similarity_to_distance(image_similarity(ia, ib, params)))],
    ]
    _emit(rows, args.out)
    if args.map:
        save_plane(ssim_map(ga, gb, params.base), args.map, lo=-1.0, hi=1.0)
    return EXIT_OK


def cmd_map(args, cfg) -> int:
    ia, ib = _load_pair(args.image_a, args.image_b)
    m = ssim_map(to_grayscale(ia), to_grayscale(ib), _build_ssim(cfg["ssim"]))
    save_plane(m, args.out, lo=-1.0, hi=1.0)
    if args.csv:
        _emit([[repr(float(v)) for v in row] for row in m], args.csv)
    return EXIT_OK


def _tune_inputs(cfg):
    t = cfg["tune"]
    params = _build_msssim(cfg)
    if t["triplets"] is None:
        images, triplets = coarse_scale_triplets(t["synthetic_triplets"], t["synthetic_size"], seed=cfg["seed"])
        return ImageStore(images, MsSsimParams(params.weights, params.base, "grayscale")), triplets
    if t["manifest"] is None:
        raise ConfigError(["tune.manifest: required when tune.triplets is set"])
    manifest = Path(t["manifest"])
    paths = read_manifest_csv(manifest)
    triplets = read_triplets_csv(t["triplets"])
    missing = sorted({x for tr in triplets for x in (tr.i, tr.j, tr.k)} - set(paths))
    if missing:
        raise ConfigError([f"tune.triplets: ids not in manifest: {missing}"])
    images = {k: load_image(manifest.parent / v) for k, v in sorted(paths.items())}
    return ImageStore(images, params), triplets


def cmd_tune(args, cfg) -> int:
    tcfg = _build_tune(cfg["tune"], cfg["seed"])
    store, triplets = _tune_inputs(cfg)
    train, hold = split_holdout(triplets, cfg["tune"]["holdout_fraction"], seed=cfg["seed"])
    res = sgd_fit(train, tcfg, store, holdout=hold)
    out = _out_dir(cfg)
    wpath, tpath = out / "weights.csv", out / "trace.csv"
    _emit([["scale", "weight"]] + [[i + 1, repr(w)] for i, w in enumerate(res.weights)], wpath)
    write_trace_csv(res.trace, tpath)
    write_manifest(out, "tune", cfg, [wpath, tpath])
    return EXIT_OK


def cmd_cluster(args, cfg) -> int:
    sources = [x for x in (args.images, args.distances, args.participants) if x]
    if len(sources) != 1:
        raise UsageError("give exactly one of --images, --distances, --participants")
    out = _out_dir(cfg)
    if args.images:
        manifest = Path(args.images)
        paths = read_manifest_csv(manifest)
        ids = list(paths)
        imgs = [load_image(manifest.parent / paths[i]) for i in ids]
        d = distance_matrix(imgs, _build_msssim(cfg))
    elif args.distances:
        d = read_distance_csv(args.distances)
    else:
        parts = [read_clustering_csv(p) for p in args.participants]
        n = max(p.n for p in parts)
        parts = [read_clustering_csv(p, n) for p in args.participants]
        d = consensus_distance(parts)
    k = cfg["cluster"]["k"]
    if k > d.shape[0]:
        raise ConfigError([f"cluster.k: {k} exceeds the {d.shape[0]} items"])
    merges, cl = ward_cluster(d, k)
    paths = [out / "distances.csv", out / "dendrogram.csv", out / "clusters.csv"]
    write_distance_csv(d, paths[0])
    write_dendrogram_csv(merges, paths[1])
    write_clustering_csv(cl, paths[2])
    write_manifest(out, "cluster", cfg, paths)
    return EXIT_OK


def cmd_quality(args, cfg) -> int:
    a = read_clustering_csv(args.a)
    b = read_clustering_csv(args.b)
    if a.n != b.n:
        raise UsageError(f"clusterings cover {a.n} and {b.n} items")
    q = cluster_quality(a, b)
    _emit(
        [
            ["ri", "ari", "nmi", "ami", "nmi_normalization", "ami_normalization"],
            [repr(q.ri), repr(q.ari), repr(q.nmi), repr(q.ami), q.nmi_normalization, q.ami_normalization],
        ],
        args.out,
    )
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    table = read_table_csv(args.table)
    models = fit_category_models(table)
    r = cfg["render"]
    reps = simulate_replacements(
        table, models, args.n, cfg["seed"], domain=tuple(r["domain_q1"]), sd_scale=cfg["bench"]["sd_multiplier"]
    )
    out = _out_dir(cfg)
    paths = []
    for i, t in enumerate(reps):
        p = out / f"replicate_{i:03d}.csv"
        write_table_csv(t, p)
        paths.append(p)
    write_manifest(out, "simulate", cfg, paths)
    return EXIT_OK


def run_bench(cfg: dict, kinds) -> list:
    params = _build_msssim(cfg)
    spec = _build_spec(cfg["render"])
    scores = []
    for cond in _bench_conditions(cfg):
        if "global" in kinds:
            scores.append(run_global(cond, params, spec, sd_multiplier=cfg["bench"]["sd_multiplier"]))
        if "local" in kinds:
            scores.append(run_local(cond, params, spec))
    return scores


def cmd_bench(args, cfg, kinds=None) -> int:
    b = cfg["bench"]
    kinds = kinds or b["kinds"]
    scores = run_bench(cfg, kinds)
    out = _out_dir(cfg)
    spath, rpath = out / "scores.csv", out / "rankings.csv"
    write_scores_csv(scores, spath)
    rows = []
    for kind in kinds:
        subset = [s for s in scores if s.kind == kind]
        for g in [None] + list(b["group_by"]):
            rows += [r._replace(group_by=f"{kind}:{r.group_by}") for r in rank_encodings(subset, g)]
    write_rankings_csv(rows, rpath)
    outputs = [spath, rpath]
    if b["accuracy_csv"]:
        cpath = out / "correlations.csv"
        acc = read_accuracy_csv(b["accuracy_csv"])
        write_correlations_csv(correlate_with_accuracy(scores, acc, b["correlate_factors"]), cpath)
        outputs.append(cpath)
    write_manifest(out, "bench", cfg, outputs)
    return EXIT_OK


def cmd_correlate(args, cfg) -> int:
    scores = read_scores_csv(args.scores)
    if args.kind:
        scores = [s for s in scores if s.kind == args.kind]
    rows = correlate_with_accuracy(scores, read_accuracy_csv(args.accuracy), args.factors)
    buf = [["factor", "n", "pearson_r"]] + [[f, n, repr(r)] for f, n, r in rows]
    _emit(buf, args.out)
    return EXIT_OK


def cmd_rank(args, cfg) -> int:
    scores = read_scores_csv(args.scores)
    if args.kind:
        scores = [s for s in scores if s.kind == args.kind]
    if args.group_by and args.group_by not in FACTORS:
        raise UsageError(f"--group-by must be one of {FACTORS}")
    rows = rank_encodings(scores, args.group_by)
    buf = [["group_by", "group", "rank", "encoding", "mean_score", "tied"]] + [
        [r.group_by, r.group, r.rank, r.encoding, repr(r.mean_score), int(r.tied)] for r in rows
    ]
    _emit(buf, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config field")
    common.add_argument("--seed", type=int)
    common.add_argument("--output-dir")

    p = argparse.ArgumentParser(prog="vizsim", description="Perceptual similarity for visualization images.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compare", parents=[common], help="similarity scores for two PNGs")
    c.add_argument("image_a")
    c.add_argument("image_b")
    c.add_argument("--map", help="also write the SSIM map as a PNG")
    c.add_argument("--out", help="CSV path (default stdout)")
    c.set_defaults(func=cmd_compare)

    m = sub.add_parser("map", parents=[common], help="SSIM heatmap of two PNGs")
    m.add_argument("image_a")
    m.add_argument("image_b")
    m.add_argument("--out", required=True, help="PNG path; -1..1 maps to black..white")
    m.add_argument("--csv", help="also write the raw map")
    m.set_defaults(func=cmd_map)

    t = sub.add_parser("tune", parents=[common], help="fit MS-SSIM scale weights to triplets")
    t.set_defaults(func=cmd_tune)

    cl = sub.add_parser("cluster", parents=[common], help="Ward clustering of images or judgments")
    cl.add_argument("--images", help="id,path manifest CSV")
    cl.add_argument("--distances", help="distance matrix CSV")
    cl.add_argument("--participants", nargs="+", help="one item_id,group_id CSV per participant")
    cl.add_argument("--k", type=int, help="number of clusters (overrides cluster.k)")
    cl.set_defaults(func=cmd_cluster)

    q = sub.add_parser("quality", parents=[common], help="agreement indices between two clusterings")
    q.add_argument("a")
    q.add_argument("b")
    q.add_argument("--out")
    q.set_defaults(func=cmd_quality)

    s = sub.add_parser("simulate", parents=[common], help="redraw Q1 from per-category models")
    s.add_argument("--table", required=True, help="category,q1,q2 CSV")
    s.add_argument("--n", type=int, default=20)
    s.set_defaults(func=cmd_simulate)

    for name, kinds in (("bench", None), ("bench-global", ["global"]), ("bench-local", ["local"])):
        b = sub.add_parser(name, parents=[common], help="discriminability benchmark")
        b.set_defaults(func=lambda a, c, k=kinds: cmd_bench(a, c, k))

    co = sub.add_parser("correlate", parents=[common], help="Pearson r of scores against accuracy")
    co.add_argument("--scores", required=True)
    co.add_argument("--accuracy", required=True, help="encoding,factor,accuracy CSV")
    co.add_argument("--factors", nargs="+", default=["cardinality"], choices=FACTORS)
    co.add_argument("--kind", choices=["global", "local"])
    co.add_argument("--out")
    co.set_defaults(func=cmd_correlate)

    r = sub.add_parser("rank", parents=[common], help="rank encodings by mean score")
    r.add_argument("--scores", required=True)
    r.add_argument("--group-by")
    r.add_argument("--kind", choices=["global", "local"])
    r.add_argument("--out")
    r.set_defaults(func=cmd_rank)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "k", None) is not None:
            args.set = (args.set or []) + [f"cluster.k={args.k}"]
        cfg = load_config(args)
        return args.func(args, cfg)
    except (ConfigError, UsageError, PyramidDepthError, DomainError) as exc:
        print(f"vizsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ImageDecodeError, MembershipError, ValueError, KeyError, RuntimeError) as exc:
        print(f"vizsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
