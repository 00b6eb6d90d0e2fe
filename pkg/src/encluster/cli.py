"""``encluster`` command-line front end.

Typical run, with every step reading the previous step's default output under
``--out``::

    encluster --out run synth
    encluster --out run extract --input run/synth/trajectories.csv
    encluster --out run featurize --kind DTW
    encluster --out run sweep --kind DTW
    encluster --out run cluster --kind DTW --k 5
    encluster --out run export --kind DTW --k 5 --format svg
    encluster --out run report --kind DTW --k 5

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import autoencoder as ae
from . import clustering, export, extraction, features, geo, synth
from ._io import atomic_open, file_digest
from .config import PipelineConfig
from .errors import ConfigurationError, EnclusterError
from .features import Kind

log = logging.getLogger("encluster")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


# --- paths -----------------------------------------------------------------------


def synth_dir(cfg):
    return cfg.out / "synth"


def archive_dir(cfg):
    return cfg.out / "archive"


def model_path(cfg, kind: Kind):
    return cfg.out / "models" / f"{kind.value}.ae"


def cluster_dir(cfg, kind: Kind, k: int):
    return cfg.out / "cluster" / f"{kind.value}_k{k}"


def cache_key(archive_digest: str, kind: Kind, kbar: int, model_digest: str | None) -> str:
    h = hashlib.sha256()
    for part in (archive_digest, kind.value, str(kbar), model_digest or "-"):
        h.update(part.encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


def feature_cache_path(cfg, archive: Path, kind: Kind, model: Path | None) -> Path:
    model_digest = file_digest(model) if kind.uses_autoencoder else None
    key = cache_key(extraction.archive_digest(archive), kind, cfg.kbar(kind.value), model_digest)
    return cfg.out / "features" / f"{kind.value}-{key}.encf"


# --- commands ----------------------------------------------------------------------


def cmd_synth(cfg, args):
    s = cfg["synth"]
    per_kind = args.per_kind if args.per_kind is not None else int(s["per_kind"])
    noise = args.noise_sigma if args.noise_sigma is not None else float(s["noise_sigma"])
    encounters, labels = synth.gen_corpus(per_kind, seed=cfg.seed, noise_sigma=noise)
    out = synth_dir(cfg)
    extraction.write_archive(out, encounters)
    synth.write_labels_csv(out / "labels.csv", labels)
    geo.write_trajectory_csv(out / "trajectories.csv", synth.to_gps(encounters))
    print(f"wrote {len(encounters)} labeled encounters to {out}")


def cmd_extract(cfg, args):
    src = Path(args.input) if args.input else synth_dir(cfg) / "trajectories.csv"
    corpus = geo.read_trajectory_csv(src)
    e = cfg["extract"]
    encounters = extraction.find_encounters(
        corpus,
        max_dist=float(e["max_dist"]),
        min_duration=float(e["min_duration"]),
        rate_hz=float(e["rate_hz"]),
        max_gap=float(e["max_gap"]),
        threads=cfg.threads,
    )
    out = Path(args.archive) if args.archive else archive_dir(cfg)
    extraction.write_archive(out, encounters)
    print(f"{len(corpus)} trajectories -> {len(encounters)} encounters in {out}")


def _unified(cfg, archive: Path, kind: Kind):
    kbar = cfg.kbar(kind.value)
    return [extraction.unify_encounter(enc, kbar) for enc in extraction.read_archive(archive)]


def _archive_arg(cfg, args) -> Path:
    return Path(args.archive) if getattr(args, "archive", None) else archive_dir(cfg)


def _model_arg(cfg, args, kind: Kind) -> Path | None:
    if not kind.uses_autoencoder:
        return None
    path = Path(args.model) if getattr(args, "model", None) else model_path(cfg, kind)
    if not path.exists():
        raise ConfigurationError(f"kind {kind.value} needs a trained model; run `train-ae --kind {kind.value}` (looked for {path})")
    return path


def cmd_featurize(cfg, args):
    kind = Kind(args.kind)
    archive = _archive_arg(cfg, args)
    model = _model_arg(cfg, args, kind)
    path = feature_cache_path(cfg, archive, kind, model)
    if path.exists() and features.sidecar_path(path).exists():
        features.read_feature_cache(path)
        print(f"cache up to date: {path}")
        return
    reps = features.featurize(_unified(cfg, archive, kind), kind, ae.load_model(model) if model else None, threads=cfg.threads)
    features.write_feature_cache(path, reps, kind)
    print(f"wrote {len(reps)} x {len(reps[0].data) if reps else 0} features to {path}")


def cmd_train_ae(cfg, args):
    kind = Kind(args.kind)
    if not kind.uses_autoencoder:
        raise ConfigurationError(f"{kind.value} does not use an autoencoder")
    archive = _archive_arg(cfg, args)
    unified = _unified(cfg, archive, kind)
    if not unified:
        raise ConfigurationError("archive holds no encounters to train on")
    data = np.vstack([features.base_vector(u, kind) for u in unified])
    a = cfg["ae"]
    dims = ae.default_layer_dims(data.shape[1], int(a["hidden"]), int(a["latent"]))
    tc = ae.TrainConfig(int(a["epochs"]), float(a["learning_rate"]), int(a["batch_size"]), cfg.seed)
    model, history = ae.ae_train(ae.ae_init(dims, cfg.seed), data, tc)
    path = Path(args.model) if args.model else model_path(cfg, kind)
    ae.save_model(path, model)
    with atomic_open(path.with_name(f"{kind.value}_loss.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(history, 1):
            w.writerow([i, repr(v)])
    print(f"trained {dims} for {tc.epochs} epochs: loss {history[0]:.6g} -> {history[-1]:.6g}; saved {path}")


def _feature_set(cfg, args) -> clustering.FeatureSet:
    if args.features:
        path = Path(args.features)
    else:
        kind = Kind(args.kind)
        archive = _archive_arg(cfg, args)
        path = feature_cache_path(cfg, archive, kind, _model_arg(cfg, args, kind))
        if not path.exists():
            raise ConfigurationError(f"no feature cache for the current archive/model; run `featurize --kind {kind.value}` first")
    kind, ids, rows = features.read_feature_cache(path)
    return clustering.FeatureSet(kind.value, rows, ids)


def cmd_cluster(cfg, args):
    fs = _feature_set(cfg, args)
    c = cfg["cluster"]
    k = args.k if args.k is not None else int(c["k"])
    res = clustering.kmeans(fs, k, cfg.seed, max_iter=int(c["max_iter"]), tol=float(c["tol"]))
    m = clustering.validity(fs, res)
    out = Path(args.dest) if args.dest else cluster_dir(cfg, Kind(fs.kind), k)
    row = clustering.SweepRow(k, cfg.seed, m.lambda_bc, m.lambda_wc, res.inertia, res.iterations)
    clustering.write_results_csv(out / "results.csv", fs.kind, [row])
    clustering.write_assignments_csv(out / "assignments.csv", fs.ids, res.labels)
    print(f"{fs.kind} k={k} seed={cfg.seed}: lambda_BC={m.lambda_bc:.4f} lambda_WC={m.lambda_wc:.4f} -> {out}")


def cmd_sweep(cfg, args):
    fs = _feature_set(cfg, args)
    c = cfg["cluster"]
    k_min = args.k_min if args.k_min is not None else int(c["k_min"])
    k_max = args.k_max if args.k_max is not None else int(c["k_max"])
    result = clustering.sweep_k(fs, k_min, k_max, cfg.seeds(), threads=cfg.threads, max_iter=int(c["max_iter"]), tol=float(c["tol"]))
    out = Path(args.dest) if args.dest else cfg.out / "sweep"
    clustering.write_results_csv(out / f"{fs.kind}_results.csv", fs.kind, result.rows)
    write_medians_csv(out / f"{fs.kind}_medians.csv", result)
    print(format_medians(result, float(c["plateau"])))


def write_medians_csv(path, result: clustering.SweepResult):
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "k", "median_lambda_bc", "median_lambda_wc", "median_inertia"])
        for k, m in result.medians().items():
            w.writerow([result.kind, k, repr(m["lambda_bc"]), repr(m["lambda_wc"]), repr(m["inertia"])])


def format_medians(result: clustering.SweepResult, plateau: float) -> str:
    lines = [f"{result.kind}: median over seeds", "   k  lambda_BC  lambda_WC  d(lambda_WC)"]
    prev = None
    for k, m in result.medians().items():
        delta = "" if prev is None else f"{m['lambda_wc'] - prev:+.4f}"
        lines.append(f"{k:4d}  {m['lambda_bc']:.4f}     {m['lambda_wc']:.4f}     {delta}")
        prev = m["lambda_wc"]
    pk = result.plateau_k(plateau)
    lines.append(f"plateau (|d lambda_WC| < {plateau}): " + (f"k = {pk}" if pk is not None else "not reached"))
    return "\n".join(lines)


def _assignments_path(cfg, args) -> Path:
    if args.assignments:
        return Path(args.assignments)
    k = args.k if args.k is not None else int(cfg["cluster"]["k"])
    return cluster_dir(cfg, Kind(args.kind), k) / "assignments.csv"


def cmd_export(cfg, args):
    assignments = clustering.read_assignments_csv(_assignments_path(cfg, args))
    encounters = extraction.read_archive(_archive_arg(cfg, args))
    out = Path(args.dest) if args.dest else cfg.out / "export" / args.format
    paths = export.export(args.format, out, encounters, assignments)
    print(f"wrote {len(paths)} {args.format} file(s) to {out}")


def cmd_report(cfg, args):
    kind = Kind(args.kind)
    sweep_path = Path(args.sweep) if args.sweep else cfg.out / "sweep" / f"{kind.value}_results.csv"
    if sweep_path.exists():
        print(format_medians(clustering.read_results_csv(sweep_path), float(cfg["cluster"]["plateau"])))
    else:
        print(f"no sweep results at {sweep_path}")
    assign_path = _assignments_path(cfg, args)
    labels_path = Path(args.labels) if args.labels else synth_dir(cfg) / "labels.csv"
    if assign_path.exists() and labels_path.exists():
        assignments = clustering.read_assignments_csv(assign_path)
        encounters = extraction.read_archive(_archive_arg(cfg, args))
        truth = synth.match_labels(encounters, synth.read_labels_csv(labels_path))
        ids = [e.id for e in encounters if e.id in truth and e.id in assignments]
        if len(ids) >= 2:
            ari = clustering.adjusted_rand_index([assignments[i] for i in ids], [truth[i] for i in ids])
            print(f"ARI vs ground truth ({len(ids)} labeled encounters): {ari:.4f}")


# --- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output root directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="encluster", parents=[common], description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in Kind]

    p = sub.add_parser("synth", parents=[common], help="generate a labeled synthetic corpus")
    p.add_argument("--per-kind", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", parents=[common], help="find encounters in a trajectory CSV")
    p.add_argument("--input", help="vehicle_id,timestamp,latitude,longitude CSV")
    p.add_argument("--archive", help="archive directory to write")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("featurize", parents=[common], help="compute a feature cache")
    p.add_argument("--kind", required=True, choices=kinds)
    p.add_argument("--archive")
    p.add_argument("--model")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train-ae", parents=[common], help="train the autoencoder for an AE kind")
    p.add_argument("--kind", required=True, choices=[k.value for k in Kind if k.uses_autoencoder])
    p.add_argument("--archive")
    p.add_argument("--model", help="checkpoint path to write")
    p.set_defaults(func=cmd_train_ae)

    for name, func, help_ in (("cluster", cmd_cluster, "k-means at one k"), ("sweep", cmd_sweep, "k-means over a k range and seeds")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--kind", choices=kinds, default="DTW")
        p.add_argument("--features", help="feature cache (default: the cache for --kind)")
        p.add_argument("--archive")
        p.add_argument("--model")
        p.add_argument("--dest", help="output directory")
        if name == "cluster":
            p.add_argument("--k", type=int)
        else:
            p.add_argument("--k-min", type=int)
            p.add_argument("--k-max", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("export", parents=[common], help="write GeoJSON / SVG / CSV views of a clustering")
    p.add_argument("--format", choices=export.FORMATS, default="geojson")
    p.add_argument("--assignments")
    p.add_argument("--kind", choices=kinds, default="DTW")
    p.add_argument("--k", type=int)
    p.add_argument("--archive")
    p.add_argument("--dest")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("report", parents=[common], help="summarize a sweep and score a clustering against labels")
    p.add_argument("--kind", choices=kinds, default="DTW")
    p.add_argument("--k", type=int)
    p.add_argument("--sweep")
    p.add_argument("--assignments")
    p.add_argument("--labels")
    p.add_argument("--archive")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING)
    overrides = {key: getattr(args, key) for key in ("seed", "threads", "out") if hasattr(args, key)}
    try:
        cfg = PipelineConfig.load(getattr(args, "config", None), overrides)
        args.func(cfg, args)
    except EnclusterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
