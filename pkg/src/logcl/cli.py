"""Command-line entry point.

    logcl prepare     --dataset DIR --out DIR
    logcl train       --dataset DIR --out DIR [--config FILE] [flags]
    logcl train       --manifest RUN_DIR/manifest.json --out DIR
    logcl eval        --dataset DIR --checkpoint FILE --out DIR [--split test] [--online]
    logcl ablate      --dataset DIR --out DIR [flags]
    logcl noise-sweep --dataset DIR --out DIR [--sigmas 0,0.1,0.3,0.5,1.0] [--seeds 3] [--plot]
    logcl report      RUN_DIR [RUN_DIR ...] --out DIR

``--dataset`` accepts a benchmark directory, a directory written by
``prepare``, or ``synthetic:repetition``. Exit status: 0 success, 1 usage
error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import subprocess
import sys
from pathlib import Path

import numpy as np

from .config import ABLATIONS, ConfigError, TrainConfig, dump_config, load_config
from .data import SPLITS, DatasetError, TemporalKG, load_dataset
from .engine import GraphContext, TrainingDiverged, evaluate_split, load_checkpoint, online_train, save_checkpoint, train
from .evaluation import MetricsReport, reports_to_csv, reports_to_markdown
from .synthetic import repetition_dataset

logger = logging.getLogger("logcl")

DEFAULT_SIGMAS = (0.0, 0.1, 0.3, 0.5, 1.0)
CACHE_FILE = "dataset.npz"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------- datasets

def _file_digest(paths) -> str:
    h = hashlib.sha1()
    for p in paths:
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def _load_cache(path: Path) -> TemporalKG:
    blob = np.load(path / CACHE_FILE)
    meta = json.loads(str(blob["meta"]))
    splits = {s: blob[s] for s in SPLITS}
    return TemporalKG(meta["num_entities"], meta["num_relations"], splits, meta["granularity"], meta["name"])


def resolve_dataset(source: str, time_split: str | None = None) -> TemporalKG:
    if source == "synthetic:repetition":
        kg = repetition_dataset()
    else:
        path = Path(source)
        kg = _load_cache(path) if (path / CACHE_FILE).exists() else load_dataset(path)
    if time_split:
        try:
            a, b, c = (int(x) for x in time_split.split(","))
        except ValueError:
            raise UsageError("--time-split expects TRAIN_END,VALID_END,TEST_END") from None
        kg = kg.restrict_times(range(0, a), range(a, b), range(b, c))
    return kg


def dataset_fingerprint(source: str, kg: TemporalKG, time_split: str | None) -> dict:
    return {
        "path": source if source.startswith("synthetic:") else str(Path(source).resolve()),
        "time_split": time_split,
        "rows": {s: int(len(kg.splits[s])) for s in SPLITS},
        "entities": kg.num_entities,
        "relations": kg.num_relations,
    }


def _revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(out: Path, command: str, cfg: TrainConfig | None, dataset: dict, artifacts: list[str]) -> dict:
    manifest = {
        "command": command,
        "config": cfg.to_dict() if cfg else None,
        "config_fingerprint": cfg.fingerprint() if cfg else None,
        "seed": cfg.seed if cfg else None,
        "dataset": dataset,
        "revision": _revision(),
        "artifacts": sorted(artifacts),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


# --------------------------------------------------------------------------- config flags

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--no-cl", dest="use_cl", action="store_const", const=False)
    p.add_argument("--no-eatt", dest="use_eatt", action="store_const", const=False)
    p.add_argument("--local-only", action="store_true")
    p.add_argument("--global-only", action="store_true")
    p.add_argument("--online", action="store_const", const=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="any other config field")
    p.add_argument("--preset", help="dataset hyperparameter preset (icews14, icews18, icews05-15, gdelt)")


def config_from_args(args) -> TrainConfig:
    if args.local_only and args.global_only:
        raise UsageError("--local-only and --global-only are mutually exclusive")
    overrides = {}
    for key in ("seed", "window", "tau", "lam", "dim", "epochs", "patience", "lr", "noise_sigma", "use_cl", "use_eatt", "online"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.local_only:
        overrides["use_global"] = False
    if args.global_only:
        overrides["use_local"] = False
    extra = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        extra[k.strip()] = v.strip()
    preset = args.preset
    if preset is None and getattr(args, "dataset", None):
        preset = Path(args.dataset).name
    try:
        return load_config(args.config, {**extra, **overrides}, dataset=preset)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------- commands

def cmd_prepare(args) -> int:
    src = Path(args.dataset)
    out = Path(args.out)
    files = [src / f for f in ("stat.txt", "train.txt", "valid.txt", "test.txt")]
    digest = _file_digest([f for f in files if f.exists()])
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text(encoding="utf-8"))
        if old.get("dataset", {}).get("digest") == digest and (out / CACHE_FILE).exists():
            logger.info("cache for %s is current; reusing %s", src, out)
            print(json.dumps(old["stats"]))
            return 0
    kg = load_dataset(src, args.granularity)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"num_entities": kg.num_entities, "num_relations": kg.num_relations, "granularity": kg.granularity, "name": kg.name}
    np.savez(out / CACHE_FILE, meta=json.dumps(meta), **kg.splits)
    stats = kg.stats().as_row()
    (out / "stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    dataset = {**dataset_fingerprint(str(src), kg, None), "digest": digest}
    manifest = write_manifest(out, "prepare", None, dataset, [CACHE_FILE, "stats.json"])
    manifest["stats"] = stats
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(stats))
    return 0


def _train_and_eval(kg: TemporalKG, cfg: TrainConfig, out: Path | None = None) -> dict[str, MetricsReport]:
    ctx = GraphContext(kg)
    state = train(kg, cfg, ctx, log_path=(out / "train_log.jsonl") if out else None)
    if out:
        save_checkpoint(state, out / "checkpoint.pt")
    reports = {}
    if ctx.times("valid"):
        reports["valid"] = evaluate_split(state.model, ctx, "valid", cfg)
    if cfg.online:
        _, reports["test"] = online_train(kg, cfg, state, ctx)
    else:
        reports["test"] = evaluate_split(state.model, ctx, "test", cfg)
    return reports


def _write_reports(out: Path, reports: dict[str, MetricsReport], stem: str = "metrics") -> list[str]:
    (out / f"{stem}.json").write_text(json.dumps({k: v.as_dict() for k, v in reports.items()}, indent=2) + "\n", encoding="utf-8")
    (out / f"{stem}.csv").write_text(reports_to_csv(reports), encoding="utf-8")
    (out / f"{stem}.md").write_text(reports_to_markdown(reports), encoding="utf-8")
    return [f"{stem}.json", f"{stem}.csv", f"{stem}.md"]


def _from_manifest(args) -> TrainConfig:
    """Take config, dataset and time split from an earlier run's manifest."""
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    if not manifest.get("config"):
        raise UsageError(f"{args.manifest}: manifest has no config snapshot")
    args.dataset = manifest["dataset"]["path"]
    args.time_split = manifest["dataset"].get("time_split")
    try:
        return TrainConfig.from_dict(manifest["config"])
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args) -> int:
    if args.manifest:
        cfg = _from_manifest(args)
    elif args.dataset:
        cfg = config_from_args(args)
    else:
        raise UsageError("train needs --dataset or --manifest")
    kg = resolve_dataset(args.dataset, args.time_split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "train_log.jsonl").unlink(missing_ok=True)
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    reports = _train_and_eval(kg, cfg, out)
    name = args.name or "LogCL"
    named = {name: reports["test"]}
    artifacts = ["checkpoint.pt", "train_log.jsonl", "config.txt"] + _write_reports(out, named)
    if "valid" in reports:
        artifacts += _write_reports(out, {name: reports["valid"]}, "valid_metrics")
    write_manifest(out, "train", cfg, dataset_fingerprint(args.dataset, kg, args.time_split), artifacts)
    print(reports_to_markdown(named), end="")
    return 0


def cmd_eval(args) -> int:
    state = load_checkpoint(args.checkpoint)
    cfg = state.config
    if args.online:
        cfg = cfg.replace(online=True)
    kg = resolve_dataset(args.dataset, args.time_split)
    ctx = GraphContext(kg)
    if cfg.online:
        _, report = online_train(kg, cfg, state, ctx)
    else:
        report = evaluate_split(state.model, ctx, args.split, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    named = {args.name or "LogCL": report}
    artifacts = _write_reports(out, named)
    write_manifest(out, "eval", cfg, dataset_fingerprint(args.dataset, kg, args.time_split), artifacts)
    print(reports_to_markdown(named), end="")
    return 0


def cmd_ablate(args) -> int:
    base = config_from_args(args)
    kg = resolve_dataset(args.dataset, args.time_split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = args.variants.split(",") if args.variants else list(ABLATIONS)
    unknown = [v for v in variants if v not in ABLATIONS]
    if unknown:
        raise UsageError(f"unknown variant(s) {unknown}; choose from {list(ABLATIONS)}")
    reports = {}
    for name in variants:
        cfg = base.replace(**ABLATIONS[name])
        logger.info("ablation variant %s", name)
        reports[name] = _train_and_eval(kg, cfg)["test"]
    artifacts = _write_reports(out, reports, "ablation")
    write_manifest(out, "ablate", base, dataset_fingerprint(args.dataset, kg, args.time_split), artifacts)
    print(reports_to_markdown(reports), end="")
    return 0


def cmd_noise_sweep(args) -> int:
    base = config_from_args(args)
    kg = resolve_dataset(args.dataset, args.time_split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        sigmas = [float(x) for x in args.sigmas.split(",")] if args.sigmas else list(DEFAULT_SIGMAS)
    except ValueError:
        raise UsageError("--sigmas expects comma-separated numbers") from None
    rows = []
    for name in ("LogCL", "LogCL-w/o-cl"):
        for sigma in sigmas:
            for k in range(args.seeds):
                cfg = base.replace(**ABLATIONS[name], noise_sigma=sigma, seed=base.seed + k)
                rep = _train_and_eval(kg, cfg)["test"]
                rows.append({"model": name, "sigma": sigma, "seed": cfg.seed, "mrr": rep.mrr, "hits@1": rep.hits[1]})
                logger.info("%s sigma=%.2f seed=%d mrr=%.4f", name, sigma, cfg.seed, rep.mrr)
    with open(out / "noise.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["model", "sigma", "seed", "mrr", "hits@1"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    summary = summarize_noise(rows)
    with open(out / "noise_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["model", "sigma", "mrr", "hits@1", "mrr_drop"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(summary)
    artifacts = ["noise.csv", "noise_summary.csv"]
    if args.plot:
        if _plot_noise(summary, out / "noise.png"):
            artifacts.append("noise.png")
    write_manifest(out, "noise-sweep", base, dataset_fingerprint(args.dataset, kg, args.time_split), artifacts)
    for row in summary:
        print(f"{row['model']:<14} sigma={row['sigma']:<5} MRR={row['mrr']:.4f} drop={row['mrr_drop']:+.4f}")
    return 0


def summarize_noise(rows: list[dict]) -> list[dict]:
    """Seed-averaged MRR/Hits@1 per (model, sigma) and the MRR drop from sigma = 0."""
    groups: dict[tuple[str, float], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["model"], row["sigma"]), []).append(row)
    out = []
    for (model, sigma), items in sorted(groups.items()):
        out.append({
            "model": model,
            "sigma": sigma,
            "mrr": float(np.mean([r["mrr"] for r in items])),
            "hits@1": float(np.mean([r["hits@1"] for r in items])),
        })
    clean = {r["model"]: r["mrr"] for r in out if r["sigma"] == 0.0}
    for r in out:
        r["mrr_drop"] = clean[r["model"]] - r["mrr"] if r["model"] in clean else float("nan")
    return out


def _plot_noise(summary: list[dict], path: Path) -> bool:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib not installed; skipping figure")
        return False
    fig, ax = plt.subplots(figsize=(4, 3))
    for model in sorted({r["model"] for r in summary}):
        pts = [(r["sigma"], r["mrr"]) for r in summary if r["model"] == model]
        ax.plot(*zip(*pts), marker="o", label=model)
    ax.set_xlabel("noise sigma")
    ax.set_ylabel("MRR")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def cmd_report(args) -> int:
    merged: dict[str, MetricsReport] = {}
    for run in args.runs:
        run = Path(run)
        found = [p for p in (run / "metrics.json", run / "ablation.json") if p.exists()]
        if not found:
            raise FileNotFoundError(f"{run}: no metrics.json or ablation.json")
        for path in found:
            for name, d in json.loads(path.read_text(encoding="utf-8")).items():
                key = name if name not in merged else f"{name} ({run.name})"
                merged[key] = MetricsReport.from_dict(d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = _write_reports(out, merged, "report")
    write_manifest(out, "report", None, {"runs": [str(Path(r).resolve()) for r in args.runs]}, artifacts)
    print(reports_to_markdown(merged), end="")
    return 0


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="logcl", description="Temporal KG extrapolation with local-global contrastive learning")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("prepare", help="validate and cache a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--granularity", type=int)
    sp.set_defaults(func=cmd_prepare)

    for name, func, helptext in (
        ("train", cmd_train, "train and evaluate one configuration"),
        ("ablate", cmd_ablate, "run the ablation variant grid"),
        ("noise-sweep", cmd_noise_sweep, "LogCL vs w/o-cl under Gaussian input noise"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--dataset", required=name != "train")
        sp.add_argument("--out", required=True)
        sp.add_argument("--time-split", help="re-split by snapshot index: TRAIN_END,VALID_END,TEST_END")
        _add_config_flags(sp)
        sp.set_defaults(func=func)
        if name == "train":
            sp.add_argument("--name", help="row label in the metrics table")
            sp.add_argument("--manifest", help="repeat the run recorded in this manifest.json")
        if name == "ablate":
            sp.add_argument("--variants", help=f"comma-separated subset of {list(ABLATIONS)}")
        if name == "noise-sweep":
            sp.add_argument("--sigmas", help="comma-separated noise standard deviations")
            sp.add_argument("--seeds", type=int, default=1)
            sp.add_argument("--plot", action="store_true")

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split", default="test", choices=SPLITS)
    sp.add_argument("--time-split")
    sp.add_argument("--online", action="store_true")
    sp.add_argument("--name")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("report", help="merge metrics from run directories")
    sp.add_argument("runs", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"logcl: usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"logcl: usage error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, TrainingDiverged, FileNotFoundError, OSError, RuntimeError, ValueError) as exc:
        print(f"logcl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
