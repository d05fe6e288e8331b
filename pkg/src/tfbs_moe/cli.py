"""Command-line driver.

Every command writes one JSON manifest holding its resolved configuration;
passing that manifest back through ``--config`` reproduces the run.
Exit codes: 0 success, 1 runtime/data error, 2 usage/validation error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .attribution import METHODS, attribute, attribution_filename, class_score, export_attribution
from .expert import ExpertHyperparams, ExpertModel, ModelStateError, load_expert, save_expert, save_json, strip_head
from .nn_core import sigmoid
from .moe import file_sha256, load_moe, save_moe
from .seqdata import (SequenceError, SyntheticSpec, encode_sequence, generate_synthetic_dataset, load_dataset,
                      save_dataset, split_dataset)
from .stats import anova_to_dict, auc_score, bootstrap_auc, evaluation_report, one_way_anova, roc_auc
from .trainer import SearchSpace, TrainConfig, hyperparameter_search, train_expert, train_moe

MANIFEST_SCHEMA = 1


class UsageError(Exception):
    """Bad flags or values (exit 2)."""


class DataError(Exception):
    """Missing/invalid inputs or runtime failure (exit 1)."""


DEFAULTS = {
    "gen-data": {"motif": None, "n": 2000, "len": 100, "mutation_rate": 0.1, "include_reverse": False,
                 "split": "0.7,0.15,0.15", "out_dir": ".", "prefix": None, "seed": None},
    "train-expert": {"train": None, "val": None, "out": None, "name": None, "filters": 16, "width": 12,
                     "embed_dim": 32, "hidden_dim": 32, "lr": 0.01, "momentum": 0.98, "max_epochs": 500,
                     "patience": 5, "batch_size": 32, "search_budget": 0, "seed": None},
    "train-moe": {"experts": None, "train": None, "val": None, "out": None, "name": None, "lr": 0.01,
                  "momentum": 0.98, "max_epochs": 500, "patience": 10, "batch_size": 32, "seed": None},
    "evaluate": {"models": None, "test": None, "trials": 30, "out": None, "roc_dir": None, "seed": None,
                 "jobs": 1},
    "compare": {"report": None, "out": None},
    "explain": {"model": None, "sequence": None, "input": None, "method": "shiftsmooth", "N": 2,
                "out_dir": ".", "formats": "tsv,svg", "jobs": 1},
}
REQUIRED = {
    "gen-data": ["motif"],
    "train-expert": ["train", "val", "out"],
    "train-moe": ["experts", "train", "val", "out"],
    "evaluate": ["models", "test", "out"],
    "compare": ["report"],
    "explain": ["model"],
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tfbs-moe", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_, argument_default=S)
        sp.add_argument("--config", help="flat JSON config or a previous run manifest")
        return sp

    g = cmd("gen-data", "generate a motif-planted corpus split into train/val/test")
    g.add_argument("--motif")
    g.add_argument("--n", type=int, help="total examples (half positive)")
    g.add_argument("--len", type=int, help="sequence length")
    g.add_argument("--mutation-rate", dest="mutation_rate", type=float)
    g.add_argument("--include-reverse", dest="include_reverse", action="store_true")
    g.add_argument("--split", help="train,val,test fractions")
    g.add_argument("--out-dir", dest="out_dir")
    g.add_argument("--prefix")
    g.add_argument("--seed", type=int)

    t = cmd("train-expert", "train one expert (optionally after random search)")
    for flag in ("train", "val", "out", "name"):
        t.add_argument(f"--{flag}")
    for flag, typ in (("filters", int), ("width", int), ("embed-dim", int), ("hidden-dim", int), ("lr", float),
                      ("momentum", float), ("max-epochs", int), ("patience", int), ("batch-size", int),
                      ("search-budget", int), ("seed", int)):
        t.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=typ)

    m = cmd("train-moe", "train gate and classifier over frozen experts")
    m.add_argument("--experts", nargs="+")
    for flag in ("train", "val", "out", "name"):
        m.add_argument(f"--{flag}")
    for flag, typ in (("lr", float), ("momentum", float), ("max-epochs", int), ("patience", int),
                      ("batch-size", int), ("seed", int)):
        m.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=typ)

    e = cmd("evaluate", "paired bootstrap AUC over one test set")
    e.add_argument("--models", nargs="+")
    e.add_argument("--test")
    e.add_argument("--trials", type=int)
    e.add_argument("--out")
    e.add_argument("--roc-dir", dest="roc_dir")
    e.add_argument("--seed", type=int)
    e.add_argument("--jobs", type=int)

    c = cmd("compare", "one-way ANOVA over an evaluation report")
    c.add_argument("--report")
    c.add_argument("--out")

    x = cmd("explain", "attribution maps for one or more sequences")
    x.add_argument("--model")
    x.add_argument("--sequence")
    x.add_argument("--input", help="dataset file of sequences to explain")
    x.add_argument("--method", choices=METHODS)
    x.add_argument("--N", type=int, help="ShiftSmooth radius (default 2)")
    x.add_argument("--out-dir", dest="out_dir")
    x.add_argument("--formats")
    x.add_argument("--jobs", type=int)
    return p


def resolve_config(command: str, flags: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    if "config" in flags:
        try:
            doc = json.loads(Path(flags.pop("config")).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config: {exc}") from None
        if "config" in doc and isinstance(doc["config"], dict):
            if doc.get("command") not in (None, command):
                raise UsageError(f"manifest is for {doc['command']!r}, not {command!r}")
            doc = doc["config"]
        unknown = set(doc) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    cfg.update(flags)
    missing = [k for k in REQUIRED[command] if cfg.get(k) in (None, [])]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")
    if "seed" in cfg and cfg["seed"] is None:
        print("warning: no --seed given; using seed 0", file=sys.stderr)
        cfg["seed"] = 0
    return cfg


def write_manifest(path, command: str, cfg: dict, inputs=(), outputs=(), **extra) -> None:
    doc = {
        "schema_version": MANIFEST_SCHEMA,
        "tool_version": __version__,
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "inputs": {str(p): file_sha256(p) for p in inputs},
        "outputs": {str(p): file_sha256(p) for p in outputs},
    }
    doc.update(extra)
    save_json(doc, path)


def _load_data(path):
    try:
        return load_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except SequenceError as exc:
        raise DataError(str(exc)) from None


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc.strerror}") from None
    kind = doc.get("kind")
    if kind == "expert":
        return load_expert(path)
    if kind == "moe":
        return load_moe(path)
    raise DataError(f"{path}: unknown model kind {kind!r}")


def _stem(path) -> Path:
    p = Path(path)
    return p.with_name(p.name[:-len(p.suffix)] if p.suffix else p.name)


def cmd_gen_data(cfg: dict) -> int:
    try:
        fracs = [float(f) for f in str(cfg["split"]).split(",")]
    except ValueError:
        raise UsageError(f"bad --split {cfg['split']!r}") from None
    if len(fracs) != 3 or any(f < 0 for f in fracs) or not math.isclose(sum(fracs), 1.0, abs_tol=1e-9):
        raise UsageError("--split needs three nonnegative fractions summing to 1")
    n = int(cfg["n"])
    if n < 2:
        raise UsageError("--n must be at least 2")
    try:
        spec = SyntheticSpec(cfg["motif"], int(cfg["len"]), n // 2, n - n // 2, float(cfg["mutation_rate"]),
                             bool(cfg["include_reverse"]))
    except (SequenceError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    data = generate_synthetic_dataset(spec, cfg["seed"])
    sizes = [int(n * fracs[0]), int(n * fracs[1])]
    sizes.append(n - sum(sizes))
    parts = split_dataset(data, sizes, cfg["seed"] + 1)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = cfg["prefix"] or spec.motif.lower()
    outputs = []
    for split, part in zip(("train", "val", "test"), parts):
        path = out_dir / f"{prefix}_{split}.tsv"
        save_dataset(part, path, header=f"motif={spec.motif} split={split} seed={cfg['seed']}")
        outputs.append(path)
    write_manifest(out_dir / f"{prefix}_gen-data_manifest.json", "gen-data", cfg, outputs=outputs,
                   counts={s: len(p) for s, p in zip(("train", "val", "test"), parts)})
    print(f"wrote {', '.join(str(p) for p in outputs)}")
    return 0


def cmd_train_expert(cfg: dict) -> int:
    train, val = _load_data(cfg["train"]), _load_data(cfg["val"])
    try:
        hp = ExpertHyperparams(cfg["filters"], cfg["width"], cfg["embed_dim"], cfg["hidden_dim"], cfg["lr"],
                               cfg["momentum"])
        config = TrainConfig(cfg["lr"], cfg["momentum"], cfg["max_epochs"], cfg["patience"], cfg["batch_size"],
                             cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if hp.motif_width > train.seq_len:
        raise UsageError(f"--width {hp.motif_width} exceeds sequence length {train.seq_len}")
    name = cfg["name"] or _stem(cfg["out"]).name
    extra = {}
    if cfg["search_budget"] and cfg["search_budget"] > 0:
        hp, board = hyperparameter_search(SearchSpace(budget=cfg["search_budget"]), train, val, config, hp, name)
        best = max((e for e in board if e["val_auc"] is not None), key=lambda e: (e["val_auc"], -e["trial"]))
        config = TrainConfig(hp.learning_rate, hp.momentum, config.max_epochs, config.patience, config.batch_size,
                             config.seed + best["trial"])
        extra["leaderboard"] = board
        extra["selected_trial"] = best["trial"]
    model, hist = train_expert(train, val, hp, config, name)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_expert(model, out)
    hist_path = Path(f"{_stem(out)}_history.csv")
    hist_path.write_text(hist.to_csv(), encoding="utf-8")
    flags = hp.non_default_dims()
    if flags:
        extra["non_default"] = flags
    write_manifest(f"{_stem(out)}_manifest.json", "train-expert", cfg, inputs=[cfg["train"], cfg["val"]],
                   outputs=[out, hist_path], val_auc=hist.best_val_auc, best_epoch=hist.best_epoch,
                   epochs_run=hist.epochs, stop_reason=hist.stop_reason, hyperparams=asdict(hp), **extra)
    print(f"{name}: best val AUC {hist.best_val_auc:.4f} at epoch {hist.best_epoch} ({hist.stop_reason})")
    return 0


def cmd_train_moe(cfg: dict) -> int:
    paths = list(cfg["experts"])
    if len(paths) < 2:
        raise DataError("train-moe needs at least two expert files")
    experts = []
    for p in paths:
        ex = load_model(p)
        if not isinstance(ex, ExpertModel):
            raise DataError(f"{p} is not an expert model")
        experts.append(ex if ex.stripped else strip_head(ex))
    train, val = _load_data(cfg["train"]), _load_data(cfg["val"])
    try:
        config = TrainConfig(cfg["lr"], cfg["momentum"], cfg["max_epochs"], cfg["patience"], cfg["batch_size"],
                             cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    name = cfg["name"] or _stem(cfg["out"]).name
    try:
        model, hist = train_moe(experts, train, val, config, name)
    except ModelStateError as exc:
        raise DataError(str(exc)) from None
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_moe(model, out, paths)
    hist_path = Path(f"{_stem(out)}_history.csv")
    hist_path.write_text(hist.to_csv(), encoding="utf-8")
    write_manifest(f"{_stem(out)}_manifest.json", "train-moe", cfg, inputs=[*paths, cfg["train"], cfg["val"]],
                   outputs=[out, hist_path], val_auc=hist.best_val_auc, best_epoch=hist.best_epoch,
                   epochs_run=hist.epochs, stop_reason=hist.stop_reason)
    print(f"{name}: best val AUC {hist.best_val_auc:.4f} at epoch {hist.best_epoch} ({hist.stop_reason})")
    return 0


def cmd_evaluate(cfg: dict) -> int:
    if int(cfg["trials"]) < 2:
        raise UsageError("--trials must be at least 2")
    test = _load_data(cfg["test"])
    if not test.has_both_classes():
        raise DataError("test set needs both classes")
    models = [load_model(p) for p in cfg["models"]]
    names = [_stem(p).name for p in cfg["models"]]
    try:
        with ThreadPoolExecutor(max_workers=max(1, int(cfg["jobs"]))) as pool:
            scores = list(pool.map(lambda m: m.predict_proba(test.onehot), models))
    except ValueError as exc:
        raise DataError(str(exc)) from None
    results = bootstrap_auc(models, test, int(cfg["trials"]), cfg["seed"], names=names, scores=scores)
    report = evaluation_report(results, seed=cfg["seed"], trials=int(cfg["trials"]))
    for entry, s in zip(report["models"], scores):
        entry["full_test_auc"] = auc_score(s, test.labels)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_json(report, out)
    outputs = [out]
    if cfg["roc_dir"]:
        roc_dir = Path(cfg["roc_dir"])
        roc_dir.mkdir(parents=True, exist_ok=True)
        for name, s in zip(names, scores):
            path = roc_dir / f"{name}_roc.csv"
            path.write_text(roc_auc(s, test.labels)[0].to_csv(), encoding="utf-8")
            outputs.append(path)
    write_manifest(f"{_stem(out)}_manifest.json", "evaluate", cfg, inputs=[*cfg["models"], cfg["test"]],
                   outputs=outputs)
    for entry in report["models"]:
        print(f"{entry['name']}: mean AUC {entry['mean']:.4f} (sd {entry['std']:.4f}) over {cfg['trials']} trials")
    return 0


def format_anova(names, res) -> str:
    lines = [f"{'model':<24} {'n':>4} {'mean':>8} {'sd':>8} {'95% CI (t, per group)':>24}"]
    for name, g in zip(names, res.groups):
        lines.append(f"{name:<24} {g.n:>4d} {g.mean:>8.4f} {g.std:>8.4f}   [{g.ci_low:.4f}, {g.ci_high:.4f}]")
    F = "inf" if math.isinf(res.f_stat) else f"{res.f_stat:.6g}"
    verdict = "significant" if res.significant else "not significant"
    lines.append(f"F({res.df_between}, {res.df_within}) = {F}, p = {res.p_value:.6g} -> {verdict} at 0.05")
    if res.degenerate:
        lines.append("warning: zero within-group variance; F and p are degenerate")
    return "\n".join(lines)


def cmd_compare(cfg: dict) -> int:
    try:
        report = json.loads(Path(cfg["report"]).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report: {exc}") from None
    groups = report.get("models", [])
    if len(groups) < 2:
        raise DataError("compare needs a report with at least two models")
    res = one_way_anova([g["aucs"] for g in groups])
    names = [g["name"] for g in groups]
    print(format_anova(names, res))
    if res.degenerate:
        print("warning: degenerate ANOVA (zero within-group variance)", file=sys.stderr)
    if cfg["out"]:
        doc = {"schema_version": 1, "anova": anova_to_dict(res), "groups": [
            {"name": n, "n": g.n, "mean": g.mean, "std": g.std, "ci95": [g.ci_low, g.ci_high]}
            for n, g in zip(names, res.groups)]}
        save_json(doc, cfg["out"])
        write_manifest(f"{_stem(cfg['out'])}_manifest.json", "compare", cfg, inputs=[cfg["report"]],
                       outputs=[cfg["out"]])
    return 0


def cmd_explain(cfg: dict) -> int:
    if (cfg["sequence"] is None) == (cfg["input"] is None):
        raise UsageError("give exactly one of --sequence or --input")
    if int(cfg["N"]) < 0:
        raise UsageError("--N must be >= 0")
    formats = [f for f in str(cfg["formats"]).split(",") if f]
    if not formats or any(f not in ("tsv", "svg") for f in formats):
        raise UsageError("--formats takes a comma list of tsv, svg")
    model = load_model(cfg["model"])
    if cfg["sequence"] is not None:
        try:
            encode_sequence(cfg["sequence"])
        except SequenceError as exc:
            raise UsageError(str(exc)) from None
        texts = [cfg["sequence"].upper()]
    else:
        texts = list(_load_data(cfg["input"]).texts)
    method = cfg["method"]
    radius = int(cfg["N"]) if method == "shiftsmooth" else 0
    model_id = _stem(cfg["model"]).name
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    def run(text):
        x = encode_sequence(text).matrix
        try:
            amap = attribute(model, x, method, radius)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        return amap, class_score(model, x)

    with ThreadPoolExecutor(max_workers=max(1, int(cfg["jobs"]))) as pool:
        maps = list(pool.map(run, texts))
    outputs = []
    for i, (text, (amap, s_c)) in enumerate(zip(texts, maps)):
        amap = replace(amap, model_id=model_id)
        for fmt in formats:
            name = attribution_filename(amap, fmt)
            if len(texts) > 1:
                name = name[:-len(fmt) - 1] + f"_{i}.{fmt}"
            outputs.append(export_attribution(amap, text, out_dir / name, fmt))
        prob = sigmoid(s_c)
        print(f"sequence {i}: y_hat={prob:.6f} S_c={s_c:.6f}")
    manifest = out_dir / f"{model_id}_{method}_N{radius}_manifest.json"
    inputs = [cfg["model"]] + ([cfg["input"]] if cfg["input"] else [])
    write_manifest(manifest, "explain", cfg, inputs=inputs, outputs=outputs)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-expert": cmd_train_expert,
    "train-moe": cmd_train_moe,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "explain": cmd_explain,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    try:
        cfg = resolve_config(args.command, flags)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ModelStateError, SequenceError, ValueError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
