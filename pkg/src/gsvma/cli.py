"""Command line driver: ``gsvma preprocess|cv|gsvma|report``.

Settings come from built-in defaults, then an optional YAML ``--config``
file (keys spelled like the long flags, dashes or underscores), then flags.
Exit status is 0 on success, 1 when a computation fails and 2 for usage,
configuration or input-data errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dataset import (GLOBAL, PER_FOLD, DatasetError, EncodedDataset, encode, load_schema,
                      normalize, parse_csv, stratified_kfold, synth_generate,
                      z_alizadeh_sani_schema)
from .evaluation import (NO_NORMALIZATION, REPORT_FORMAT, REPORT_VERSION, EvalReport,
                         EvaluationError, FoldError, cross_validate, table_csv, table_row)
from .genetic import (GaConfig, GeneticError, expand_genes, gene_groups, mask_from_names,
                      preset_mask, run_ga)
from .kernels import ANOVA, LINEAR, RBF, KernelError, KernelSpec
from .plotting import plot_fitness, plot_generation_metrics, plot_roc
from .svm import SvmConfig, SvmError, save_model, train

METHODS = {
    "svm-anova": ("SVM with Anova", ANOVA),
    "svm-linear": ("Linear SVM", LINEAR),
    "svm-rbf": ("LibSVM with RBF", RBF),
    "gsvma": ("GSVMA", ANOVA),
}
BASELINES = ("svm-anova", "svm-linear", "svm-rbf")

DEFAULTS = {
    "dataset": None,
    "schema": None,
    "out": "out",
    "method": "svm-anova",
    "normalize": PER_FOLD,
    "kernel_gamma": None,
    "kernel_sigma": 1.0,
    "kernel_degree": 1,
    "c": 1.0,
    "c_grid": None,
    "tolerance": 1e-3,
    "max_pair_updates": 10_000_000,
    "seed": 0,
    "fold_seed": 0,
    "folds": 10,
    "population": 50,
    "generations": 10,
    "crossover_p": 0.75,
    "mutation_p": 1.0,
    "elitism": 1,
    "ga_fold_seed": 1,
    "ga_folds": 10,
    "gene_level": "column",
    "full_mask_injection": True,
    "ga_mask": None,
    "threads": 1,
    "expect_sha256": None,
    "save_model": None,
}


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file of settings; flags override it")
    p.add_argument("--dataset", help="input CSV, or synth:n=300,features=10,informative=2,noise=0,seed=0")
    p.add_argument("--schema", help="YAML feature schema (default: shipped Z-Alizadeh Sani schema)")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--normalize", choices=(GLOBAL, PER_FOLD, NO_NORMALIZATION))
    p.add_argument("--threads", type=int, help="worker threads for fitness evaluation")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", help="svm-anova | svm-linear | svm-rbf | gsvma")
    p.add_argument("--kernel-gamma", type=float, help="RBF gamma (default 1/n_features)")
    p.add_argument("--kernel-sigma", type=float, help="ANOVA sigma (default 1)")
    p.add_argument("--kernel-degree", type=int, help="ANOVA/polynomial degree (default 1)")
    p.add_argument("--c", type=float, help="SVM penalty C (default 1)")
    p.add_argument("--tolerance", type=float, help="SMO stopping gap (default 1e-3)")
    p.add_argument("--seed", type=int, help="GA seed (default 0)")
    p.add_argument("--fold-seed", type=int, help="seed of the reporting fold plan (default 0)")
    p.add_argument("--folds", type=int, help="number of CV folds (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsvma", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gsvma {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="validate, encode and scale a dataset")
    _add_common(p)
    p.add_argument("--dry-run", action="store_true", help="validate only; write nothing")
    p.add_argument("--expect-sha256", help="fail unless the input file has this SHA-256")

    p = sub.add_parser("cv", help="cross-validate a kernel SVM baseline on all features")
    _add_common(p)
    _add_model(p)
    p.add_argument("--c-grid", help="comma-separated C values to sweep, e.g. 0.1,1,10")
    p.add_argument("--save-model", help="also train on every row and save the model here")

    p = sub.add_parser("gsvma", help="GA feature selection, then CV of the selected mask")
    _add_common(p)
    _add_model(p)
    p.add_argument("--population", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--crossover-p", type=float)
    p.add_argument("--mutation-p", type=float)
    p.add_argument("--elitism", type=int, help="elite count; 0 disables elitism")
    p.add_argument("--ga-fold-seed", type=int, help="seed of the GA's fitness fold plan (default 1)")
    p.add_argument("--ga-folds", type=int, help="folds used inside the fitness function (default 10)")
    p.add_argument("--gene-level", choices=("column", "feature"))
    p.add_argument("--no-full-mask-injection", dest="full_mask_injection",
                   action="store_const", const=False, default=None)
    p.add_argument("--ga-mask", help="skip the GA: preset name (paper35) or file of column names")

    p = sub.add_parser("report", help="merge report JSON files into one comparison table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise UsageError(f"cannot read config {cfg_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"config {cfg_path} must be a mapping")
        for key, value in loaded.items():
            norm = str(key).replace("-", "_")
            if norm not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r} in {cfg_path}")
            settings[norm] = value
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            settings[key] = value
    return settings


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_synth(spec: str) -> dict:
    params = {"n": 300, "features": 10, "informative": 2, "noise": 0.0, "seed": 0}
    body = spec.split(":", 1)[1]
    for part in filter(None, body.split(",")):
        key, _, value = part.partition("=")
        if key not in params:
            raise UsageError(f"unknown synth parameter {key!r}")
        try:
            params[key] = float(value) if key == "noise" else int(value)
        except ValueError:
            raise UsageError(f"bad synth parameter {part!r}") from None
    return params


def load_dataset(settings: dict) -> tuple[EncodedDataset, dict]:
    """Encoded (unscaled) dataset plus provenance for summaries."""
    source = settings["dataset"]
    if not source:
        raise UsageError("--dataset is required")
    source = str(source)
    if source.startswith("synth:"):
        p = _parse_synth(source)
        data, informative = synth_generate(p["n"], p["features"], p["informative"], p["noise"], p["seed"])
        return data, {"source": source, "informative": [int(i) for i in informative]}
    if not os.path.exists(source):
        raise UsageError(f"dataset not found: {source}")
    schema = load_schema(settings["schema"]) if settings["schema"] else z_alizadeh_sani_schema()
    digest = _sha256(source)
    expected = settings.get("expect_sha256")
    if expected and expected.lower() != digest:
        raise UsageError(f"checksum mismatch for {source}: got {digest}, expected {expected}")
    raw = parse_csv(source, schema)
    return encode(raw), {"source": os.path.basename(source), "sha256": digest}


def svm_config(settings: dict, method: str, C: float | None = None) -> SvmConfig:
    family = METHODS[method][1]
    if family == RBF:
        kernel = KernelSpec(RBF, gamma=settings["kernel_gamma"])
    elif family == ANOVA:
        kernel = KernelSpec(ANOVA, degree=settings["kernel_degree"], sigma=settings["kernel_sigma"])
    else:
        kernel = KernelSpec(LINEAR)
    return SvmConfig(C=float(settings["c"] if C is None else C), kernel=kernel,
                     tolerance=float(settings["tolerance"]),
                     max_pair_updates=int(settings["max_pair_updates"]))


def _c_values(settings: dict) -> list[float]:
    grid = settings["c_grid"]
    if grid is None:
        return [float(settings["c"])]
    if isinstance(grid, str):
        try:
            return [float(v) for v in grid.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"bad --c-grid {grid!r}") from None
    return [float(v) for v in grid]


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _dump_json(path: Path, obj) -> None:
    _write(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _summary(data: EncodedDataset, provenance: dict, policy: str) -> dict:
    return {
        "n_samples": int(data.n_samples),
        "n_positive": int(np.sum(data.labels == 1)),
        "n_negative": int(np.sum(data.labels == -1)),
        "n_columns": len(data.columns),
        "columns": data.column_names,
        "normalize": policy,
        **provenance,
    }


def cmd_preprocess(settings: dict, dry_run: bool = False) -> int:
    data, provenance = load_dataset(settings)
    policy = settings["normalize"]
    written = normalize(data, GLOBAL) if policy == GLOBAL else data
    summary = _summary(data, provenance, policy if policy == GLOBAL else NO_NORMALIZATION)
    print(f"{summary['n_samples']} samples, {summary['n_positive']} positive, "
          f"{summary['n_negative']} negative, {summary['n_columns']} encoded columns")
    if dry_run:
        return 0
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "encoded.csv", "w", encoding="utf-8", newline="") as fh:
        written.to_csv(fh)
    _dump_json(out / "summary.json", summary)
    return 0


def _write_eval(out: Path, tag: str, method: str, report: EvalReport, title: str) -> None:
    label = METHODS[method][0]
    _write(out / f"report_{tag}.json", report.to_json())
    _write(out / f"table_{tag}.csv", table_csv([table_row(label, report)]))
    plot_roc({label: report.roc_points}, out / f"roc_{tag}.svg", title)


def cmd_cv(settings: dict) -> int:
    method = settings["method"]
    if method not in BASELINES:
        raise UsageError(f"cv --method must be one of {', '.join(BASELINES)}; got {method!r}")
    cs = _c_values(settings)
    configs = [svm_config(settings, method, C) for C in cs]
    data, provenance = load_dataset(settings)
    folds = stratified_kfold(data.labels, int(settings["folds"]), int(settings["fold_seed"]))
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    full = np.ones(len(data.columns), dtype=bool)
    rows = []
    for C, cfg in zip(cs, configs):
        report = cross_validate(data, full, folds, cfg, settings["normalize"])
        report.config.update(method=method, dataset=provenance)
        tag = method if len(cs) == 1 else f"{method}_C{C:g}"
        _write_eval(out, tag, method, report, f"{METHODS[method][0]} (C={C:g})")
        rows.append(table_row(f"{METHODS[method][0]} C={C:g}", report))
        print(f"{method} C={C:g}: accuracy {report.accuracy:.4f} auc {report.auc:.4f}")
    if len(cs) > 1:
        _write(out / f"c_grid_{method}.csv", table_csv(rows))
    if settings["save_model"]:
        scaled = normalize(data, GLOBAL) if settings["normalize"] != NO_NORMALIZATION else data
        model = train(scaled.matrix, scaled.labels, configs[-1])
        save_model(model, settings["save_model"])
    return 0


def _load_mask(spec: str, data: EncodedDataset) -> np.ndarray:
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            names = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
        return mask_from_names(names, data.columns)
    return preset_mask(spec, data.columns)


def cmd_gsvma(settings: dict) -> int:
    svm_cfg = svm_config(settings, "gsvma")
    ga_cfg = GaConfig(
        population_size=int(settings["population"]),
        generations=int(settings["generations"]),
        crossover_p=float(settings["crossover_p"]),
        mutation_p=float(settings["mutation_p"]),
        elitism=int(settings["elitism"]),
        seed=int(settings["seed"]),
        fold_seed=int(settings["ga_fold_seed"]),
        inner_cv_folds=int(settings["ga_folds"]),
        svm=svm_cfg,
        inject_full_mask=bool(settings["full_mask_injection"]),
        gene_level=settings["gene_level"],
    )
    threads = int(settings["threads"])
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    data, provenance = load_dataset(settings)
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)

    if settings["ga_mask"]:
        mask = _load_mask(str(settings["ga_mask"]), data)
        history = None
    else:
        # fitness runs on min-max scaled data; the final report below applies --normalize
        ga_data = normalize(data, GLOBAL) if settings["normalize"] != NO_NORMALIZATION else data

        def flush(h):
            _write(out / "ga_history.json", h.to_json())

        best, history = run_ga(ga_data, ga_cfg, threads=threads, on_generation=flush)
        flush(history)
        mask = expand_genes(best.mask, gene_groups(data.columns, ga_cfg.gene_level),
                            len(data.columns))
        records = history.to_dict()["generations"]
        plot_fitness(records, out / "fitness.svg")
        plot_generation_metrics(records, out / "generation_metrics.svg")

    selected = [n for n, keep in zip(data.column_names, mask) if keep]
    _write(out / "selected_features.txt", "\n".join(selected) + "\n")
    folds = stratified_kfold(data.labels, int(settings["folds"]), int(settings["fold_seed"]))
    report = cross_validate(data, mask, folds, svm_cfg, settings["normalize"])
    report.config.update(method="gsvma", dataset=provenance,
                         ga=None if history is None else ga_cfg.to_dict(),
                         ga_mask=settings["ga_mask"])
    _write_eval(out, "gsvma", "gsvma", report, "GSVMA")
    if history is not None:
        print(f"GA best fitness {history.best.fitness:.4f} "
              f"({history.evaluations} evaluations, {history.cache_hits} cache hits)")
    print(f"gsvma: {len(selected)} columns, accuracy {report.accuracy:.4f} auc {report.auc:.4f}")
    return 0


def cmd_report(paths: list[str], out_dir: str) -> int:
    order = [METHODS[m][0] for m in METHODS]
    rows = []
    for path in paths:
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read report {path}: {exc}") from exc
        if d.get("format") != REPORT_FORMAT or d.get("version") != REPORT_VERSION:
            raise UsageError(f"{path}: report schema {d.get('format')!r} v{d.get('version')!r} "
                             f"is not {REPORT_FORMAT} v{REPORT_VERSION}")
        report = EvalReport.from_dict(d)
        method = report.config.get("method", "")
        label = METHODS[method][0] if method in METHODS else (method or Path(path).stem)
        rows.append(table_row(label, report))
    rank = {label: i for i, label in enumerate(order)}
    rows.sort(key=lambda r: rank.get(r[0], len(order)))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = table_csv(rows)
    _write(out / "comparison.csv", text)
    header = ["Method", "ACC(%)", "PPV(%)", "F-measure(%)", "Recall(%)", "Specificity(%)", "AUC(%)"]
    md = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    md += ["| " + " | ".join(r) + " |" for r in rows]
    _write(out / "comparison.md", "\n".join(md) + "\n")
    print("\n".join(md))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.reports, args.out or DEFAULTS["out"])
        settings = resolve_settings(args)
        if args.command == "preprocess":
            return cmd_preprocess(settings, args.dry_run)
        if args.command == "cv":
            return cmd_cv(settings)
        return cmd_gsvma(settings)
    except (UsageError, DatasetError, KernelError, GeneticError, SvmError, EvaluationError) as exc:
        print(f"gsvma: error: {exc}", file=sys.stderr)
        return 2
    except (FoldError, ArithmeticError, RuntimeError) as exc:
        print(f"gsvma: computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
