"""Command-line entry point.

Subcommands: gen-data, train, eval, gradcheck, analyze-rms, ablate, sweep,
augment-preview. Exit codes: 0 success, 1 check failure, 2 usage/config
error, 3 I/O error. Randomized commands echo their effective configuration
as JSON next to their outputs so any run can be replayed.
"""

from __future__ import annotations

import argparse
import dataclasses
import secrets
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as dat
from . import gradcheck as gc
from .analysis import (
    ablation_compare,
    ablation_table_text,
    data_size_sweep,
    rms_analysis_rows,
    rms_split_analysis,
    sweep_rows,
)
from .checkpoint import load_checkpoint
from .data import (
    Dataset,
    GeneratorConfig,
    SpeechSeriesConfig,
    compute_class_weights,
    default_feature_map,
    load_dataset,
    load_feature_map,
    load_series,
    map_to_feature,
    parse_generation_spec,
    positive_class_weight,
    save_dataset,
    save_series,
    synthesize_dataset,
    synthesize_speech_series,
)
from .errors import ContractError, UndefinedMetricError, UndefinedTestError
from .inference import Ensemble, evaluate_classification, evaluate_speech
from .io_utils import read_json, write_csv, write_json
from .losses import BCE_SINGLE_LOGIT, WEIGHTED_CROSS_ENTROPY, LossConfig
from .model import ModelConfig, phoneme_preset, speech_preset, tiny_preset
from .optim import TrainConfig
from .signals import (
    AugmentConfig,
    BandSpec,
    MegWindow,
    augment_window,
    design_bandstop,
    filter_response_table,
    rms_energy,
)
from .training import (
    SpeechDetectionTask,
    TrainingProtocol,
    WindowClassificationTask,
    multi_seed,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _entropy_seed() -> int:
    return secrets.randbits(31)


# ---------------------------------------------------------------------------
# run configuration


def _preset_model(task: str, preset: str) -> ModelConfig:
    base_task = "speech" if task == "speech" else "phoneme"
    if preset == "paper":
        return speech_preset() if base_task == "speech" else phoneme_preset()
    if preset == "tiny":
        return tiny_preset(base_task)
    raise ContractError(f"unknown preset {preset!r} (use tiny|paper)")


def load_run_config(path: str | None, overrides: dict) -> dict:
    doc = dict(read_json(path)) if path else {}
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    doc.setdefault("task", "phoneme")
    doc.setdefault("preset", "tiny")
    doc.setdefault("seeds", [0])
    doc.setdefault("out_dir", "runs/out")
    if not isinstance(doc.get("data"), dict):
        raise ContractError("run config needs a 'data' object mapping splits to paths")
    return doc


def _model_config_from_run(run: dict, dataset_hint: Dataset | None, binary: bool) -> ModelConfig:
    cfg = _preset_model(run["task"] if not run["task"].startswith("feature") else "phoneme", run["preset"])
    fields = dict(run.get("model", {}))
    if dataset_hint is not None:
        fields.setdefault("in_channels", dataset_hint.channels)
        fields.setdefault("window_samples", dataset_hint.samples)
        if not binary:
            fields.setdefault("n_classes", dataset_hint.n_classes)
    if binary:
        fields["head"] = "single_logit"
        fields["n_classes"] = 1
    return replace(cfg, **fields)


def _train_config_from_run(run: dict) -> TrainConfig:
    return TrainConfig(**run.get("train", {}))


def _augment_from_run(run: dict) -> AugmentConfig | None:
    doc = run.get("augment")
    if doc is None:
        return None
    if doc is True:
        return AugmentConfig()
    fields = dict(doc)
    if "bands" in fields:
        fields["bands"] = tuple(BandSpec(**b) for b in fields["bands"])
    if "enabled" in fields:
        if not fields.pop("enabled"):
            return None
    return AugmentConfig(**fields)


def build_protocol(run: dict) -> TrainingProtocol:
    """Assemble model/loss/task from a run document (flags already merged)."""
    task_name = run["task"]
    data_paths = run["data"]
    if "train" not in data_paths or "validation" not in data_paths:
        raise ContractError("run config data needs 'train' and 'validation' paths")

    if task_name == "speech":
        train_series, train_labels, rate = load_series(data_paths["train"])
        val_series, val_labels, _ = load_series(data_paths["validation"])
        fields = dict(run.get("model", {}))
        fields.setdefault("in_channels", train_series.shape[0])
        model_cfg = replace(_preset_model("speech", run["preset"]), **fields)
        loss_doc = dict(run.get("loss", {}))
        loss_cfg = LossConfig(
            kind=BCE_SINGLE_LOGIT,
            label_smoothing=loss_doc.get("label_smoothing", 0.1),
            positive_weight=loss_doc.get("positive_weight"),
        )
        augment = _augment_from_run(run) if "augment" in run else AugmentConfig()
        stride = int(run.get("stride", 60))

        def task_factory():
            return SpeechDetectionTask(
                train_series,
                train_labels,
                val_series,
                val_labels,
                window_samples=model_cfg.window_samples,
                stride=stride,
                augment=augment,
                sample_rate_hz=rate,
            )

        test_eval = None
        if "test" in data_paths:
            test_series, test_labels, test_rate = load_series(data_paths["test"])

            def test_eval(model):  # noqa: F811
                report, _ = evaluate_speech(
                    model,
                    test_series,
                    test_labels,
                    stride=int(run.get("eval_stride", 1)),
                    min_run=int(run.get("smooth_min_run", 60)),
                    sample_rate_hz=test_rate,
                )
                return report.to_dict()

        return TrainingProtocol(model_cfg, _train_config_from_run(run), loss_cfg, task_factory, test_eval)

    # window-classification family: phoneme or feature:<name>
    train_ds = load_dataset(data_paths["train"], split="train")
    val_ds = load_dataset(data_paths["validation"], split="validation")
    test_ds = load_dataset(data_paths["test"], split="test") if "test" in data_paths else None

    binary = task_name.startswith("feature")
    if binary:
        feature = task_name.split(":", 1)[1] if ":" in task_name else run.get("feature")
        if not feature:
            raise ContractError("feature task needs a feature name (task: feature:<name>)")
        if str(feature).endswith(".json"):
            fm = load_feature_map(feature, train_ds.class_names)
        else:
            fm = default_feature_map(str(feature), train_ds.class_names)
        train_ds = map_to_feature(train_ds, fm)
        val_ds = map_to_feature(val_ds, fm)
        test_ds = map_to_feature(test_ds, fm) if test_ds is not None else None

    model_cfg = _model_config_from_run(run, train_ds, binary)
    loss_doc = dict(run.get("loss", {}))
    if binary:
        counts = train_ds.class_counts()
        pw = loss_doc.get("positive_weight")
        if pw is None and loss_doc.get("auto_positive_weight", True):
            pw = positive_class_weight(int(counts[1]), int(counts[0]))
        loss_cfg = LossConfig(
            kind=BCE_SINGLE_LOGIT,
            label_smoothing=loss_doc.get("label_smoothing", 0.1),
            positive_weight=pw,
        )
    else:
        weights = None
        if loss_doc.get("use_class_weights", True):
            weights = compute_class_weights(np.maximum(train_ds.class_counts(), 1))
        loss_cfg = LossConfig(
            kind=WEIGHTED_CROSS_ENTROPY,
            label_smoothing=loss_doc.get("label_smoothing", 0.0),
            class_weights=weights,
        )

    grouping = run.get("grouping") or {}
    group_size = grouping.get("group_size") if not binary else None
    eval_averaged = grouping.get("eval_averaged")
    freeze = bool(grouping.get("freeze_groups", False))
    augment = _augment_from_run(run)

    def task_factory():
        return WindowClassificationTask(
            train_ds,
            val_ds,
            group_size=group_size,
            augment=augment,
            eval_averaged=eval_averaged,
            freeze_groups=freeze,
            binary=binary,
        )

    test_eval = None
    if test_ds is not None:

        def test_eval(model):  # noqa: F811
            report, _ = evaluate_classification(
                model,
                test_ds,
                averaged=bool(grouping.get("test_averaged", False)),
                group_size=group_size or 100,
            )
            return report.to_dict()

    return TrainingProtocol(model_cfg, _train_config_from_run(run), loss_cfg, task_factory, test_eval)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    seed = args.seed if args.seed is not None else _entropy_seed()
    print(f"seed: {seed}")
    try:
        doc = read_json(args.spec)
    except OSError as exc:
        print(f"cannot read spec: {exc}", file=sys.stderr)
        return EXIT_IO
    spec = parse_generation_spec(doc)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"seed": seed, "task": spec["task"], "splits": {}}
    for split, cfg in spec["splits"].items():
        if spec["task"] == "windows":
            ds = synthesize_dataset(cfg, seed, split=split)
            path = out_dir / f"{split}.megw"
            save_dataset(path, ds)
            counts = ds.class_counts().tolist()
            rms = [rms_energy(ds.window(i)) for i in range(len(ds))]
            stat = {
                "path": str(path),
                "windows": len(ds),
                "class_counts": counts,
                "rms_mean": float(np.mean(rms)) if rms else 0.0,
                "rms_std": float(np.std(rms)) if rms else 0.0,
            }
            print(f"{split}: {len(ds)} windows, class counts {counts}, "
                  f"rms {stat['rms_mean']:.4f} +/- {stat['rms_std']:.4f}")
        else:
            series, labels, = synthesize_speech_series(cfg, seed, split=split)[:2]
            path = out_dir / f"{split}.megs"
            save_series(path, series, labels, cfg.sample_rate_hz)
            stat = {
                "path": str(path),
                "length": int(series.shape[1]),
                "active_fraction": float(labels.mean()),
            }
            print(f"{split}: {series.shape[1]} samples, active fraction {labels.mean():.3f}")
        summary["splits"][split] = stat
    write_json(out_dir / "effective_config.json", {"seed": seed, "spec": doc})
    write_json(out_dir / "summary.json", summary)
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {
        "task": args.task,
        "preset": args.preset,
        "out_dir": args.out,
    }
    if args.seeds:
        overrides["seeds"] = [int(s) for s in args.seeds.split(",")]
    run = load_run_config(args.config, overrides)
    seeds = [int(s) for s in run["seeds"]]
    out_dir = Path(run["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    protocol = build_protocol(run)
    write_json(out_dir / "effective_config.json", _jsonable(run))
    entries = multi_seed(protocol, seeds, out_dir=out_dir, strict=args.strict, timing=args.timing)
    ok = [e for e in entries if e["status"] == "ok"]
    if not ok:
        print("every seed failed; see manifest", file=sys.stderr)
        return EXIT_CHECK_FAILED
    best = ok[0]
    print(f"best seed {best['seed']}: validation F1-macro {best['val_f1_macro']:.4f} "
          f"(epoch {best['best_epoch']})")
    return EXIT_OK


def cmd_eval(args) -> int:
    models = []
    for path in args.checkpoint:
        model, _meta = load_checkpoint(path)
        models.append(model)
    single = models[0]
    with open(args.data, "rb") as fh:
        magic = fh.read(4)
    out: dict
    if magic == dat.SERIES_MAGIC:
        series, labels, rate = load_series(args.data)
        if len(models) > 1:
            raise ContractError("series evaluation uses a single checkpoint")
        report, detail = evaluate_speech(
            single,
            series,
            labels,
            stride=args.stride,
            threshold=args.threshold,
            min_run=args.smooth_min_run,
            sample_rate_hz=rate,
        )
        out = {"kind": "speech", "stride": args.stride, "min_run": args.smooth_min_run,
               "metrics": report.to_dict()}
        if args.predictions:
            header = ["index", "probability", "raw_label", "smoothed_label"]
            rows = [
                [i, float(detail["sample_probabilities"][i]),
                 int(detail["raw_labels"][i]), int(detail["smoothed_labels"][i])]
                for i in range(len(detail["raw_labels"]))
            ]
            write_csv(args.predictions, header, rows)
    else:
        dataset = load_dataset(args.data)
        target = Ensemble(models) if len(models) > 1 else single
        n_out = models[0].config.n_outputs
        expected = 1 if dataset.n_classes == 2 and n_out == 1 else dataset.n_classes
        if n_out not in (expected, dataset.n_classes):
            raise ContractError(
                f"checkpoint head ({n_out}) incompatible with dataset classes ({dataset.n_classes})"
            )
        report, preds = evaluate_classification(
            target, dataset, averaged=args.averaged, group_size=args.group_size
        )
        out = {"kind": "ensemble" if len(models) > 1 else "single",
               "averaged": bool(args.averaged), "metrics": report.to_dict()}
        if args.predictions:
            if isinstance(target, Ensemble):
                member_probs = target.member_probs(dataset.data)
                votes = member_probs.argmax(axis=2)
                header = ["index", "predicted_class"] + [f"vote_{i}" for i in range(len(models))]
                rows = [
                    [i, int(preds[i])] + [int(votes[m, i]) for m in range(len(models))]
                    for i in range(len(preds))
                ]
            else:
                header = ["index", "predicted_class"]
                rows = [[i, int(preds[i])] for i in range(len(preds))]
            write_csv(args.predictions, header, rows)
    write_json(args.out, out)
    print(f"f1_macro: {out['metrics']['f1_macro']:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    fault = frozenset([args.inject_fault]) if args.inject_fault else frozenset()
    results = gc.run_all(include_model=not args.skip_model, fault_ops=fault)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{r.name:20s} max_rel_err={r.max_rel_error:.3e} {'PASS' if r.passed else 'FAIL'}")
    if args.out:
        write_json(args.out, {
            "results": [{"name": r.name, "max_rel_error": r.max_rel_error, "passed": r.passed}
                        for r in results],
            "passed": not failed,
        })
    if failed:
        print("failed: " + ", ".join(r.name for r in failed), file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_analyze_rms(args) -> int:
    datasets = {}
    for path in args.data:
        try:
            ds = load_dataset(path)
        except OSError as exc:
            print(f"cannot read {path}: {exc}", file=sys.stderr)
            return EXIT_IO
        datasets[ds.split if ds.split not in datasets else Path(path).stem] = ds
    analysis = rms_split_analysis(datasets, bins=args.bins)
    header, rows = rms_analysis_rows(analysis)
    write_csv(f"{args.out_prefix}_hist.csv", header, rows)
    summary = {
        s.name: {"mean": s.mean, "std": s.std, "bimodal": bool(s.bimodal), "windows": int(len(s.values))}
        for s in analysis.splits
    }
    write_json(f"{args.out_prefix}_summary.json", summary)
    for name, stat in summary.items():
        flag = " (bimodal)" if stat["bimodal"] else ""
        print(f"{name}: rms {stat['mean']:.4f} +/- {stat['std']:.4f}{flag}")
    return EXIT_OK


VARIANTS = ("no_weights", "fixed_groups", "no_norm", "batch_norm", "layer_norm", "no_augment")


def apply_variant(run: dict, variant: str) -> dict:
    """Named single-change ablations of a base run document."""
    import copy

    out = copy.deepcopy(run)
    if variant == "baseline":
        return out
    if variant == "no_weights":
        out.setdefault("loss", {})["use_class_weights"] = False
    elif variant == "fixed_groups":
        out.setdefault("grouping", {})["freeze_groups"] = True
    elif variant == "no_norm":
        out.setdefault("model", {})["input_norm"] = "none"
    elif variant == "batch_norm":
        out.setdefault("model", {})["input_norm"] = "batch"
    elif variant == "layer_norm":
        out.setdefault("model", {})["input_norm"] = "layer"
    elif variant == "no_augment":
        out["augment"] = None
    else:
        raise ContractError(f"unknown variant {variant!r}; known: {VARIANTS}")
    return out


def cmd_ablate(args) -> int:
    run = load_run_config(args.config, {"out": None})
    seeds = [int(s) for s in (args.seeds.split(",") if args.seeds else run["seeds"])]
    variants = ["baseline"] + [v.strip() for v in args.variants.split(",") if v.strip()]
    out_dir = Path(args.out or run["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "effective_config.json", _jsonable({**run, "variants": variants, "seeds": seeds}))
    scores: dict[str, list[float]] = {}
    for variant in variants:
        protocol = build_protocol(apply_variant(run, variant))
        if protocol.test_eval is None:
            raise ContractError("ablation needs a test split in the run config")
        entries = multi_seed(protocol, seeds, out_dir=out_dir / variant, timing=args.timing)
        by_seed = {e["seed"]: e for e in entries}
        if any(by_seed[s]["status"] != "ok" for s in seeds):
            raise ContractError(f"variant {variant} failed for some seeds; see manifest")
        scores[variant] = [by_seed[s]["test_metrics"]["f1_macro"] for s in seeds]
    rows = ablation_compare(scores, "baseline")
    text = ablation_table_text(rows)
    print(text)
    (out_dir / "ablation.txt").write_text(text + "\n", encoding="utf-8")
    header = ["variant", "mean", "std", "relative_delta", "wilcoxon_w", "p_value", "significant"]
    csv_rows = []
    for r in rows:
        csv_rows.append([
            r.name, r.mean, r.std,
            r.relative_delta if r.relative_delta is not None else "",
            r.wilcoxon.statistic if r.wilcoxon else "",
            r.wilcoxon.p_value if r.wilcoxon else "",
            int(r.significant),
        ])
    write_csv(out_dir / "ablation.csv", header, csv_rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    run = load_run_config(args.config, {"out": None})
    seeds = [int(s) for s in (args.seeds.split(",") if args.seeds else run["seeds"])]
    fractions = [float(f) for f in args.fractions.split(",")]
    out_dir = Path(args.out or run["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "effective_config.json",
               _jsonable({**run, "fractions": fractions, "seeds": seeds}))

    base_train = load_dataset(run["data"]["train"], split="train")

    def run_training(subset: Dataset, seed: int) -> float:
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            sub_path = Path(tmp) / "train.megw"
            save_dataset(sub_path, subset)
            sub_run = dict(run)
            sub_run["data"] = {**run["data"], "train": str(sub_path)}
            protocol = build_protocol(sub_run)
            if protocol.test_eval is None:
                raise ContractError("sweep needs a test split in the run config")
            entries = multi_seed(protocol, [seed])
            entry = entries[0]
            if entry["status"] != "ok":
                raise ContractError(f"training failed: {entry.get('error')}")
            return float(entry["test_metrics"]["f1_macro"])

    points = data_size_sweep(base_train, fractions, seeds, run_training)
    header, rows = sweep_rows(points)
    write_csv(out_dir / "sweep.csv", header, rows)
    write_json(out_dir / "sweep.json", [dataclasses.asdict(p) for p in points])
    for p in points:
        print(f"fraction {p.fraction:g}: n={p.n_train} F1 {p.mean:.4f} +/- {p.std:.4f}")
    return EXIT_OK


def cmd_augment_preview(args) -> int:
    seed = args.seed if args.seed is not None else _entropy_seed()
    print(f"seed: {seed}")
    ds = load_dataset(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = AugmentConfig(rng_seed=seed, time_mask_max_width=min(180, ds.samples // 2))
    rng = np.random.default_rng(seed)
    n = min(args.count, len(ds))
    for i in range(n):
        before = ds.window(i)
        after = augment_window(before, cfg, rng)
        header = [f"ch{c}" for c in range(before.channels)]
        write_csv(out_dir / f"window{i}_before.csv", header, before.data.T.tolist())
        write_csv(out_dir / f"window{i}_after.csv", header, after.data.T.tolist())
    for band in cfg.bands:
        cascade = design_bandstop(band, ds.sample_rate_hz, cfg.filter_order)
        freqs, mags = filter_response_table(cascade)
        write_csv(
            out_dir / f"bandstop_{band.name}.csv",
            ["frequency_hz", "magnitude_db"],
            list(zip(freqs.tolist(), mags.tolist())),
        )
    write_json(out_dir / "effective_config.json",
               {"seed": seed, "count": n, "augment": _jsonable(dataclasses.asdict(cfg))})
    print(f"wrote {n} before/after pairs and {len(cfg.bands)} response curves to {out_dir}")
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, float) and obj == float("inf"):
        return "inf"
    return obj


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="megdecode", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize dataset files from a JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one or more seeds from a run config")
    p.add_argument("--config", default=None)
    p.add_argument("--task", default=None, choices=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--out", default=None)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--timing", action="store_true",
                   help="record real wall time per epoch (breaks log determinism)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoint(s) on a dataset or recording")
    p.add_argument("--checkpoint", action="append", required=True,
                   help="repeat for a majority-vote ensemble")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--averaged", action="store_true")
    p.add_argument("--group-size", type=int, default=100)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--smooth-min-run", type=int, default=60)
    p.add_argument("--predictions", default=None, help="optional CSV output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every primitive")
    p.add_argument("--out", default=None)
    p.add_argument("--skip-model", action="store_true")
    p.add_argument("--inject-fault", default=None, metavar="OP",
                   help="test fixture: corrupt one primitive's gradient")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("analyze-rms", help="RMS histograms and stats across splits")
    p.add_argument("data", nargs="+")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--bins", type=int, default=30)
    p.set_defaults(func=cmd_analyze_rms)

    p = sub.add_parser("ablate", help="single-change variants vs baseline with signed-rank tests")
    p.add_argument("--config", required=True)
    p.add_argument("--variants", required=True, help="comma-separated variant names")
    p.add_argument("--seeds", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="data-size sweep over nested training subsets")
    p.add_argument("--config", required=True)
    p.add_argument("--fractions", required=True, help="ascending comma-separated fractions")
    p.add_argument("--seeds", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("augment-preview", help="write before/after windows and filter responses")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--count", type=int, default=3)
    p.set_defaults(func=cmd_augment_preview)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ContractError, UndefinedMetricError, UndefinedTestError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
