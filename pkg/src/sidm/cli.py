"""Command-line pipeline: prepare, train, evaluate, predict, explain, gradcheck.

Every command that produces files writes them under --out together with the
resolved run configuration (config.txt) and a manifest.txt naming each file,
so any run can be reproduced from its own output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus, explain, metrics, textprep
from .config import (
    ConfigError,
    RunConfig,
    apply_preset,
    parse_ratios,
    read_config,
    write_config,
)
from .container import ContainerError, ModelContainer
from .estimators import PaddedSequenceVectorizer
from .gradcheck import DEFAULT_TOL, run_suite
from .layers import CnnBiGruAttention, ModelConfig, ModelParams
from .numcore import RngState
from .trainer import train

SPLIT_NAMES = ("train", "validation", "test")


class CliError(RuntimeError):
    pass


def _finish_outputs(out_dir: Path, cfg: RunConfig, files: list[Path]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    config_path = out_dir / "config.txt"
    write_config(cfg, config_path)
    files = files + [config_path]
    manifest = out_dir / "manifest.txt"
    names = sorted(str(p.relative_to(out_dir)) for p in files)
    manifest.write_text("\n".join(names + ["manifest.txt"]) + "\n")


def _encode_splits(
    cfg: RunConfig, records: list[corpus.Record]
) -> tuple[dict[str, tuple[np.ndarray, np.ndarray]], PaddedSequenceVectorizer, corpus.DatasetSplit]:
    split = corpus.split(records, cfg.ratios, cfg.seed)
    vectorizer = PaddedSequenceVectorizer(vocab_size=cfg.vocab_size, max_len=cfg.max_len)
    vectorizer.fit([r.text for r in split.train])
    encoded = {}
    for name in SPLIT_NAMES:
        part = getattr(split, name)
        ids = vectorizer.transform([r.text for r in part])
        labels = np.array([r.label for r in part], dtype=np.int8)
        encoded[name] = (ids, labels)
    return encoded, vectorizer, split


def _load_prepared_dir(path: Path) -> tuple[dict[str, tuple[np.ndarray, np.ndarray]], dict[str, int], dict]:
    meta_path = path / "splits.json"
    if not meta_path.exists():
        raise CliError(f"{path} is not a prepared dataset directory (no splits.json)")
    meta = json.loads(meta_path.read_text())
    vocab_map = json.loads((path / "vocab.json").read_text())
    encoded = {}
    for name in SPLIT_NAMES:
        ids = np.load(path / f"{name}_ids.npy")
        labels = np.load(path / f"{name}_labels.npy")
        encoded[name] = (ids, labels)
    return encoded, vocab_map, meta


def _prepare_from_source(cfg: RunConfig) -> tuple[dict[str, tuple[np.ndarray, np.ndarray]], dict[str, int]]:
    """Accept either a directory written by `prepare` or a raw CSV."""
    if not cfg.data:
        raise CliError("no dataset configured; set `data` in the config or pass --data")
    source = Path(cfg.data)
    if source.is_dir():
        encoded, vocab_map, _ = _load_prepared_dir(source)
        return encoded, vocab_map
    records = corpus.load_csv(source)
    encoded, vectorizer, _ = _encode_splits(cfg, records)
    return encoded, vectorizer.vocabulary_.token_to_id


def cmd_prepare(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = corpus.load_csv(cfg.data)
    pos, neg = corpus.class_balance(records)
    encoded, vectorizer, split = _encode_splits(cfg, records)

    files = []
    vocab_path = out_dir / "vocab.json"
    vocab_path.write_text(
        json.dumps(vectorizer.vocabulary_.token_to_id, sort_keys=True, indent=0) + "\n"
    )
    files.append(vocab_path)
    for name in SPLIT_NAMES:
        ids, labels = encoded[name]
        for suffix, arr in (("ids", ids), ("labels", labels)):
            path = out_dir / f"{name}_{suffix}.npy"
            np.save(path, arr)
            files.append(path)
    splits_meta = {
        "seed": cfg.seed,
        "ratios": list(cfg.ratios),
        "total": len(records),
        "class_balance": {"positive": pos, "negative": neg},
        "sizes": {name: len(encoded[name][1]) for name in SPLIT_NAMES},
        "vocab_entries": len(vectorizer.vocabulary_.token_to_id),
        "max_len": cfg.max_len,
    }
    splits_path = out_dir / "splits.json"
    splits_path.write_text(json.dumps(splits_meta, sort_keys=True, indent=2) + "\n")
    files.append(splits_path)
    _finish_outputs(out_dir, cfg, files)

    print(f"total examples: {len(records)}")
    print(f"class balance: positive={pos} negative={neg}")
    sizes = split.sizes()
    print(f"split sizes: train={sizes[0]} validation={sizes[1]} test={sizes[2]}")
    return 0


def _history_digest(history_dict: dict) -> dict:
    blob = json.dumps(history_dict, sort_keys=True).encode()
    return {
        "best_epoch": history_dict["best_epoch"],
        "best_val_loss": min(history_dict["val_loss"]),
        "epochs_run": len(history_dict["val_loss"]),
        "stop_reason": history_dict["stop_reason"],
        "sha256": hashlib.sha256(blob).hexdigest(),
    }


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(cfg.out)
    encoded, vocab_map = _prepare_from_source(cfg)

    model_config = dataclasses.replace(
        cfg.model_config(), vocab_size=len(vocab_map) + 2
    )
    model = CnnBiGruAttention(model_config)
    params = model.init_params(RngState(cfg.seed).substream("init"))
    best_params, history = train(
        model,
        params,
        encoded["train"],
        encoded["validation"],
        cfg.train_config(),
        progress=True,
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    history_path = out_dir / "history.json"
    history_path.write_text(json.dumps(history.to_dict(), sort_keys=True, indent=2) + "\n")

    # `out` is where this run happened to write, not a property of the model;
    # leaving it out keeps identically seeded runs byte-identical
    run_record = {
        k: list(v) if isinstance(v, tuple) else v
        for k, v in cfg.to_mapping().items()
        if k != "out"
    }
    metadata = {
        "model_config": dataclasses.asdict(model_config),
        "run_config": run_record,
        "vocab": vocab_map,
        "seed": cfg.seed,
        "history_digest": _history_digest(history.to_dict()),
    }
    container = ModelContainer(metadata=metadata, tensors=best_params.to_dict())
    model_path = out_dir / "model.sidm"
    container.save(model_path)
    _finish_outputs(out_dir, cfg, [history_path, model_path])
    print(f"best epoch {history.best_epoch} val_loss={min(history.val_loss):.6f}")
    print(f"model written to {model_path}")
    return 0


def _load_model(path: str) -> tuple[CnnBiGruAttention, ModelParams, dict]:
    container = ModelContainer.load(path)
    meta = container.metadata
    model = CnnBiGruAttention(ModelConfig(**meta["model_config"]))
    params = ModelParams.from_dict(
        {k: v.astype(np.float32) for k, v in container.tensors.items()}
    )
    return model, params, meta


def _vocab_from_meta(meta: dict) -> textprep.Vocabulary:
    return textprep.Vocabulary(
        {t: int(i) for t, i in meta["vocab"].items()},
        max_size=meta["run_config"]["vocab_size"],
    )


def cmd_evaluate(args: argparse.Namespace) -> int:
    model, params, meta = _load_model(args.model)
    data_path = Path(args.data)
    if data_path.is_dir():
        encoded, _, _ = _load_prepared_dir(data_path)
        ids, labels = encoded["test"]
    else:
        records = corpus.load_csv(data_path)
        vocab = _vocab_from_meta(meta)
        stoplist = textprep.load_stopwords()
        ids, labels = textprep.encode_records(
            (r.text for r in records),
            (r.label for r in records),
            vocab,
            stoplist,
            meta["model_config"]["max_len"],
        )
    if len(labels) == 0:
        raise CliError(f"{args.data}: no examples to evaluate")
    probs = model.predict_proba(ids, params)
    report, roc = metrics.compute_report(labels, probs, args.threshold)

    out_dir = Path(args.out)
    files = metrics.emit_report(report, roc, out_dir)
    cfg = RunConfig(**{k: tuple(v) if k == "ratios" else v
                       for k, v in meta["run_config"].items()})
    _finish_outputs(out_dir, cfg, files)
    for key in ("accuracy", "precision", "recall", "f1", "auc_roc", "mse", "rmse"):
        print(f"{key}: {getattr(report, key):.6f}")
    cm = report.confusion
    print(f"confusion: tp={cm.tp} fp={cm.fp} tn={cm.tn} fn={cm.fn}")
    return 0


def _encode_text(meta: dict, text: str) -> tuple[np.ndarray, list[str]]:
    vocab = _vocab_from_meta(meta)
    stoplist = textprep.load_stopwords()
    tokens = textprep.tokenize_stem(textprep.clean(text), stoplist)
    max_len = meta["model_config"]["max_len"]
    return textprep.encode_pad(tokens, vocab, max_len), tokens[:max_len]


def cmd_predict(args: argparse.Namespace) -> int:
    model, params, meta = _load_model(args.model)
    ids, tokens = _encode_text(meta, args.text)
    if not tokens:
        print(
            "warning: text is empty after cleaning/stop-word removal; "
            "scoring the all-padding input",
            file=sys.stderr,
        )
    prob = float(model.predict_proba(ids[None, :], params)[0])
    label = int(prob >= 0.5)
    print(f"probability: {prob:.6f}")
    print(f"label: {label} ({corpus.NAME_FOR_LABEL[label]})")
    return 0


def _explain_examples(args, meta) -> list[tuple[np.ndarray, list[str]]]:
    if args.text is not None:
        lines = [
            line for line in Path(args.text).read_text("utf-8").splitlines() if line.strip()
        ]
        if not lines:
            raise CliError(f"{args.text}: no non-empty input lines")
        return [_encode_text(meta, line) for line in lines]

    run_cfg = meta["run_config"]
    cfg = RunConfig(**{k: tuple(v) if k == "ratios" else v for k, v in run_cfg.items()})
    encoded, _ = _prepare_from_source(cfg)
    ids_rows, _ = encoded["test"]
    if not 0 <= args.row < len(ids_rows):
        raise CliError(
            f"--row {args.row} out of range for test split of {len(ids_rows)} examples"
        )
    vocab = _vocab_from_meta(meta)
    row = ids_rows[args.row]
    tokens = [vocab.token_for(int(i)) for i in row if i != textprep.PAD_ID]
    return [(row, tokens)]


def cmd_explain(args: argparse.Namespace) -> int:
    model, params, meta = _load_model(args.model)
    examples = _explain_examples(args, meta)

    def predict_fn(ids: np.ndarray) -> float:
        return model.forward(ids, params)[0]

    rng = RngState(args.seed).substream("sampling")
    attributions = []
    attention_records = []
    for ids, tokens in examples:
        spec = explain.CoalitionSpec.for_ids(ids)
        if args.mode == "exact":
            if len(spec.positions) > explain.EXACT_MODE_CAP:
                raise CliError(
                    f"{len(spec.positions)} non-PAD tokens exceeds the exact-mode "
                    f"cap of {explain.EXACT_MODE_CAP}; rerun with --mode sampled"
                )
            attributions.append(explain.exact_shapley(predict_fn, ids, spec, tokens))
        else:
            attributions.append(
                explain.sampled_shapley(predict_fn, ids, spec, args.samples, rng, tokens)
            )
        alphas, spans = explain.attention_export(model, params, ids)
        attention_records.append(
            {"weights": alphas.tolist(), "token_spans": [list(s) for s in spans]}
        )

    out_dir = Path(args.out)
    files = explain.explanation_report(attributions, out_dir)
    attn_path = out_dir / "attention.json"
    attn_path.write_text(json.dumps(attention_records, indent=2) + "\n")
    files.append(attn_path)
    cfg = RunConfig(**{k: tuple(v) if k == "ratios" else v
                       for k, v in meta["run_config"].items()})
    _finish_outputs(out_dir, cfg, files)
    for attr in attributions:
        print(
            f"prediction={attr.prediction:.6f} base={attr.base_value:.6f} "
            f"efficiency_gap={attr.efficiency_gap():.2e}"
        )
    print(f"explanations written to {out_dir}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results, ok = run_suite(n_configs=args.configs, seed=args.seed, tol=args.tol)
    for res in sorted(results, key=lambda r: r.name):
        status = "PASS" if res.passed(args.tol) else "FAIL"
        print(f"{status} {res.name}: max_rel_err={res.max_rel_err:.3e}")
    print(f"gradcheck: {'all passed' if ok else 'FAILURES'} "
          f"({args.configs} configurations, tol={args.tol:g})")
    return 0 if ok else 1


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = read_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "preset", None):
        cfg = apply_preset(cfg, args.preset)
    overrides = {}
    for flag, key in (
        ("data", "data"),
        ("out", "out"),
        ("seed", "seed"),
        ("epochs", "epochs"),
        ("batch", "batch_size"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "ratios", None) is not None:
        overrides["ratios"] = parse_ratios(args.ratios)
    return dataclasses.replace(cfg, **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sidm",
        description="Suicidal-ideation text classifier: a CNN-BiGRU-attention "
        "network with from-scratch training and Shapley explanations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="encode a CSV dataset into splits")
    p.add_argument("--data", required=True, help="input CSV (text,class columns)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ratios", default=None, help="train,val,test e.g. 0.8,0.1,0.1")
    p.add_argument("--config", default=None, help="config file (flags override it)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the model on a prepared dataset")
    p.add_argument("--config", default=None, help="config file with the data path")
    p.add_argument("--out", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--preset", choices=("paper-iii", "paper-iv"), default=None)
    p.add_argument("--data", default=None, help="prepared directory or raw CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compute the metric suite on a test set")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="prepared directory or raw CSV")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default="eval-out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="score one text")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="Shapley token attributions")
    p.add_argument("--model", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--row", type=int, help="row index into the test split")
    group.add_argument("--text", help="file with one input text per line")
    p.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="explain-out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        CliError,
        ConfigError,
        ContainerError,
        corpus.CorpusError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
