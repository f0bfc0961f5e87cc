"""Command-line entry point for the whole pipeline.

Every output-producing command writes a manifest (inputs hashed, config,
seed, code version) next to its outputs; rerunning with the same inputs and
flags reproduces outputs byte-identically. Config files are flat
``key = value`` lines whose keys match the flag destinations; explicit
command-line flags win over config values.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path

from . import __version__, metrics
from .evaluator import EvaluatorModel, TrainConfig, Variant, agreement_report, train_evaluator
from .extractor import (
    InfeasibleSpanError,
    PolicyModel,
    SFTConfig,
    decode_greedy,
    sft_train,
)
from .ingest import CONVERTERS, dataset_stats
from .records import (
    Manifest,
    atomic_write_text,
    dump_json_line,
    read_instances,
    read_jsonl,
    read_labeled,
    write_instances,
    write_jsonl,
    write_labeled,
)
from .rl import DATASET_KL_COEF, EvaluatorReward, PPOConfig, SimilarityReward, rl_train
from .synth import SynthConfig, gen_corpus, gen_labeled
from .tagged import parse_extraction, serialize_extraction
from .weak import WeakConfig, weak_to_strong_train

log = logging.getLogger("causalign")

VARIANT_ALIASES = {"full": Variant.FULL, "no-ref": Variant.NO_REFERENCE, "no-src": Variant.NO_SOURCE}


def load_config_file(path: str | Path) -> dict:
    """Flat key = value lines; values parsed as JSON scalars when possible."""
    config = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        try:
            config[key] = json.loads(value)
        except json.JSONDecodeError:
            config[key] = value
    return config


def _write_tsv(path: Path, columns: list[str], rows: list[dict]) -> None:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.6f}"
        return str(v)

    lines = ["\t".join(columns)]
    lines += ["\t".join(fmt(row.get(c, "")) for c in columns) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _manifest(args, command: str, inputs: list, outputs: list, extra_config: dict | None = None):
    manifest = Manifest(command=command, seed=getattr(args, "seed", None))
    skip = {"config", "func", "out_dir"}
    manifest.config = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in skip and not callable(v) and isinstance(v, (str, int, float, bool, list, type(None)))
    }
    if extra_config:
        manifest.config.update(extra_config)
    for path in inputs:
        if path:
            manifest.add_input(path)
    manifest.outputs = [str(p) for p in outputs if p]
    return manifest


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- data commands ---------------------------------------------------------


def cmd_convert(args):
    converter = CONVERTERS[args.dataset]
    kwargs = {"split": args.split}
    if args.dataset == "fcr":
        kwargs["byte_offsets"] = args.byte_offsets
    elif args.dataset == "fincausal":
        kwargs["strict"] = args.strict
    instances = converter(args.infile, **kwargs)
    write_instances(args.out, instances)
    _manifest(args, "convert", [args.infile], [args.out]).write(args.out + ".manifest.json")
    print(f"wrote {len(instances)} instances to {args.out}")


def _infer_split(path: str) -> str:
    name = Path(path).name.lower()
    for split in ("train", "dev", "test"):
        if split in name:
            return split
    return "train"


def cmd_stats(args):
    report = dataset_stats(read_instances(args.infile))
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def cmd_synth_gen(args):
    out = _out_dir(args)
    cfg = SynthConfig(f1_threshold=args.f1_threshold, boundary_noise=args.boundary_noise)
    corpus = gen_corpus(args.n_train, args.n_dev, args.n_test, seed=args.seed, cfg=cfg)
    by_split = {s: [x for x in corpus if x.split == s] for s in ("train", "dev", "test")}
    instances_path = out / "instances.jsonl"
    write_instances(instances_path, corpus)
    labeled_train = gen_labeled(by_split["train"], seed=args.seed + 10, cfg=cfg)
    labeled_dev = gen_labeled(by_split["dev"], seed=args.seed + 11, cfg=cfg)
    train_path = out / "labeled_train.jsonl"
    dev_path = out / "labeled_dev.jsonl"
    write_labeled(train_path, labeled_train)
    write_labeled(dev_path, labeled_dev)
    outputs = [instances_path, train_path, dev_path]
    _manifest(args, "synth-gen", [], outputs).write(out / "synth-gen.manifest.json")
    print(f"wrote {len(corpus)} instances and {len(labeled_train)}+{len(labeled_dev)} labeled items to {out}")


# -- metric commands ---------------------------------------------------------


def _read_predictions(path) -> dict[str, object]:
    preds = {}
    for rec in read_jsonl(path):
        if rec.get("tagged"):
            try:
                preds[str(rec["id"])] = parse_extraction(rec["tagged"])
            except Exception as exc:
                log.warning("prediction %s unparseable: %s", rec.get("id"), exc)
    return preds


def cmd_score(args):
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(wanted) - {"em", "prf", "rouge"}
    if unknown:
        raise SystemExit(f"unknown metrics: {sorted(unknown)}")
    gold = read_instances(args.gold)
    preds = _read_predictions(args.pred)
    report: dict = {"n": len(gold), "missing_predictions": 0}
    sums = Counter()
    for inst in gold:
        pred = preds.get(inst.id)
        if pred is None:
            report["missing_predictions"] += 1
            continue
        if "prf" in wanted:
            prf = metrics.token_prf(pred, inst.gold)
            sums["precision"] += prf.precision
            sums["recall"] += prf.recall
            sums["f1"] += prf.f1
        if "em" in wanted:
            sums["em"] += float(metrics.exact_match(pred, inst.gold))
        if "rouge" in wanted:
            sums["rouge_l"] += metrics.extraction_rouge_l(pred, inst.gold)
    n = max(1, len(gold))
    for key, total in sorted(sums.items()):
        report[key] = total / n
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        atomic_write_text(args.out, text + "\n")


def _read_verdicts(path) -> dict[str, str]:
    out = {}
    for rec in read_jsonl(path):
        out[str(rec["id"])] = rec["verdict"]
    return out


def cmd_agree(args):
    a = _read_verdicts(args.a)
    b = _read_verdicts(args.b)
    if set(a) != set(b):
        raise SystemExit(
            f"verdict files do not cover the same ids ({len(set(a) ^ set(b))} differ)"
        )
    ids = sorted(a)
    series_a = [a[i] for i in ids]
    series_b = [b[i] for i in ids]
    kappa = metrics.cohens_kappa(series_a, series_b)
    print(
        json.dumps(
            {
                "n": len(ids),
                "agreement": metrics.percent_agreement(series_a, series_b),
                "kappa": kappa.value,
                "kappa_degenerate": kappa.degenerate,
            },
            indent=2,
            sort_keys=True,
        )
    )


def cmd_correlate(args):
    scores = {str(r["id"]): float(r["score"]) for r in read_jsonl(args.scores)}
    labels = _read_verdicts(args.labels)
    if set(scores) != set(labels):
        raise SystemExit("score and label files do not cover the same ids")
    ids = sorted(scores)
    value = metrics.pearson(
        [scores[i] for i in ids], [1.0 if labels[i] == "valid" else 0.0 for i in ids]
    )
    print(json.dumps({"n": len(ids), "pearson": value}, indent=2, sort_keys=True))


# -- evaluator commands -------------------------------------------------------


def _resolve_conflicts(labeled, policy: str):
    if policy == "all":
        return list(labeled)
    by_id: dict[str, list] = {}
    for item in labeled:
        by_id.setdefault(item.id or str(id(item)), []).append(item)
    out = []
    for item_id, group in by_id.items():
        if policy == "first" or len(group) == 1:
            out.append(group[0])
            continue
        votes = Counter(x.verdict for x in group)
        if votes[True] == votes[False]:
            log.warning("conflict tie on %s; item skipped", item_id)
            continue
        majority = votes[True] > votes[False]
        out.append(next(x for x in group if x.verdict == majority))
    return out


def cmd_train_eval(args):
    labeled = _resolve_conflicts(read_labeled(args.data), args.conflict)
    dev = read_labeled(args.dev) if args.dev else None
    cfg = TrainConfig(
        variant=VARIANT_ALIASES[args.variant],
        lr=args.lr,
        max_epochs=args.epochs,
        patience=args.patience,
        l2=args.l2,
        seed=args.seed,
    )
    model = train_evaluator(labeled, cfg, dev=dev)
    model.save(args.out)
    _manifest(args, "train-eval", [args.data, args.dev], [args.out]).write(
        args.out + ".manifest.json"
    )
    print(json.dumps(model.metadata, indent=2, sort_keys=True))


def cmd_eval_agree(args):
    model = EvaluatorModel.load(args.model)
    labeled = read_labeled(args.data)
    if args.annotator:
        labeled = [x for x in labeled if x.annotator == args.annotator]
    report = agreement_report(model, labeled)
    print(json.dumps(report, indent=2, sort_keys=True))


def cmd_weak_train(args):
    labeled = read_labeled(args.data)
    cfg = WeakConfig(
        x_percent=args.x, keep_fraction=args.keep, seed=args.seed, balance=not args.no_balance
    )
    model, report = weak_to_strong_train(labeled, cfg, TrainConfig(seed=args.seed))
    model.save(args.out)
    if args.report:
        atomic_write_text(args.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    _manifest(args, "weak-train", [args.data], [args.out, args.report or ""]).write(
        args.out + ".manifest.json"
    )
    print(json.dumps(report, indent=2, sort_keys=True))


# -- extractor commands -------------------------------------------------------


def cmd_sft(args):
    train = read_instances(args.train)
    dev = read_instances(args.dev) if args.dev else None
    cfg = SFTConfig(
        lr=args.lr,
        max_epochs=args.epochs,
        patience=args.patience,
        batch_size=args.batch_size,
        embed_dim=args.embed_dim,
        hidden_dim=args.hidden_dim,
        fixed_relation=args.fixed_relation,
        seed=args.seed,
    )
    model = sft_train(train, cfg, dev=dev)
    model.save(args.out)
    _manifest(args, "sft", [args.train, args.dev], [args.out]).write(args.out + ".manifest.json")
    print(f"saved policy to {args.out}")


def cmd_extract(args):
    model = PolicyModel.load(args.model)
    rows = []
    for inst in read_instances(args.infile):
        try:
            pred, _ = decode_greedy(model, inst.context)
            rows.append({"id": inst.id, "tagged": serialize_extraction(pred)})
        except InfeasibleSpanError as exc:
            log.warning("instance %s: %s", inst.id, exc)
            rows.append({"id": inst.id, "error": str(exc)})
    write_jsonl(args.out, rows)
    _manifest(args, "extract", [args.model, args.infile], [args.out]).write(
        args.out + ".manifest.json"
    )
    print(f"wrote {len(rows)} predictions to {args.out}")


def _reward_from_spec(spec: str):
    if spec == "similarity":
        return SimilarityReward(), None
    if spec.startswith("evaluator:"):
        path = spec.split(":", 1)[1]
        return EvaluatorReward(EvaluatorModel.load(path)), path
    raise SystemExit(f"bad --reward {spec!r}: expected 'similarity' or 'evaluator:<model>'")


def cmd_rl(args):
    policy = PolicyModel.load(args.sft_model)
    reward_fn, reward_path = _reward_from_spec(args.reward)
    train = read_instances(args.train)
    if args.kl_coef is not None:
        kl_coef = args.kl_coef
    elif args.dataset:
        kl_coef = DATASET_KL_COEF[args.dataset]
    else:
        kl_coef = PPOConfig().kl_coef
    cfg = PPOConfig(
        learning_rate=args.lr,
        kl_coef=kl_coef,
        clip_epsilon=args.clip_epsilon,
        kl_skip_threshold=args.kl_skip_threshold,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
    )
    policy, results = rl_train(policy, reward_fn, train, cfg)
    policy.save(args.out)
    if args.log:
        write_jsonl(args.log, (r.to_record() for r in results))
    applied = sum(1 for r in results if r.status == "applied")
    _manifest(
        args,
        "rl",
        [args.sft_model, args.train, reward_path],
        [args.out, args.log or ""],
        extra_config={"kl_coef": kl_coef},
    ).write(args.out + ".manifest.json")
    print(f"rl done: {applied}/{len(results)} batches applied; saved to {args.out}")


def cmd_annotate_serve(args):
    from .service import serve

    port = args.port if args.port is not None else int(os.environ.get("CAUSALIGN_PORT", "8008"))
    data_dir = args.data_dir or os.environ.get("CAUSALIGN_DATA_DIR", "annotations")
    print(f"serving annotation sessions from {data_dir} on port {port}")
    serve(data_dir, port)


# -- experiment drivers -------------------------------------------------------


def _study_config(args):
    from .experiments import MainStudyConfig

    cfg = MainStudyConfig(seed=args.seed)
    if getattr(args, "no_rl", False):
        cfg.rl_enabled = False
    if getattr(args, "sft_fraction", None) is not None:
        cfg.sft_fraction = args.sft_fraction
    return cfg


def cmd_study_agreement(args):
    from .experiments import run_agreement_study

    train = read_labeled(args.train)
    dev = read_labeled(args.dev)
    result = run_agreement_study(train, dev, seed=args.seed)
    out = _out_dir(args)
    _write_tsv(out / "agreement.tsv", ["name", "agreement", "kappa"], result["agreement"])
    _write_tsv(out / "correlation.tsv", ["metric", "pearson"], result["correlation"])
    for variant, model in result["models"].items():
        model.save(out / f"evaluator_{variant.value}.json")
    outputs = [out / "agreement.tsv", out / "correlation.tsv"]
    _manifest(args, "study-agreement", [args.train, args.dev], outputs).write(
        out / "study-agreement.manifest.json"
    )
    print((out / "agreement.tsv").read_text(), end="")


def cmd_study_splits(args):
    from .experiments import run_split_study

    train = read_labeled(args.train)
    dev = read_labeled(args.dev)
    fractions = [float(x) for x in args.fractions.split(",")]
    rows = run_split_study(train, dev, fractions=fractions, seed=args.seed)
    out = _out_dir(args)
    _write_tsv(out / "splits.tsv", ["fraction", "n_train", "agreement"], rows)
    _manifest(args, "study-splits", [args.train, args.dev], [out / "splits.tsv"]).write(
        out / "study-splits.manifest.json"
    )
    print((out / "splits.tsv").read_text(), end="")


MAIN_COLUMNS = ["model", "precision", "recall", "f1", "em", "human_prox", "without_em"]


def _split_instances(path):
    instances = read_instances(path)
    return (
        [x for x in instances if x.split == "train"],
        [x for x in instances if x.split == "dev"],
        [x for x in instances if x.split == "test"],
    )


def cmd_study_main(args):
    from .experiments import run_main_experiment

    train, dev, test = _split_instances(args.instances)
    labeled = read_labeled(args.labeled)
    result = run_main_experiment(train, dev, test, labeled, _study_config(args))
    out = _out_dir(args)
    _write_tsv(out / "main.tsv", MAIN_COLUMNS, result["rows"])
    result["evaluator"].save(out / "evaluator.json")
    result["sft_policy"].save(out / "sft_policy.json")
    if result["rl_policy"] is not None:
        result["rl_policy"].save(out / "rl_policy.json")
    _manifest(args, "study-main", [args.instances, args.labeled], [out / "main.tsv"]).write(
        out / "study-main.manifest.json"
    )
    print((out / "main.tsv").read_text(), end="")


def cmd_study_weak_rl(args):
    from .experiments import run_weak_rl

    train, dev, test = _split_instances(args.instances)
    labeled = read_labeled(args.labeled)
    x_grid = [float(x) for x in args.x_grid.split(",")]
    result = run_weak_rl(
        train, dev, test, labeled, x_grid=x_grid, keep_fraction=args.keep, cfg=_study_config(args)
    )
    out = _out_dir(args)
    columns = ["x"] + MAIN_COLUMNS[1:]
    _write_tsv(out / "weak_rl.tsv", columns, result["rows"])
    atomic_write_text(
        out / "weak_reports.json",
        json.dumps(result["weak_reports"], indent=2, sort_keys=True, default=str) + "\n",
    )
    _manifest(args, "study-weak-rl", [args.instances, args.labeled], [out / "weak_rl.tsv"]).write(
        out / "study-weak-rl.manifest.json"
    )
    print((out / "weak_rl.tsv").read_text(), end="")


def cmd_plot(args):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = []
    with open(args.infile, encoding="utf-8") as f:
        header = f.readline().strip().split("\t")
        for line in f:
            rows.append(dict(zip(header, line.strip().split("\t"))))
    xs = [float(r[args.x]) for r in rows]
    ys = [float(r[args.y]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel(args.x)
    ax.set_ylabel(args.y)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalign",
        description="Desk-scale causal event extraction laboratory.",
    )
    parser.add_argument("--version", action="version", version=f"causalign {__version__}")
    parser.add_argument("--config", help="flat key = value config file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0)
        return p

    p = add("convert", cmd_convert, help="convert a source dataset to interchange records")
    p.add_argument("--dataset", choices=sorted(CONVERTERS), required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--byte-offsets", action="store_true")

    p = add("stats", cmd_stats, help="corpus statistics of an interchange file")
    p.add_argument("--in", dest="infile", required=True)

    p = add("synth-gen", cmd_synth_gen, help="generate the synthetic oracle corpus")
    p.add_argument("--n-train", type=int, default=1600)
    p.add_argument("--n-dev", type=int, default=400)
    p.add_argument("--n-test", type=int, default=400)
    p.add_argument("--f1-threshold", type=float, default=0.6)
    p.add_argument("--boundary-noise", type=float, default=0.5)
    p.add_argument("--out-dir", required=True)

    p = add("score", cmd_score, help="score tagged predictions against gold instances")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--metrics", default="em,prf,rouge")
    p.add_argument("--out", default=None)

    p = add("agree", cmd_agree, help="percent agreement and kappa of two verdict files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)

    p = add("correlate", cmd_correlate, help="Pearson correlation of scores vs verdicts")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)

    p = add("train-eval", cmd_train_eval, help="train a validity evaluator")
    p.add_argument("--data", required=True)
    p.add_argument("--dev", default=None)
    p.add_argument("--variant", choices=sorted(VARIANT_ALIASES), default="full")
    p.add_argument("--conflict", choices=["majority", "first", "all"], default="all")
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--epochs", type=int, default=TrainConfig.max_epochs)
    p.add_argument("--patience", type=int, default=TrainConfig.patience)
    p.add_argument("--l2", type=float, default=TrainConfig.l2)
    p.add_argument("--out", required=True)

    p = add("eval-agree", cmd_eval_agree, help="agreement of a saved evaluator with labels")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--annotator", default=None)

    p = add(
        "transfer-eval",
        cmd_eval_agree,
        help="agreement of a saved evaluator on another dataset's labels",
    )
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--annotator", default=None)

    p = add("weak-train", cmd_weak_train, help="weak-to-strong evaluator training")
    p.add_argument("--data", required=True)
    p.add_argument("--x", type=float, default=0.5)
    p.add_argument("--keep", type=float, default=0.75)
    p.add_argument("--no-balance", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)

    p = add("sft", cmd_sft, help="supervised training of the span-pointer policy")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", default=None)
    p.add_argument("--lr", type=float, default=SFTConfig.lr)
    p.add_argument("--epochs", type=int, default=SFTConfig.max_epochs)
    p.add_argument("--patience", type=int, default=SFTConfig.patience)
    p.add_argument("--batch-size", type=int, default=SFTConfig.batch_size)
    p.add_argument("--embed-dim", type=int, default=SFTConfig.embed_dim)
    p.add_argument("--hidden-dim", type=int, default=SFTConfig.hidden_dim)
    p.add_argument("--fixed-relation", action="store_true")
    p.add_argument("--out", required=True)

    p = add("extract", cmd_extract, help="greedy extraction with a saved policy")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)

    p = add("rl", cmd_rl, help="PPO alignment of a policy with a reward model")
    p.add_argument("--sft-model", required=True)
    p.add_argument("--reward", required=True, help="'similarity' or 'evaluator:<model.json>'")
    p.add_argument("--train", required=True)
    p.add_argument("--dataset", choices=sorted(DATASET_KL_COEF), default=None)
    p.add_argument("--kl-coef", type=float, default=None)
    p.add_argument("--lr", type=float, default=PPOConfig.learning_rate)
    p.add_argument("--clip-epsilon", type=float, default=PPOConfig.clip_epsilon)
    p.add_argument("--kl-skip-threshold", type=float, default=PPOConfig.kl_skip_threshold)
    p.add_argument("--batch-size", type=int, default=PPOConfig.batch_size)
    p.add_argument("--epochs", type=int, default=PPOConfig.epochs)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)

    p = add("annotate-serve", cmd_annotate_serve, help="run the annotation HTTP service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--data-dir", default=None)

    p = add("study-agreement", cmd_study_agreement, help="metric/evaluator agreement table")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("study-splits", cmd_study_splits, help="evaluator agreement by data fraction")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--fractions", default="0.1,0.3,0.5,0.8,1.0")
    p.add_argument("--out-dir", required=True)

    p = add("study-main", cmd_study_main, help="SFT vs RL results table")
    p.add_argument("--instances", required=True)
    p.add_argument("--labeled", required=True)
    p.add_argument("--no-rl", action="store_true")
    p.add_argument("--sft-fraction", type=float, default=None)
    p.add_argument("--out-dir", required=True)

    p = add("study-weak-rl", cmd_study_weak_rl, help="RL with weakly-supervised reward models")
    p.add_argument("--instances", required=True)
    p.add_argument("--labeled", required=True)
    p.add_argument("--x-grid", default="0.3,0.5,0.8")
    p.add_argument("--keep", type=float, default=0.75)
    p.add_argument("--sft-fraction", type=float, default=None)
    p.add_argument("--out-dir", required=True)

    p = add("plot", cmd_plot, help="static plot of one TSV column against another")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--out", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        config = load_config_file(known.config)
        for action in parser._subparsers._group_actions:  # noqa: SLF001
            for sp in action.choices.values():
                dests = {a.dest for a in sp._actions}  # noqa: SLF001
                sp.set_defaults(**{k: v for k, v in config.items() if k in dests})
    args = parser.parse_args(argv)
    if getattr(args, "split", "unset") is None:
        args.split = _infer_split(args.infile)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
