"""Command-line entry point: dataset generation, training, evaluation,
embedding export, per-node score trees, and dataset statistics.

Exit codes: 0 success, 2 usage error, 3 data error (missing/malformed
files, model-dataset mismatch), 4 numeric divergence during training.
Progress goes to stderr; machine-readable output goes to files or stdout.
Worker thread count comes from --threads or the SEMVEC_THREADS environment
variable (applied to the BLAS thread pools before numpy loads);
--deterministic forces a single thread.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

_VERSION = "0.1.0"


def _apply_threads(n: int | None) -> None:
    if n is None:
        env = os.environ.get("SEMVEC_THREADS")
        n = int(env) if env else None
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _write_manifest(out_path: str, command: str, config: dict, inputs: list[str], started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "output": out_path,
        "version": _VERSION,
        "wall_clock_sec": round(time.time() - started, 3),
        "argv": sys.argv[1:],
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="semvec",
        description="Semantic vectors for boolean/polynomial expressions: data, training, retrieval evaluation.",
    )
    p.add_argument("--threads", type=int, default=None, help="worker thread cap (default: SEMVEC_THREADS)")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, bit-reproducible mode")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="enumerate a dataset, split it, and write JSONL")
    g.add_argument("--preset", help="named dataset preset (e.g. bool5, simppoly8)")
    g.add_argument("--domain", choices=["bool", "poly"], help="expression domain")
    g.add_argument("--ops", help="comma-separated operator names (e.g. and,or,not)")
    g.add_argument("--vars", help="comma-separated variable names (e.g. a,b,c)")
    g.add_argument("--max-size", type=int, help="maximum expression node count")
    g.add_argument("--cap", type=int, default=None, help="per-class member cap (uniform subsample)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-count", type=int, default=2_000_000, help="abort if enumeration exceeds this many expressions")
    g.add_argument("--out", required=True, help="output JSONL path")

    t = sub.add_parser("train", help="train an encoder on a dataset")
    t.add_argument("--dataset", required=True)
    t.add_argument("--model", choices=["eqnet", "treenn1", "treenn2", "gru"], default=None)
    t.add_argument("--config", help="flat JSON config file (TrainConfig schema)")
    t.add_argument("--out", required=True, help="checkpoint output path")
    t.add_argument("--history", help="history CSV path (default: <out>.history.csv)")
    for name, typ in _CONFIG_FLAGS:
        t.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None, dest=f"cfg_{name}")

    e = sub.add_parser("eval", help="retrieval metrics for a trained checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--split", choices=["seen_test", "unseen_test", "valid"], default="unseen_test")
    e.add_argument("--k", type=int, default=15, help="largest neighborhood size")
    e.add_argument("--pool", choices=["train+split", "split"], default="train+split",
                   help="neighbor pool: train plus the evaluated split, or the split alone")
    e.add_argument("--out", help="score-curve CSV path")
    e.add_argument("--curves", help="precision/recall/ROC CSV path")

    x = sub.add_parser("export", help="write embeddings of a split as CSV")
    x.add_argument("--ckpt", required=True)
    x.add_argument("--dataset", required=True)
    x.add_argument("--split", choices=["train", "valid", "seen_test", "unseen_test"], default="seen_test")
    x.add_argument("--out", required=True)
    x.add_argument("--pca", action="store_true", help="append 2-D PCA coordinates")

    v = sub.add_parser("viz-tree", help="per-node retrieval scores for one expression")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--dataset", required=True)
    v.add_argument("--expr", required=True, help="expression text to analyze")
    v.add_argument("--split", choices=["seen_test", "unseen_test", "valid"], default="seen_test",
                   help="split pooled with train for neighbor search")
    v.add_argument("--k", type=int, default=5)
    v.add_argument("--out", help="JSON output path (default: stdout)")

    s = sub.add_parser("stats", help="dataset statistics (classes, expressions, entropy)")
    s.add_argument("--dataset", required=True)
    return p


def _flag_bool(s: str) -> bool:
    return s.lower() in ("1", "true", "yes", "on")


def _flag_curriculum(s: str):
    return None if s.lower() in ("none", "off") else float(s)


_CONFIG_FLAGS = [
    ("lr", float),
    ("rho", float),
    ("momentum", float),
    ("batch_size", int),
    ("dim", int),
    ("code_dim", int),
    ("kappa", float),
    ("clip", float),
    ("init_std", float),
    ("dropout", float),
    ("hidden", int),
    ("nu", float),
    ("curriculum_start", _flag_curriculum),
    ("curriculum_step", float),
    ("margin", float),
    ("epochs", int),
    ("seed", int),
    ("emb_dim", int),
    ("combine_activation", str),
    ("exact_noise", _flag_bool),
    ("check_unit_norm", _flag_bool),
]


def _cmd_gen(args) -> int:
    from . import datagen

    started = time.time()
    if args.preset:
        if args.preset not in datagen.PRESETS:
            raise DataError(f"unknown preset {args.preset!r}; choices: {', '.join(sorted(datagen.PRESETS))}")
        base = datagen.PRESETS[args.preset]
        spec = datagen.DatasetSpec(
            base.domain, base.operators, base.variables, base.max_size,
            per_class_cap=args.cap, seed=args.seed,
        )
    else:
        missing = [f for f, v in (("--domain", args.domain), ("--ops", args.ops), ("--vars", args.vars), ("--max-size", args.max_size)) if v is None]
        if missing:
            raise UsageError(f"gen needs {', '.join(missing)} (or --preset)")
        from .expr import Domain

        spec = datagen.DatasetSpec(
            Domain.from_name(args.domain),
            tuple(args.ops.split(",")),
            tuple(args.vars.split(",")),
            args.max_size,
            per_class_cap=args.cap,
            seed=args.seed,
        )
    _progress(f"enumerating {spec.domain.value} expressions up to size {spec.max_size} ...")
    dataset = datagen.generate(spec, max_count=args.max_count)
    datagen.write_jsonl(dataset, args.out)
    st = datagen.stats(dataset.records)
    print(f"classes={st.num_classes} exprs={st.num_exprs} entropy={st.entropy_bits:.4f}")
    _write_manifest(args.out, "gen", spec.to_json(), [], started)
    return EXIT_OK


def _load_dataset(path: str):
    from . import datagen

    if not os.path.exists(path):
        raise DataError(f"dataset not found: {path}")
    return datagen.read_jsonl(path)


def _cmd_train(args) -> int:
    from . import datagen, training

    started = time.time()
    dataset = _load_dataset(args.dataset)
    if args.config:
        if not os.path.exists(args.config):
            raise DataError(f"config not found: {args.config}")
        with open(args.config, "r", encoding="utf-8") as f:
            try:
                cfg = training.TrainConfig.from_json(json.load(f))
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                raise DataError(f"bad config {args.config}: {exc}") from None
        if args.model and args.model != cfg.model:
            cfg = training.TrainConfig.from_json({**cfg.to_json(), "model": args.model})
    elif args.model:
        cfg = training.preset(args.model)
    else:
        raise UsageError("train needs --model or --config")
    overrides = {}
    for name, _ in _CONFIG_FLAGS:
        val = getattr(args, f"cfg_{name}")
        if val is not None:
            overrides[name] = val
    if overrides:
        cfg = training.TrainConfig.from_json({**cfg.to_json(), **overrides})
    _progress(f"training {cfg.model} on {args.dataset} ({cfg.epochs} epochs, seed {cfg.seed})")
    model, history = training.train(dataset, cfg, log=_progress)
    model.save(args.out, extra={"config": cfg.to_json(), "dataset_spec": dataset.spec.to_json()})
    hist_path = args.history or args.out + ".history.csv"
    training.write_history(history, hist_path)
    best = max((h.valid_score5 for h in history), default=float("nan"))
    print(f"best_valid_score5={best:.4f} epochs={len(history)}")
    _write_manifest(args.out, "train", cfg.to_json(), [args.dataset], started)
    return EXIT_OK


def _load_model_checked(ckpt: str, dataset):
    from . import models

    if not os.path.exists(ckpt):
        raise DataError(f"checkpoint not found: {ckpt}")
    model = models.load_model(ckpt)
    spec = dataset.spec
    if model.domain is not spec.domain:
        raise DataError(
            f"checkpoint domain {model.domain.value!r} does not match dataset domain {spec.domain.value!r}"
        )
    if tuple(model.variables) != tuple(spec.variables):
        raise DataError("checkpoint and dataset variable alphabets differ")
    unknown = set(spec.operators) - set(model.operators)
    if unknown:
        raise DataError(f"dataset operators unknown to checkpoint: {sorted(unknown)}")
    return model


def _split_pool(dataset, split: str, pool_kind: str):
    from .datagen import parse_records

    triples = parse_records(dataset)
    split_items = [(e, c) for e, c, s in triples if s == split]
    if not split_items:
        raise DataError(f"dataset has no records in split {split!r}")
    if pool_kind == "split":
        pool_items = list(split_items)
        queries = list(range(len(pool_items)))
    else:
        train_items = [(e, c) for e, c, s in triples if s == "train"]
        pool_items = train_items + split_items
        queries = list(range(len(train_items), len(pool_items)))
    return pool_items, queries


def _cmd_eval(args) -> int:
    from . import evaluation

    started = time.time()
    dataset = _load_dataset(args.dataset)
    model = _load_model_checked(args.ckpt, dataset)
    pool_items, queries = _split_pool(dataset, args.split, args.pool)
    _progress(f"embedding pool of {len(pool_items)} expressions ...")
    pool = evaluation.pool_from_model(model, [e for e, _ in pool_items], [c for _, c in pool_items])
    ks = tuple(range(1, args.k + 1))
    curve = evaluation.score_curve(pool, queries, ks=ks)
    a = evaluation.auc(curve)
    score5 = dict(curve).get(5, float("nan"))
    print(f"split={args.split} queries={len(queries)} score5={score5:.4f} auc={a:.4f}")
    if args.out:
        evaluation.write_score_curve(curve, args.out)
        _write_manifest(args.out, "eval", {"split": args.split, "k": args.k, "pool": args.pool}, [args.ckpt, args.dataset], started)
    if args.curves:
        evaluation.write_pair_curves(evaluation.pair_curves(pool), args.curves)
    return EXIT_OK


def _cmd_export(args) -> int:
    from . import evaluation

    started = time.time()
    dataset = _load_dataset(args.dataset)
    model = _load_model_checked(args.ckpt, dataset)
    from .datagen import parse_records

    items = [(e, c) for e, c, s in parse_records(dataset) if s == args.split]
    if not items:
        raise DataError(f"dataset has no records in split {args.split!r}")
    pool = evaluation.pool_from_model(model, [e for e, _ in items], [c for _, c in items])
    if args.pca:
        coords, _ = evaluation.pca_project(pool.vectors, dims=2)
        import csv as _csv

        with open(args.out, "w", encoding="utf-8", newline="") as f:
            w = _csv.writer(f)
            dim = pool.vectors.shape[1]
            w.writerow(["id", "class"] + [f"v{i}" for i in range(dim)] + ["pca0", "pca1"])
            for i in range(len(pool)):
                w.writerow(
                    [pool.ids[i], pool.classes[i]]
                    + [f"{x:.8g}" for x in pool.vectors[i]]
                    + [f"{coords[i, 0]:.8g}", f"{coords[i, 1]:.8g}"]
                )
    else:
        evaluation.write_embeddings(pool, args.out)
    print(f"exported {len(pool)} embeddings to {args.out}")
    _write_manifest(args.out, "export", {"split": args.split, "pca": args.pca}, [args.ckpt, args.dataset], started)
    return EXIT_OK


def _cmd_viz_tree(args) -> int:
    from . import evaluation
    from .expr import ParseError, parse

    started = time.time()
    dataset = _load_dataset(args.dataset)
    model = _load_model_checked(args.ckpt, dataset)
    try:
        e = parse(args.expr, dataset.spec.domain)
    except ParseError as exc:
        raise DataError(f"cannot parse --expr: {exc}") from None
    pool_items, _ = _split_pool(dataset, args.split, "train+split")
    pool = evaluation.pool_from_model(model, [x for x, _ in pool_items], [c for _, c in pool_items])
    tree = evaluation.per_node_scores(e, model, pool, k=args.k)
    if args.out:
        evaluation.write_node_scores(tree, args.out)
        _write_manifest(args.out, "viz-tree", {"expr": args.expr, "k": args.k, "split": args.split}, [args.ckpt, args.dataset], started)
    else:
        json.dump(tree, sys.stdout, indent=2)
        print()
    return EXIT_OK


def _cmd_stats(args) -> int:
    from . import datagen

    dataset = _load_dataset(args.dataset)
    st = datagen.stats(dataset.records)
    per_split: dict[str, int] = {}
    for r in dataset.records:
        per_split[r.split] = per_split.get(r.split, 0) + 1
    split_text = " ".join(f"{k}={per_split.get(k, 0)}" for k in ("train", "valid", "seen_test", "unseen_test"))
    print(f"classes={st.num_classes} exprs={st.num_exprs} entropy={st.entropy_bits:.4f} {split_text}")
    return EXIT_OK


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _apply_threads(1 if args.deterministic else args.threads)

    handlers = {
        "gen": _cmd_gen,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "export": _cmd_export,
        "viz-tree": _cmd_viz_tree,
        "stats": _cmd_stats,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with code 2
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - map library errors to exit codes
        from .training import TrainingDiverged

        if isinstance(exc, TrainingDiverged):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        from .evaluation import EvalError
        from .expr import ParseError
        from .models import ModelError
        from .semantics import CanonicalizationError

        if isinstance(
            exc,
            (EvalError, ParseError, ModelError, CanonicalizationError,
             ValueError, OSError, KeyError, ResourceWarning),
        ):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise


if __name__ == "__main__":
    sys.exit(main())
