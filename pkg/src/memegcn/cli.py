"""Command-line entry point.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage, configuration
or input-data error.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataio
from .dataio import LABEL_NAMES, MAMI_RATES
from .errors import MemeGCNError, NumericError
from .fusion import DEFAULT_LAMBDA
from .labelgraph import DEPTH_SCHEDULES, adjacency_from_pools, build_adjacency, build_cooccurrence, dims_for_depth
from .metrics import metrics_report
from .model import Checkpoint, compute_class_weights, load_checkpoint, predict_proba, save_checkpoint, threshold_predict
from .optim import GraphInputs, TrainConfig, batch_loss, fit, format_epoch_log, task_score

logger = logging.getLogger("memegcn")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
DEFAULT_LAMBDAS = tuple(round(0.1 * k, 1) for k in range(1, 10))


class UsageError(MemeGCNError):
    pass


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# Argument groups
# ---------------------------------------------------------------------------

def _add_data_args(p):
    p.add_argument("--data", type=Path, required=True, help="directory holding the split files")
    p.add_argument("--train-split", default="train")
    p.add_argument("--valid-split", default="valid")
    p.add_argument("--trial-split", default="trial",
                   help="split whose labels join the training labels when building the adjacency; "
                        "skipped if its labels file is absent, 'none' disables it (default %(default)s)")
    p.add_argument("--embeddings", type=Path, default=None,
                   help="label-word vectors (default: <data>/embeddings.txt)")
    p.add_argument("--allow-missing-tokens", action="store_true",
                   help="substitute zero vectors for label words absent from the embedding file")


def _add_train_args(p):
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                   help="visual/text concatenation weight (default %(default)s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr-graph", type=float, default=1e-2, help="graph-layer learning rate (default %(default)s)")
    p.add_argument("--lr-head", type=float, default=1e-3,
                   help="projection and binary-head learning rate (default %(default)s)")
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--loss", dest="loss_kind", choices=("custom", "softmargin"), default="custom")
    p.add_argument("--weight-formula", choices=("balanced", "frequency"), default="balanced",
                   help="class-weight formula for the custom loss (default %(default)s)")
    p.add_argument("--depth", type=int, default=2, help="graph layers, 2-5 (default %(default)s)")
    p.add_argument("--gcn-dims", type=_ints, default=None,
                   help="explicit graph layer widths, overriding --depth")
    p.add_argument("--width-divisor", type=int, default=1,
                   help="divide every graph layer width by this factor for quick runs")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--gate-subtypes", action="store_true",
                   help="clear subtype predictions when misogynous is predicted negative")
    p.add_argument("--subtypes-only", action="store_true",
                   help="average the task-B score over the four subtypes only")


def _gcn_dims(args, depth=None):
    if args.gcn_dims and depth is None:
        dims = args.gcn_dims
    else:
        dims = dims_for_depth(args.depth if depth is None else depth)
    if args.width_divisor < 1:
        raise UsageError("--width-divisor must be >= 1")
    return tuple(max(1, d // args.width_divisor) for d in dims)


def _train_config(args, **overrides) -> TrainConfig:
    depth = overrides.pop("depth", None)
    cfg = TrainConfig(
        lr_graph=args.lr_graph,
        lr_head=args.lr_head,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        loss_kind=args.loss_kind,
        lam=args.lam,
        gcn_dims=_gcn_dims(args, depth),
        weight_decay=args.weight_decay,
        threshold=args.threshold,
        gate_subtypes=args.gate_subtypes,
        subtypes_only=args.subtypes_only,
        weight_formula=args.weight_formula,
    )
    return replace(cfg, **overrides)


def _load_data(args, need_graph=True):
    """Train/valid splits plus graph inputs.

    Without ``need_graph`` a missing embedding file is tolerated and the node
    features become a single zero column (only the binary head is trained).
    """
    train = dataio.load_split(args.data, args.train_split)
    valid = dataio.load_split(args.data, args.valid_split)
    pools = [train.labels]
    if args.trial_split and args.trial_split != "none":
        if dataio.split_paths(args.data, args.trial_split)["labels"].exists():
            pools.append(dataio.load_split(args.data, args.trial_split).labels)
        elif args.trial_split != "trial":
            raise FileNotFoundError(f"labels file not found: {dataio.split_paths(args.data, args.trial_split)['labels']}")
    emb_path = args.embeddings or Path(args.data) / "embeddings.txt"
    if Path(emb_path).exists():
        table = dataio.read_embeddings(emb_path, LABEL_NAMES, fallback=args.allow_missing_tokens)
        node_features = dataio.build_node_features(table, LABEL_NAMES)
    elif need_graph:
        raise FileNotFoundError(f"embeddings file not found: {emb_path}")
    else:
        node_features = np.zeros((len(LABEL_NAMES), 1))
    return train, valid, GraphInputs(node_features, adjacency_from_pools(pools))


def _report_header(args, extra=""):
    skip = {"func", "command"}
    items = [f"{k}={v}" for k, v in sorted(vars(args).items()) if k not in skip]
    return f"# {args.command} " + " ".join(items) + (f" {extra}" if extra else "")


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_synth(args):
    n_total = args.n_train + args.n_valid + args.n_trial
    d_v = args.d_v * args.regions
    ds = dataio.gen_synthetic(args.seed, n_total, d_v, args.e, args.imbalance, args.separability,
                              args.text_signal_fraction)
    ds = replace(ds, regions=args.regions) if args.regions != 1 else ds
    train, rest = ds.split(args.n_train)
    valid, trial = rest.split(args.n_valid)
    dataio.save_split(args.out, "train", train)
    dataio.save_split(args.out, "valid", valid)
    if args.n_trial:
        dataio.save_split(args.out, "trial", trial)
    dataio.write_embeddings(Path(args.out) / "embeddings.txt", dataio.synthetic_embeddings(args.seed, args.e_emb))
    print(f"wrote {args.n_train} train / {args.n_valid} valid / {args.n_trial} trial samples to {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _train_config(args)
    train, valid, graph = _load_data(args, need_graph=args.task == "B")
    result = fit(train, valid, cfg, args.task, graph)
    if args.checkpoint:
        meta = {"task": args.task, "seed": str(args.seed), "loss": cfg.loss_kind, "epochs": str(cfg.epochs),
                "best_epoch": str(result.best_epoch), "d_v": str(train.d_v), "e": str(train.e),
                "regions": str(train.regions)}
        save_checkpoint(args.checkpoint, Checkpoint(result.params, graph.node_features, graph.adjacency, meta))
    if args.log:
        Path(args.log).write_text(format_epoch_log(result.history, f"train task={args.task} {cfg.describe()}"))
    best = result.best.report
    print(f"best epoch {result.best_epoch}: valid macro F1 {best.task_a_macro_f1:.6f}, "
          f"valid averaged weighted F1 {best.task_b_score:.6f}")
    return EXIT_OK


def cmd_eval(args):
    gold_rows = dataio.read_labels(args.gold)
    gold = np.array([flags for _, flags in gold_rows], dtype=np.int64)
    if args.pred:
        pred_rows = dataio.read_labels(args.pred, check_consistency=False)
        by_id = {sid: flags for sid, flags in pred_rows}
        missing = [sid for sid, _ in gold_rows if sid not in by_id]
        if missing:
            raise UsageError(f"no prediction for {len(missing)} sample(s), first: {missing[0]!r}")
        pred = np.array([by_id[sid] for sid, _ in gold_rows], dtype=np.int64)
    elif args.checkpoint:
        if args.data is None:
            raise UsageError("--checkpoint needs --data")
        ckpt = load_checkpoint(args.checkpoint)
        ds = dataio.load_split(args.data, args.split)
        task = ckpt.meta.get("task", "B")
        p = predict_proba(ds.visual, ds.textual, ckpt.params, task, ckpt.node_features, ckpt.adjacency)
        flags = threshold_predict(p, ckpt.params.threshold, args.gate_subtypes and task == "B")
        by_id = dict(zip(ds.sample_ids, flags))
        pred = np.array([by_id[sid] for sid, _ in gold_rows], dtype=np.int64)
        if task == "A":
            gold = gold[:, :1]
    else:
        raise UsageError("eval needs --pred or --checkpoint")
    names = LABEL_NAMES[: pred.shape[1]]
    report = metrics_report(pred, gold[:, : pred.shape[1]], names, subtypes_only=args.subtypes_only)
    print(report.to_table())
    if args.out:
        Path(args.out).write_text(report.to_tsv(), encoding="utf-8")
    return EXIT_OK


def cmd_ablate_lambda(args):
    for lam in args.lambdas:
        if not 0.0 <= lam <= 1.0:
            raise UsageError(f"lambda values must lie in [0, 1], got {lam}")
    tasks = args.tasks
    train, valid, graph = _load_data(args, need_graph="B" in tasks)
    rows = []
    for lam in sorted(args.lambdas):
        cells = [f"{lam:g}"]
        for task in ("A", "B"):
            if task in tasks:
                r = fit(train, valid, _train_config(args, lam=lam), task, graph)
                cells.append(f"{task_score(r.best.report, task):.6f}")
            else:
                cells.append("NA")
        rows.append("\t".join(cells))
    text = "\n".join([_report_header(args), "lambda\ttask_a_macro_f1\ttask_b_weighted_f1"] + rows) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_ablate_depth(args):
    for d in args.depths:
        if d not in DEPTH_SCHEDULES:
            raise UsageError(f"depth must be one of {sorted(DEPTH_SCHEDULES)}, got {d}")
    train, valid, graph = _load_data(args)
    rows = []
    for depth in sorted(args.depths):
        cfg = _train_config(args, depth=depth)
        r = fit(train, valid, cfg, "B", graph)
        rows.append(f"{depth}\t{','.join(map(str, cfg.gcn_dims))}\t{r.best.report.task_b_score:.6f}")
    text = "\n".join([_report_header(args), "depth\tdims\ttask_b_weighted_f1"] + rows) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_compare_loss(args):
    train, valid, graph = _load_data(args)
    names = list(LABEL_NAMES)
    header = ["loss_kind", "task_b_weighted_f1", "initial_loss", "initial_softmargin_loss"]
    header += [f"f1pos_{n}" for n in names] + [f"wf1_{n}" for n in names]
    rows = []
    for kind in ("custom", "softmargin"):
        r = fit(train, valid, _train_config(args, loss_kind=kind), "B", graph)
        rep = r.best.report
        # same criterion for both rows, so equal values confirm the shared initialisation
        common = batch_loss(train.visual, train.textual, train.labels, r.initial_params, None, "B", "softmargin", graph)
        cells = [kind, f"{rep.task_b_score:.6f}", f"{r.history[0].train_loss:.8f}", f"{common:.8f}"]
        cells += [f"{s.f1_pos:.6f}" for s in rep.per_label] + [f"{s.weighted_f1:.6f}" for s in rep.per_label]
        rows.append("\t".join(cells))
    text = "\n".join([_report_header(args), "\t".join(header)] + rows) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_build_adjacency(args):
    pools = [np.array([f for _, f in dataio.read_labels(args.labels)], dtype=np.int64).reshape(-1, len(LABEL_NAMES))]
    for extra in args.extra_labels or ():
        pools.append(np.array([f for _, f in dataio.read_labels(extra)], dtype=np.int64).reshape(-1, len(LABEL_NAMES)))
    adj = build_adjacency(build_cooccurrence(np.vstack(pools)))
    lines = ["\t".join(LABEL_NAMES)]
    lines += ["\t".join(f"{v:.12g}" for v in row) for row in adj.a]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_compute_weights(args):
    counts = args.counts
    names = LABEL_NAMES if len(counts) == len(LABEL_NAMES) else tuple(f"label{i}" for i in range(len(counts)))
    w = compute_class_weights(counts, args.n, args.formula)
    lines = ["label\tw_pos\tw_neg"]
    lines += [f"{name}\t{wp:.6f}\t{wn:.6f}" for name, wp, wn in zip(names, w.w_pos, w.w_neg)]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_grad_check(args):
    from .gradcheck import check_model_gradients

    worst = check_model_gradients(args.seed, tasks=args.tasks, loss_kinds=args.losses, depths=args.depths)
    for key, err in worst.items():
        print(f"{key}\t{err:.3e}")
    overall = max(worst.values())
    print(f"max relative error {overall:.3e}")
    return EXIT_OK if overall < args.tolerance else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memegcn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write a seeded synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-valid", type=int, default=500)
    p.add_argument("--n-trial", type=int, default=0)
    p.add_argument("--d-v", type=int, default=32, help="visual width per region")
    p.add_argument("--regions", type=int, default=1, help="regions flattened into the visual vector")
    p.add_argument("--e", type=int, default=32, help="textual width")
    p.add_argument("--e-emb", type=int, default=16, help="label-word vector width")
    p.add_argument("--imbalance", type=_floats, default=MAMI_RATES,
                   help="five positive rates (default: training-set label proportions)")
    p.add_argument("--separability", type=float, default=3.0)
    p.add_argument("--text-signal-fraction", type=float, default=0.7)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train one head and write a checkpoint and epoch log")
    p.add_argument("--task", choices=("A", "B"), required=True)
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--log", type=Path, default=None, help="per-epoch TSV log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--gold", type=Path, required=True)
    p.add_argument("--pred", type=Path, default=None, help="predicted labels TSV")
    p.add_argument("--checkpoint", type=Path, default=None, help="predict with a checkpoint instead")
    p.add_argument("--data", type=Path, default=None)
    p.add_argument("--split", default="valid")
    p.add_argument("--gate-subtypes", action="store_true")
    p.add_argument("--subtypes-only", action="store_true")
    p.add_argument("--out", type=Path, default=None, help="write the report as TSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate-lambda", help="train once per lambda value")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--lambdas", type=_floats, default=DEFAULT_LAMBDAS)
    p.add_argument("--tasks", choices=("A", "B", "AB"), default="AB")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_ablate_lambda)

    p = sub.add_parser("ablate-depth", help="train the multi-label head once per graph depth")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--depths", type=_ints, default=tuple(sorted(DEPTH_SCHEDULES)))
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_ablate_depth)

    p = sub.add_parser("compare-loss", help="custom weighted loss against soft-margin loss")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_compare_loss)

    p = sub.add_parser("build-adjacency", help="label co-occurrence adjacency as TSV")
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--extra-labels", type=Path, action="append")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_build_adjacency)

    p = sub.add_parser("compute-weights", help="class weights for the custom loss")
    p.add_argument("--counts", type=_ints, required=True, help="positives per label, comma-separated")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--formula", choices=("balanced", "frequency"), default="balanced")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_compute_weights)

    p = sub.add_parser("grad-check", help="finite-difference check of every model gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", dest="tasks", choices=("A", "B", "AB"), default="AB")
    p.add_argument("--losses", type=lambda s: tuple(s.split(",")), default=("custom", "softmargin"))
    p.add_argument("--depths", type=_ints, default=(2, 3))
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc.args[-1] if exc.filename is None else exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (MemeGCNError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
