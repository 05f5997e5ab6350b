"""Single entry point exposing the pipeline as subcommands.

Heavy imports happen inside the handlers so ``--threads`` can pin BLAS
thread counts before numpy loads; together with fixed seeds that makes
every training and evaluation command bit-reproducible.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _pin_threads(argv: list[str]) -> None:
    value = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            value = argv[i + 1]
        elif arg.startswith("--threads="):
            value = arg.split("=", 1)[1]
    if value and value.isdigit():
        for var in _THREAD_VARS:
            os.environ[var] = value


def _str2bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {v!r}")


def _add_section_flags(parser: argparse.ArgumentParser, section: str, cls) -> None:
    import dataclasses

    group = parser.add_argument_group(f"[{section}] overrides")
    for f in dataclasses.fields(cls):
        flag = f"--{section}-{f.name.replace('_', '-')}"
        kind = _str2bool if f.type in ("bool", bool) else type(f.default)
        group.add_argument(flag, dest=f"{section}__{f.name}", type=kind, default=None)


def _collect_overrides(args: argparse.Namespace) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for key, value in vars(args).items():
        if "__" in key and value is not None:
            section, name = key.split("__", 1)
            out.setdefault(section, {})[name] = value
    return out


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override every seed")
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
    parser.add_argument("--preset", default=None, help="named preset (e.g. desk)")
    parser.add_argument("--config", default=None, help="TOML config file")


def _configs(args: argparse.Namespace) -> dict:
    from .config import assemble

    cfgs = assemble(args.preset, args.config, _collect_overrides(args))
    if args.seed is not None:
        import dataclasses

        for section in ("kbe", "qa", "gen"):
            cfgs[section] = dataclasses.replace(cfgs[section], seed=args.seed)
    return cfgs


def _default_types_path(kb_path: Path) -> Path:
    return kb_path.with_name(kb_path.name.replace("kb", "types", 1))


def build_parser() -> argparse.ArgumentParser:
    from .benchmark import GenConfig
    from .embedding import TrainConfig
    from .qa import QaConfig

    parser = argparse.ArgumentParser(
        prog="linkqa",
        description="QA over multiple KBs joined by full and partial links",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine-links", help="discover links between two KBs by name similarity")
    p.add_argument("--kb1", required=True, type=Path)
    p.add_argument("--kb2", required=True, type=Path)
    p.add_argument("--types1", type=Path, default=None)
    p.add_argument("--types2", type=Path, default=None)
    p.add_argument("--threshold", type=float, default=0.85)
    p.add_argument("--max-pairs", type=int, default=5)
    p.add_argument("--exact", action="store_true", help="disable candidate blocking")
    p.add_argument("--out", required=True, type=Path)
    _common_flags(p)

    p = sub.add_parser("gen-bench", help="generate a synthetic benchmark")
    p.add_argument("--out-dir", required=True, type=Path)
    _common_flags(p)
    _add_section_flags(p, "gen", GenConfig)

    p = sub.add_parser("train-kbe", help="train the link-aware KB embedding")
    p.add_argument("--data", required=True, type=Path, help="benchmark directory")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument(
        "--links-mode",
        choices=("all", "full", "none"),
        default="all",
        help="which links enter training",
    )
    p.add_argument("--kbs", default=None, help="comma-separated KB ids to embed (default all)")
    _common_flags(p)
    _add_section_flags(p, "kbe", TrainConfig)

    p = sub.add_parser("plug-in", help="add a KB to a frozen embedding")
    p.add_argument("--frozen", required=True, type=Path, help="base model directory")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--new-kb", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)
    _common_flags(p)
    _add_section_flags(p, "kbe", TrainConfig)

    p = sub.add_parser("train-qa", help="train the question encoder")
    p.add_argument("--embedding", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _common_flags(p)
    _add_section_flags(p, "qa", QaConfig)

    p = sub.add_parser("eval", help="run a system variant end to end")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument(
        "--variant",
        required=True,
        choices=("no-link", "merge-kb", "full-link", "multi-kb"),
    )
    p.add_argument("--seeds", default="13,17,19", help="comma-separated seeds")
    p.add_argument("--split", choices=("dev", "test"), default="dev")
    p.add_argument("--unplug", type=int, action="append", default=[])
    p.add_argument(
        "--merge-partial",
        action="store_true",
        help="merge-kb also contracts partial links (failure regression)",
    )
    p.add_argument("--out", type=Path, default=None, help="report JSON path")
    p.add_argument("--emit-csv", type=Path, default=None, help="breakdown cells CSV")
    _common_flags(p)
    _add_section_flags(p, "kbe", TrainConfig)
    _add_section_flags(p, "qa", QaConfig)

    p = sub.add_parser("ask", help="rank answers for one question")
    p.add_argument("--model", required=True, type=Path, help="QA model directory")
    p.add_argument("--question", required=True)
    p.add_argument("--topic", action="append", required=True, help="repeatable")
    p.add_argument("--unplug", type=int, action="append", default=[])
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--data", type=Path, default=None, help="benchmark dir for name lookup")
    _common_flags(p)

    return parser


# -- handlers -----------------------------------------------------------------


def _cmd_mine_links(args) -> int:
    from .kb import KbRegistry, load_kb, save_links
    from .mining import MinerConfig, mine_links

    types1 = args.types1 or _default_types_path(args.kb1)
    types2 = args.types2 or _default_types_path(args.kb2)
    for t in (types1, types2):
        if not Path(t).exists():
            raise FileNotFoundError(
                f"entity-type sidecar {t} not found (pass --types1/--types2)"
            )
    kb1 = load_kb(args.kb1, 1, types1)
    kb2 = load_kb(args.kb2, 2, types2)
    cfg = MinerConfig(
        similarity_threshold=args.threshold,
        max_pairs_per_entity=args.max_pairs,
        blocking=not args.exact,
    )
    links = mine_links(kb1, kb2, cfg)
    save_links(links, args.out, KbRegistry([kb1, kb2]))
    print(f"wrote {len(links)} links ({links!r}) to {args.out}")
    return 0


def _cmd_gen_bench(args) -> int:
    from .benchmark import generate_dataset, generate_synthetic_kbs, write_benchmark
    from .kb import KbRegistry

    gen = _configs(args)["gen"]
    kb1, kb2, links = generate_synthetic_kbs(gen)
    splits = generate_dataset(gen, KbRegistry([kb1, kb2]), links)
    write_benchmark(args.out_dir, kb1, kb2, links, splits, gen)
    counts = {k: len(v) for k, v in splits.items()}
    print(f"wrote benchmark to {args.out_dir}: {kb1!r}, {kb2!r}, {links!r}, {counts}")
    return 0


def _data_input_hashes(data: Path) -> dict:
    from .manifest import input_hashes

    names = ["kb1.tsv", "kb2.tsv", "types1.tsv", "types2.tsv", "links.tsv",
             "train.jsonl", "dev.jsonl", "test.jsonl"]
    return input_hashes({n: data / n for n in names if (data / n).exists()})


def _cmd_train_kbe(args) -> int:
    from .benchmark import load_benchmark
    from .embedding import save_model, train_embedding
    from .kb import KbRegistry, LinkSet, LinkType

    cfg = _configs(args)["kbe"]
    kbs, links, _ = load_benchmark(args.data)
    if args.kbs:
        keep = sorted(int(k) for k in args.kbs.split(","))
        kbs = KbRegistry([kbs[k] for k in keep])
        links = LinkSet(
            ln for ln in links if ln.e1.kb_id in keep and ln.e2.kb_id in keep
        )
    if args.links_mode == "none":
        links = LinkSet()
    elif args.links_mode == "full":
        links = links.restrict(LinkType.FULL)
    model = train_embedding(kbs, links, cfg)
    save_model(
        model,
        args.out,
        extra={
            "command": "train-kbe",
            "links_mode": args.links_mode,
            "data_dir": str(args.data),
            "inputs": _data_input_hashes(args.data),
        },
    )
    stats = model.meta["train_stats"]
    print(
        f"trained embedding (h={cfg.h}) on {stats['n_train_triples_weighted']} "
        f"weighted triples; best training MRR {stats['best_training_mrr']:.3f} "
        f"-> {args.out}"
    )
    return 0


def _cmd_plug_in(args) -> int:
    from .benchmark import load_benchmark
    from .embedding import load_model, save_model, train_plug_in

    cfg = _configs(args)["kbe"]
    kbs, links, _ = load_benchmark(args.data)
    frozen = load_model(args.frozen)
    new_kb = kbs[args.new_kb]
    model = train_plug_in(frozen, kbs, new_kb, links, cfg)
    save_model(
        model,
        args.out,
        extra={
            "command": "plug-in",
            "frozen_dir": str(args.frozen),
            "new_kb": args.new_kb,
            "data_dir": str(args.data),
            "inputs": _data_input_hashes(args.data),
        },
    )
    stats = model.meta["train_stats"]
    print(
        f"plugged KB {args.new_kb} in ({stats['n_train_triples_weighted']} weighted "
        f"triples); best training MRR {stats['best_training_mrr']:.3f} -> {args.out}"
    )
    return 0


def _cmd_train_qa(args) -> int:
    from .benchmark import load_benchmark
    from .embedding import load_model
    from .qa import save_qa, train_qa

    cfg = _configs(args)["qa"]
    _, _, splits = load_benchmark(args.data)
    embedding = load_model(args.embedding)
    model = train_qa(embedding, splits["train"], splits["dev"], cfg)
    save_qa(
        model,
        args.out,
        embedding_dir=args.embedding,
        extra={
            "command": "train-qa",
            "data_dir": str(args.data),
            "inputs": _data_input_hashes(args.data),
        },
    )
    stats = model.meta["train_stats"]
    print(f"trained QA encoder; best dev MRR {stats['best_dev_mrr']:.3f} -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    import dataclasses
    import json

    from .evaluation import breakdown_csv, report_table, run_variant

    cfgs = _configs(args)
    seeds = [int(s) for s in str(args.seeds).split(",") if s.strip()]
    report = run_variant(
        args.variant,
        args.data,
        cfgs["kbe"],
        cfgs["qa"],
        seeds=seeds,
        split=args.split,
        unplug=tuple(args.unplug),
        merge_partial=args.merge_partial,
    )
    print(report_table(report))
    if args.out:
        payload = {
            "run_config": {
                "kbe": dataclasses.asdict(cfgs["kbe"]),
                "qa": dataclasses.asdict(cfgs["qa"]),
                "variant": args.variant,
                "split": args.split,
                "seeds": seeds,
                "unplug": list(args.unplug),
                "merge_partial": args.merge_partial,
                "data_dir": str(args.data),
                "inputs": _data_input_hashes(args.data),
            },
            "report": report.to_dict(),
        }
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        print(f"report written to {args.out}")
    if args.emit_csv:
        Path(args.emit_csv).write_text(breakdown_csv(report), encoding="utf-8")
        print(f"breakdown CSV written to {args.emit_csv}")
    return 0


def _cmd_ask(args) -> int:
    from .benchmark import load_benchmark
    from .kb import EntityRef
    from .manifest import read_manifest
    from .qa import load_qa
    from .records import _ref_from_str

    model = load_qa(args.model)
    kbs = None
    data_dir = args.data or read_manifest(args.model).get("data_dir")
    if data_dir and Path(data_dir).exists():
        kbs, _, _ = load_benchmark(data_dir)

    topics = []
    for t in args.topic:
        try:
            topics.append(_ref_from_str(t, kbs))
        except (KeyError, ValueError) as exc:
            raise KeyError(f"unknown topic entity {t!r}: {exc}") from None
    candidates = model.universe(exclude_kbs=tuple(args.unplug))
    if not candidates:
        raise ValueError("all KBs unplugged: empty candidate set")

    hq = model.encoder.encode(args.question)
    import numpy as np

    from . import cvec
    from .cvec import sigmoid

    mat = np.stack([model.embedding.entity_vec(c) for c in candidates])
    total = np.zeros(len(candidates))
    for e in topics:
        comp = cvec.cmul(model.embedding.entity_vec(e), hq)
        total += sigmoid(cvec.score_against_table(comp, mat))
    avg = total / len(topics)
    kbids = np.array([c.kb_id for c in candidates])
    locals_ = np.array([c.local_id for c in candidates])
    order = np.lexsort((locals_, kbids, -avg))

    def display(ref: EntityRef) -> str:
        if kbs is not None and ref.kb_id in kbs:
            return f"{ref}\t{kbs[ref.kb_id].entity_name(ref.local_id)}"
        return str(ref)

    for rank, i in enumerate(order[: args.top], start=1):
        print(f"{rank}\t{avg[i]:.4f}\t{display(candidates[i])}")
    return 0


_HANDLERS = {
    "mine-links": _cmd_mine_links,
    "gen-bench": _cmd_gen_bench,
    "train-kbe": _cmd_train_kbe,
    "plug-in": _cmd_plug_in,
    "train-qa": _cmd_train_qa,
    "eval": _cmd_eval,
    "ask": _cmd_ask,
}


def dispatch(argv: list[str]) -> int:
    """Parse and run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except BrokenPipeError:
        return 0
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else str(exc.args[0])
        print(f"error: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    argv = sys.argv[1:]
    _pin_threads(argv)
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
