"""Command-line front end: data generation, training, prediction, fuzzing,
and A/B comparison of campaign report sets."""

import argparse
import json
import os
import statistics
import sys
from typing import Dict, List, Optional

from . import __version__, acfg, engine, model, scoring, synth
from .vm import assemble, gen_target  # noqa: F401  (gen_target reachable for scripts)
from .vm.core import ProgramTarget

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class DataError(Exception):
    pass


def _manifest(args: argparse.Namespace, subcommand: str) -> dict:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {"tool": "vulnfuzz", "version": __version__,
            "subcommand": subcommand, "flags": flags}


def cmd_gen_data(args) -> int:
    if args.count <= 0:
        raise DataError("empty corpus requested")
    if args.count % 2:
        raise DataError("--count must be even (balanced classes)")
    spec = synth.SynthSpec(count_per_class=args.count // 2,
                           signal_strength=args.signal,
                           rng_seed=args.seed)
    corpus = synth.generate(spec)
    train, test = synth.split(corpus, args.train_frac, args.seed)
    synth.write_corpus(args.out_train, train)
    synth.write_corpus(args.out_test, test)
    manifest = _manifest(args, "gen-data")
    manifest["spec"] = {"count_per_class": spec.count_per_class,
                        "signal_strength": spec.signal_strength,
                        "rng_seed": spec.rng_seed}
    with open(args.out_train + ".manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    print(f"wrote {len(train)} train / {len(test)} test graphs")
    return EXIT_OK


def cmd_train(args) -> int:
    train_corpus = synth.read_corpus(args.corpus)
    test_corpus = synth.read_corpus(args.test)
    hyper = model.Hyperparams(a=acfg.DEFAULT_DIMENSION, d=args.dim,
                              n=args.depth, T=args.iters,
                              learning_rate=args.lr, epochs=args.epochs,
                              rng_seed=args.seed)
    initial = None
    start_epoch = 0
    if args.resume:
        initial, _ = model.load_checkpoint(args.resume, hyper)
        start_epoch = args.resume_epoch
    params, trace = model.train(train_corpus, hyper, initial, start_epoch)
    model.save_checkpoint(params, hyper, args.out)
    n = len(test_corpus)
    ks = sorted({min(200, n), n})
    report = model.evaluate(test_corpus, params, hyper, ks)
    metrics = {
        "manifest": _manifest(args, "train"),
        "loss_trace": trace,
        "accuracy_at_k": {str(k): v for k, v in report.accuracy_at_k.items()},
        "recall": report.recall,
        "mean_loss": report.mean_loss,
    }
    with open(args.out + ".metrics.json", "w") as f:
        json.dump(metrics, f, indent=1)
    accs = ", ".join(f"acc@{k}={report.accuracy_at_k[k]:.3f}" for k in ks)
    print(f"{accs}, recall={report.recall:.3f}, loss={report.mean_loss:.4f}")
    return EXIT_OK


def _load_program_acfg(args) -> acfg.ProgramAcfg:
    if args.target:
        with open(args.target) as f:
            prog = assemble(f.read(), os.path.basename(args.target))
        from .vm import extract_acfg
        return extract_acfg(prog)
    with open(args.acfg) as f:
        return acfg.parse(f.read())


def cmd_predict(args) -> int:
    pacfg = _load_program_acfg(args)
    if args.oracle_svs:
        with open(args.oracle_svs) as f:
            oracle = json.load(f)
        default_p = oracle.get("default")
        fn_ps = oracle.get("functions", {})
        predictions = {}
        for fn in pacfg.functions:
            p = fn_ps.get(fn.function_name, default_p)
            if p is None:
                raise DataError(
                    f"oracle file gives no p for {fn.function_name!r}")
            predictions[fn.function_name] = float(p)
    else:
        if not args.checkpoint:
            raise DataError("need --checkpoint or --oracle-svs")
        params, hyper = model.load_checkpoint(args.checkpoint)
        if hyper.a != pacfg.schema_dim:
            raise DataError(
                f"checkpoint expects {hyper.a} attributes, "
                f"program has {pacfg.schema_dim}")
        predictions = {
            fn.function_name: model.forward(fn, params, hyper).p
            for fn in pacfg.functions
        }
    blocks = {fn.function_name: [b.id for b in fn.blocks]
              for fn in pacfg.functions}
    svs = scoring.assign_svs(predictions, blocks, args.kappa, args.omega)
    scoring.dump_svs(svs, args.out)
    for name in sorted(predictions):
        print(f"{name}\tp={predictions[name]:.6f}")
    return EXIT_OK


def _read_seeds(seeds_dir: str) -> List[bytes]:
    seeds = []
    for name in sorted(os.listdir(seeds_dir)):
        path = os.path.join(seeds_dir, name)
        if os.path.isfile(path):
            with open(path, "rb") as f:
                seeds.append(f.read())
    if not seeds:
        raise DataError(f"no seed files in {seeds_dir}")
    return seeds


def cmd_fuzz(args) -> int:
    if not args.coverage_mode and not args.svs:
        raise DataError("svs_sum mode needs --svs (or pass --coverage-mode)")
    with open(args.target) as f:
        prog = assemble(f.read(), os.path.basename(args.target))
    adapter = ProgramTarget(prog, step_limit=args.step_limit)
    svs = scoring.load_svs(args.svs) if args.svs else None
    seeds = _read_seeds(args.seeds_dir)
    config = engine.CampaignConfig(
        population=args.pop, top_k=args.topk,
        ini_cw=args.ini_cw, min_cw=args.min_cw, max_cw=args.max_cw,
        fitness_mode="coverage_count" if args.coverage_mode else "svs_sum",
        budget_execs=args.budget_execs, stop_on_crash=args.stop_on_crash,
        rng_seed=args.seed)
    if args.jobs != 1:
        print("note: --jobs > 1 not implemented; running sequentially",
              file=sys.stderr)
    report = engine.run_campaign(adapter, svs, seeds, config)
    os.makedirs(args.out, exist_ok=True)
    engine.write_report_json(report, os.path.join(args.out, "report.json"),
                             _manifest(args, "fuzz"))
    engine.write_report_csv(report, os.path.join(args.out, "report.csv"))
    n_crashes = len(report.crash_catalog)
    print(f"executions={report.total_executions} unique_crashes={n_crashes} "
          f"covered_blocks={len(report.covered_blocks)}")
    if report.aborted:
        print(f"campaign aborted: {report.aborted}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.fail_no_crash and n_crashes == 0:
        return 1
    return EXIT_OK


def _trial_reports(dirpath: str) -> Dict[str, dict]:
    out = {}
    for name in sorted(os.listdir(dirpath)):
        if name.endswith(".json"):
            with open(os.path.join(dirpath, name)) as f:
                out[name] = json.load(f)
    if not out:
        raise DataError(f"no trial reports in {dirpath}")
    return out


def _mode_stats(reports: Dict[str, dict]) -> dict:
    # Trials without a crash are censored at their total execution count.
    ttfc = [r["first_crash_execution"] if r["first_crash_execution"]
            is not None else r["total_executions"]
            for r in reports.values()]
    q = statistics.quantiles(ttfc, n=4) if len(ttfc) > 1 else [ttfc[0]] * 3
    return {
        "trials": len(reports),
        "crashes_found_in": sum(
            1 for r in reports.values() if r["first_crash_execution"] is not None),
        "execs_to_first_crash_median": statistics.median(ttfc),
        "execs_to_first_crash_iqr": q[2] - q[0],
        "unique_crashes_at_budget": statistics.median(
            len(r["crash_catalog"]) for r in reports.values()),
        "covered_blocks_at_budget": statistics.median(
            len(r["covered_blocks"]) for r in reports.values()),
    }


def cmd_compare(args) -> int:
    a = _trial_reports(args.a)
    b = _trial_reports(args.b)
    if sorted(a) != sorted(b):
        raise DataError(
            f"unpaired trials: {sorted(a)} in --a vs {sorted(b)} in --b")
    sa, sb = _mode_stats(a), _mode_stats(b)
    winners = {
        "execs_to_first_crash": (
            "a" if sa["execs_to_first_crash_median"] < sb["execs_to_first_crash_median"]
            else "b" if sb["execs_to_first_crash_median"] < sa["execs_to_first_crash_median"]
            else "tie"),
        "unique_crashes": (
            "a" if sa["unique_crashes_at_budget"] > sb["unique_crashes_at_budget"]
            else "b" if sb["unique_crashes_at_budget"] > sa["unique_crashes_at_budget"]
            else "tie"),
        "covered_blocks": (
            "a" if sa["covered_blocks_at_budget"] > sb["covered_blocks_at_budget"]
            else "b" if sb["covered_blocks_at_budget"] > sa["covered_blocks_at_budget"]
            else "tie"),
    }
    summary = {"manifest": _manifest(args, "compare"),
               "a": sa, "b": sb, "winners": winners}
    with open(args.out, "w") as f:
        json.dump(summary, f, indent=1)
    for metric, w in winners.items():
        print(f"{metric}: winner {w}")
    return EXIT_OK


def cmd_report(args) -> int:
    with open(args.report) as f:
        rep = json.load(f)
    gens = rep["generations"]
    print(f"generations: {len(gens)}")
    print(f"executions: {rep['total_executions']}")
    print(f"unique crashes: {len(rep['crash_catalog'])}")
    print(f"covered blocks: {len(rep['covered_blocks'])}")
    print(f"first crash at execution: {rep['first_crash_execution']}")
    for key, data_hex in sorted(rep["crash_catalog"].items()):
        print(f"  {key} <- {data_hex}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vulnfuzz",
        description="Vulnerability-oriented evolutionary fuzzing pipeline")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("gen-data", help="generate labeled training corpora")
    g.add_argument("--out-train", required=True)
    g.add_argument("--out-test", required=True)
    g.add_argument("--count", type=int, required=True,
                   help="total graphs, split evenly between classes")
    g.add_argument("--signal", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--train-frac", type=float, default=0.9)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the prediction model")
    t.add_argument("--corpus", required=True)
    t.add_argument("--test", required=True)
    t.add_argument("--dim", type=int, default=16)
    t.add_argument("--depth", type=int, default=2)
    t.add_argument("--iters", type=int, default=3)
    t.add_argument("--lr", type=float, default=0.0001)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--resume-epoch", type=int, default=0)
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict p per function, emit SVS")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--target", help="program text file")
    src.add_argument("--acfg", help="ACFG JSON document")
    p.add_argument("--checkpoint")
    p.add_argument("--oracle-svs",
                   help="JSON {'default': p, 'functions': {name: p}} "
                        "bypassing the model")
    p.add_argument("--kappa", type=float, default=scoring.DEFAULT_KAPPA)
    p.add_argument("--omega", type=float, default=scoring.DEFAULT_OMEGA)
    p.add_argument("--out", required=True, help="SVS dump path")
    p.set_defaults(func=cmd_predict)

    f = sub.add_parser("fuzz", help="run a fuzzing campaign")
    f.add_argument("--target", required=True)
    f.add_argument("--seeds-dir", required=True)
    f.add_argument("--svs", help="SVS dump file (svs_sum mode)")
    f.add_argument("--coverage-mode", action="store_true")
    f.add_argument("--pop", type=int, default=50)
    f.add_argument("--topk", type=int, default=10)
    f.add_argument("--ini-cw", type=int, default=8)
    f.add_argument("--min-cw", type=int, default=2)
    f.add_argument("--max-cw", type=int, default=64)
    f.add_argument("--budget-execs", type=int, default=100_000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="report directory")
    f.add_argument("--step-limit", type=int, default=100_000)
    f.add_argument("--stop-on-crash", action="store_true")
    f.add_argument("--fail-no-crash", action="store_true")
    f.add_argument("--jobs", type=int, default=1)
    f.set_defaults(func=cmd_fuzz)

    c = sub.add_parser("compare", help="compare two paired report sets")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("report", help="summarize a campaign report")
    r.add_argument("--report", required=True)
    r.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, acfg.AcfgFormatError, model.CheckpointError,
            FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        print(f"abort: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
