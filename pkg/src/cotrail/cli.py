"""Command-line entry point orchestrating the pipeline.

Subcommands: gen, embed, index-check, seedlist-init, expand, train, eval,
entropy, entropy-empirical, repro.  Exit codes: 0 on success, 2 for usage
or configuration errors, 1 for runtime failures.  ``--seed``, ``--config``
and ``--out`` behave the same everywhere; flag values override the
corresponding config-file keys.

The config file is INI-style with one section per stage, e.g.::

    [gen]
    k = 400
    p_o = 0.25

    [embed]
    dim = 32
    epochs = 5

    [expand]
    delta_sim = 0.5

    [lr]
    learning_rate = 0.1
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from cotrail import annindex, convmodel, embed, infotheory, seedexp, synthgen
from cotrail._backend import kernel_backend
from cotrail.datamodel import load_corpus, save_corpus
from cotrail.report import EvalRow, emit_report, plot_sweep, write_sweep_csv
from cotrail.synthgen import ConfigError


def _load_config(path: str | None) -> dict[str, dict[str, str]]:
    if not path:
        return {}
    if not Path(path).exists():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _merge(cfg: dict, section: str, key: str, flag_value, cast, default):
    """Precedence: command-line flag, then config key, then default."""
    if flag_value is not None:
        return flag_value
    raw = cfg.get(section, {}).get(key)
    if raw is None:
        return default
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError:
        raise ConfigError(f"field {key}: cannot parse {raw!r}") from None


def _synth_config(cfg: dict, args) -> synthgen.SynthConfig:
    g = lambda key, flag, cast, default: _merge(cfg, "gen", key, flag, cast, default)
    return synthgen.SynthConfig(
        orgs=g("k", args.k, int, 100),
        researchers=g("r", args.r, int, 1),
        non_researchers=g("n", args.n, int, 1),
        org_conv_prob=g("p_o", args.p_o, float, 0.2),
        type2_fraction=g("type2_fraction", args.type2_fraction, float, 0.5),
        n_relevant=g("n_relevant", args.n_relevant, int, 20),
        n_noise=g("n_noise", args.n_noise, int, 1000),
        relevant_rate=g("relevant_rate", args.relevant_rate, float, 2.0),
        trail_len=g("trail_len", args.trail_len, float, 40.0),
        rng_seed=g("seed", args.seed, int, 0),
        interest_size=g("interest_size", None, int, 4),
        research_sessions=g("research_sessions", None, int, 3),
    )


def _train_params(cfg: dict, args, seed_default: int = 0) -> embed.TrainParams:
    g = lambda key, flag, cast, default: _merge(cfg, "embed", key, flag, cast, default)
    return embed.TrainParams(
        dim=g("dim", getattr(args, "dim", None), int, 32),
        window=g("window", getattr(args, "window", None), int, 5),
        negatives=g("negatives", getattr(args, "negatives", None), int, 5),
        epochs=g("epochs", getattr(args, "epochs", None), int, 5),
        learning_rate=g("learning_rate", None, float, 0.025),
        min_count=g("min_count", getattr(args, "min_count", None), int, 2),
        subsample_threshold=g("subsample_threshold",
                              getattr(args, "subsample_threshold", None), float, 1e-3),
        rng_seed=g("seed", getattr(args, "seed", None), int, seed_default),
        deterministic=not getattr(args, "parallel", False),
        workers=g("workers", getattr(args, "workers", None), int, 4),
    )


def _expansion_params(cfg: dict, args) -> seedexp.ExpansionParams:
    g = lambda key, flag, cast, default: _merge(cfg, "expand", key, flag, cast, default)
    return seedexp.ExpansionParams(
        delta_sim=g("delta_sim", getattr(args, "delta_sim", None), float, 0.5),
        delta_nbr=g("delta_nbr", getattr(args, "delta_nbr", None), int, 2),
        epsilon=g("epsilon", getattr(args, "epsilon", None), float, 0.001),
        max_iterations=g("max_iterations", getattr(args, "max_iterations", None), int, 10),
        k_initial=g("k_initial", getattr(args, "k_initial", None), int, 50),
        label_window_seconds=g("label_window_days",
                               getattr(args, "label_window_days", None), int, 60) * 86400,
        min_support=g("min_support", getattr(args, "min_support", None), int, 5),
    )


def _lr_params(cfg: dict, args, seed_default: int = 0) -> convmodel.LrParams:
    g = lambda key, flag, cast, default: _merge(cfg, "lr", key, flag, cast, default)
    return convmodel.LrParams(
        learning_rate=g("learning_rate", getattr(args, "lr", None), float, 0.1),
        l2=g("l2", getattr(args, "l2", None), float, 1e-4),
        epochs=g("epochs", getattr(args, "lr_epochs", None), int, 10),
        rng_seed=g("seed", getattr(args, "seed", None), int, seed_default),
    )


def _require_file(path: str, what: str) -> str:
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------- subcommands

def _cmd_gen(args) -> int:
    cfg = _load_config(args.config)
    if args.preset == "two-org":
        corpus, truth = synthgen.demo_two_org_corpus()
    else:
        corpus, truth = synthgen.generate(_synth_config(cfg, args))
    save_corpus(corpus, args.out)
    if args.truth:
        synthgen.save_truth(truth, args.truth)
    stats = synthgen.empirical_stats(corpus, truth)
    print(f"wrote {args.out}: {stats.n_users} users, "
          f"{stats.n_converters} converters (p_u={stats.user_conv_rate:.4f})")
    return 0


def _cmd_embed(args) -> int:
    cfg = _load_config(args.config)
    corpus = load_corpus(_require_file(args.corpus, "corpus"))
    params = _train_params(cfg, args)
    table = embed.train(corpus, params)
    embed.save_embeddings(table, args.out)
    print(f"wrote {args.out}: {len(table)} vectors of dim {params.dim} "
          f"(backend={kernel_backend()}, final epoch loss {table.epoch_losses[-1]:.4f})")
    return 0


def _cmd_index_check(args) -> int:
    table = embed.load_embeddings(_require_file(args.embeddings, "embeddings"))
    index = annindex.build(table, n_tables=args.n_tables, n_planes=args.n_planes,
                           rng_seed=args.seed or 0)
    rng = np.random.default_rng(args.seed or 0)
    n_q = min(args.queries, len(table))
    queries = [table.vocab_order[i]
               for i in rng.choice(len(table), size=n_q, replace=False)]
    recall = annindex.recall_at_k(index, table, queries, args.k)
    print(f"recall@{args.k} = {recall:.4f} over {n_q} queries "
          f"({args.n_tables} tables x {args.n_planes} planes)")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("n_tables,n_planes,k,queries,recall\n")
            fh.write(f"{args.n_tables},{args.n_planes},{args.k},{n_q},{recall:.6f}\n")
    return 0


def _cmd_seedlist_init(args) -> int:
    cfg = _load_config(args.config)
    corpus = load_corpus(_require_file(args.corpus, "corpus"))
    params = _expansion_params(cfg, args)
    include = convmodel.load_seedlist(_require_file(args.include, "include file")).activities \
        if args.include else ()
    exclude = convmodel.load_seedlist(_require_file(args.exclude, "exclude file")).activities \
        if args.exclude else ()
    seed = seedexp.initial_seedlist(corpus, params, manual_include=include,
                                    manual_exclude=exclude)
    convmodel.save_seedlist(seed, args.out)
    print(f"wrote {args.out}: {len(seed)} activities")
    return 0


def _cmd_expand(args) -> int:
    cfg = _load_config(args.config)
    corpus = load_corpus(_require_file(args.corpus, "corpus"))
    table = embed.load_embeddings(_require_file(args.embeddings, "embeddings"))
    s_initial = convmodel.load_seedlist(_require_file(args.seedlist, "seed list"))
    params = _expansion_params(cfg, args)
    lr_params = _lr_params(cfg, args)
    split = convmodel.make_split(corpus, args.split_seed)
    final, trace = seedexp.expand(corpus, s_initial, params, table, split,
                                  lr_params=lr_params)
    convmodel.save_seedlist(final, args.out)
    if args.trace:
        seedexp.write_trace_csv(trace, args.trace)
    accepted = sum(1 for r in trace.records[1:] if r.accepted)
    print(f"wrote {args.out}: {len(final)} activities after {accepted} accepted "
          f"iterations (stop: {trace.stop_reason})")
    return 0


def _eval_common(args, partition: str) -> int:
    cfg = _load_config(args.config)
    corpus = load_corpus(_require_file(args.corpus, "corpus"))
    seed = convmodel.load_seedlist(_require_file(args.seedlist, "seed list")) \
        if args.seedlist else convmodel.SeedList()
    lr_params = _lr_params(cfg, args)
    split = convmodel.make_split(corpus, args.split_seed)
    result = convmodel.evaluate_pipeline(corpus, seed, split, lr_params,
                                         partition=partition)
    row = (f"{seed.max_iteration()},{result.auc:.6f},{result.n_features},"
           f"{result.n_relevant_per_converted_cluster:.4f}")
    header = "seed_iteration,auc,n_features,relevant_users_per_converted_cluster"
    print(header)
    print(row)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n" + row + "\n")
    return 0


def _cmd_train(args) -> int:
    return _eval_common(args, "validation")


def _cmd_eval(args) -> int:
    return _eval_common(args, "test")


def _parse_s_values(spec: str) -> list[int]:
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in spec.split(",") if x]


def _cmd_entropy(args) -> int:
    rows = infotheory.sweep(args.p_o, args.r, _parse_s_values(args.s))
    write_sweep_csv(rows, args.out)
    print(f"wrote {args.out}: {len(rows)} rows "
          f"(s={rows[0].org_size}: before={rows[0].before_bits:.4f}, "
          f"after={rows[0].after_bits:.4f})")
    if args.svg:
        plot_sweep(rows, args.svg)
    return 0


def _entropy_empirical_report(corpus, seed) -> dict:
    rep = infotheory.empirical_report(corpus, seed)
    note = (f"before_bits weights H(C|R=0) by P(R=0)={rep.p_r0:.4f}; "
            f"the unweighted conditional term is {rep.before_unweighted_bits:.4f} bits "
            f"- do not conflate the two")
    return {
        "before_bits": round(rep.before_bits, 6),
        "after_bits": round(rep.after_bits, 6),
        "h_c_bits": round(rep.h_c_bits, 6),
        "before_unweighted_bits": round(rep.before_unweighted_bits, 6),
        "p_r0": round(rep.p_r0, 6),
        "note": note,
    }


def _cmd_entropy_empirical(args) -> int:
    if args.demo:
        corpus, truth = synthgen.demo_two_org_corpus()
        seed = (convmodel.load_seedlist(args.seed) if args.seed
                else convmodel.SeedList(activities=sorted(truth.relevant_activities)))
    else:
        if not args.corpus or not args.seed:
            raise ConfigError("entropy-empirical needs --corpus and --seed "
                              "(or --demo)")
        corpus = load_corpus(_require_file(args.corpus, "corpus"))
        seed = convmodel.load_seedlist(_require_file(args.seed, "seed list"))
    report = _entropy_empirical_report(corpus, seed)
    value = report["after_bits"] if args.augmented else report["before_bits"]
    print(f"h_c_given_r_bits={value:.6f} "
          f"({'augmented' if args.augmented else 'not augmented'})")
    print(f"before_bits={report['before_bits']:.6f} "
          f"after_bits={report['after_bits']:.6f} h_c_bits={report['h_c_bits']:.6f}")
    print(f"note: {report['note']}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"augmented": bool(args.augmented), **report}, fh,
                      indent=1, sort_keys=True)
            fh.write("\n")
    return 0


_REPRO_GEN_DEFAULTS = {
    "k": "400", "r": "1", "n": "2", "p_o": "0.25", "type2_fraction": "0.7",
    "n_relevant": "25", "n_noise": "300", "trail_len": "30.0",
    "relevant_rate": "2.0",
}


def _cmd_repro(args) -> int:
    cfg = _load_config(args.config)
    cfg.setdefault("gen", {})
    for key, value in _REPRO_GEN_DEFAULTS.items():
        cfg["gen"].setdefault(key, value)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = args.seed if args.seed is not None else 7

    ns = argparse.Namespace(k=None, r=None, n=None, p_o=None, type2_fraction=None,
                            n_relevant=None, n_noise=None, relevant_rate=None,
                            trail_len=None, seed=base)
    synth_cfg = _synth_config(cfg, ns)
    corpus, truth = synthgen.generate(synth_cfg)
    save_corpus(corpus, out / "corpus.jsonl")
    synthgen.save_truth(truth, out / "truth.json")

    train_params = _train_params(cfg, argparse.Namespace(seed=base + 1), seed_default=base + 1)
    table = embed.train(corpus, train_params)
    embed.save_embeddings(table, out / "vecs.txt")

    cfg.setdefault("expand", {}).setdefault("k_initial", "10")
    exp_params = _expansion_params(cfg, argparse.Namespace())
    s_initial = seedexp.initial_seedlist(corpus, exp_params)
    convmodel.save_seedlist(s_initial, out / "seed_initial.txt")

    lr_params = _lr_params(cfg, argparse.Namespace(seed=base + 3), seed_default=base + 3)
    split = convmodel.make_split(corpus, base + 2)
    final, trace = seedexp.expand(corpus, s_initial, exp_params, table, split,
                                  lr_params=lr_params)
    convmodel.save_seedlist(final, out / "seed_final.txt")
    seedexp.write_trace_csv(trace, out / "trace.csv")

    baseline_eval = convmodel.evaluate_pipeline(corpus, convmodel.SeedList(), split,
                                                lr_params, partition="test")
    baseline = EvalRow(iteration=-1, auc=baseline_eval.auc, n_activities=0,
                       relevant_users_per_converted_cluster=0.0)
    evals = []
    for rec in trace.records:
        if not rec.accepted:
            continue
        seed_i = final.at_iteration(rec.iteration)
        ev = convmodel.evaluate_pipeline(corpus, seed_i, split, lr_params,
                                         partition="test")
        evals.append(EvalRow(iteration=rec.iteration, auc=ev.auc,
                             n_activities=len(seed_i),
                             relevant_users_per_converted_cluster=
                             ev.n_relevant_per_converted_cluster))

    sweep_rows = infotheory.sweep(0.1, 1, range(3, 51))
    write_sweep_csv(sweep_rows, out / "entropy_sweep.csv")
    emit_report(trace, baseline, evals, sweep_rows, out)

    entropy_demo = _entropy_empirical_report(corpus, final)
    summary = {
        "seed": base,
        "backend": kernel_backend(),
        "baseline_test_auc": round(baseline.auc, 6),
        "iterations": [
            {"iteration": ev.iteration, "test_auc": round(ev.auc, 6),
             "n_activities": ev.n_activities,
             "relevant_users_per_converted_cluster":
                 round(ev.relevant_users_per_converted_cluster, 4)}
            for ev in evals
        ],
        "stop_reason": trace.stop_reason,
        "final_seed_size": len(final),
        "entropy_empirical": entropy_demo,
    }
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    lift = (evals[-1].auc - baseline.auc) * 100.0 if evals else 0.0
    print(f"wrote {out}/: final seed {len(final)} activities, "
          f"test AUC lift {lift:+.2f} pts over empty-seed baseline")
    return 0


# -------------------------------------------------------------------- parser

def _add_common(p: argparse.ArgumentParser, out_default=None, out_required=False):
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    if out_required:
        p.add_argument("--out", required=True, help="output path")
    else:
        p.add_argument("--out", default=out_default, help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cotrail",
        description="Multi-user activity-trail pipeline: synthetic corpora, "
                    "activity embeddings, seed-list expansion, conversion "
                    "prediction and entropy analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    _add_common(p, out_default="corpus.jsonl")
    p.add_argument("--truth", help="ground-truth JSON output path")
    p.add_argument("--preset", choices=["two-org"],
                   help="emit a hard-coded demo corpus instead of sampling")
    p.add_argument("--k", type=int, help="number of organizations")
    p.add_argument("--r", type=int, help="researchers per organization")
    p.add_argument("--n", type=int, help="non-researchers per organization")
    p.add_argument("--p_o", type=float, help="organization conversion probability")
    p.add_argument("--type2-fraction", type=float, dest="type2_fraction")
    p.add_argument("--n-relevant", type=int, dest="n_relevant")
    p.add_argument("--n-noise", type=int, dest="n_noise")
    p.add_argument("--relevant-rate", type=float, dest="relevant_rate")
    p.add_argument("--trail-len", type=float, dest="trail_len")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("embed", help="train activity embeddings")
    _add_common(p, out_default="vecs.txt")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--min-count", type=int, dest="min_count")
    p.add_argument("--subsample-threshold", type=float, dest="subsample_threshold")
    p.add_argument("--deterministic", action="store_true", default=True,
                   help="single-worker reproducible training (default)")
    p.add_argument("--parallel", action="store_true",
                   help="multi-worker lock-free training; not reproducible")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("index-check", help="LSH recall against the exact scan")
    _add_common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--n-tables", type=int, default=8, dest="n_tables")
    p.add_argument("--n-planes", type=int, default=16, dest="n_planes")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--queries", type=int, default=200)
    p.set_defaults(func=_cmd_index_check)

    p = sub.add_parser("seedlist-init", help="initial seed list by conversion rate")
    _add_common(p, out_default="seed_initial.txt")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k-initial", type=int, dest="k_initial")
    p.add_argument("--min-support", type=int, dest="min_support")
    p.add_argument("--label-window-days", type=int, dest="label_window_days")
    p.add_argument("--include", help="seed-list file of ids to append")
    p.add_argument("--exclude", help="seed-list file of ids to remove")
    p.set_defaults(func=_cmd_seedlist_init)

    p = sub.add_parser("expand", help="AUC-gated seed-list expansion")
    _add_common(p, out_default="seed_final.txt")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--seedlist", required=True, help="initial seed-list file")
    p.add_argument("--trace", help="expansion trace CSV path")
    p.add_argument("--split-seed", type=int, default=0, dest="split_seed")
    p.add_argument("--delta-sim", type=float, dest="delta_sim")
    p.add_argument("--delta-nbr", type=int, dest="delta_nbr")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--lr", type=float, help="LR learning rate")
    p.add_argument("--l2", type=float)
    p.add_argument("--lr-epochs", type=int, dest="lr_epochs")
    p.set_defaults(func=_cmd_expand)

    for name, fn, helptext in (
            ("train", _cmd_train, "train + report validation AUC"),
            ("eval", _cmd_eval, "train + report test AUC")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.add_argument("--corpus", required=True)
        p.add_argument("--seedlist", help="seed-list file; omit for the "
                                          "empty-seed baseline")
        p.add_argument("--split-seed", type=int, default=0, dest="split_seed")
        p.add_argument("--lr", type=float)
        p.add_argument("--l2", type=float)
        p.add_argument("--lr-epochs", type=int, dest="lr_epochs")
        p.set_defaults(func=fn)

    p = sub.add_parser("entropy", help="closed-form H(C|R) sweep")
    _add_common(p, out_default="sweep.csv")
    p.add_argument("--p_o", type=float, required=True)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--s", required=True, help="sizes, e.g. 3:50 or 3,5,10")
    p.add_argument("--svg", help="optional SVG plot path")
    p.set_defaults(func=_cmd_entropy)

    p = sub.add_parser("entropy-empirical", help="empirical H(C|R) on a corpus")
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--corpus")
    p.add_argument("--seed", help="seed-list file (activity ids)")
    p.add_argument("--augmented", action="store_true")
    p.add_argument("--demo", action="store_true",
                   help="use the built-in six-user two-organization corpus")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=_cmd_entropy_empirical)

    p = sub.add_parser("repro", help="end-to-end deterministic pipeline run")
    _add_common(p, out_required=True)
    p.set_defaults(func=_cmd_repro)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {_oneline(exc)}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {_oneline(exc)}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {_oneline(exc)}", file=sys.stderr)
        return 1


def _oneline(exc: BaseException) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
