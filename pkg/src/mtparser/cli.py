"""Command-line entry point ``mtparser``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 internal error.
Data goes to standard output (or ``--output``), logging to standard error.
"""
from __future__ import annotations

import argparse
import functools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .conllu import ConlluError, read_conllu, validate_tree, write_conllu
from .evaluate import Misaligned, las, randomization_test
from .experiment import SpecError, load_spec, run_experiment, write_report
from .neural import Hyperparameters, ModelFormatError, Model, atomic_write, load_model, save_model
from .strategies import (
    DevMissing,
    EmptyTreebank,
    Strategy,
    StrategyConfig,
    TreebankSpec,
    UnknownProxy,
    parse_with_model,
    train,
)
from .transition import GoldTree, InvalidTree, OracleStuck, static_oracle, trace_lines

log = logging.getLogger("mtparser")

EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 1, 2, 3

# flag -> Hyperparameters field
HYPER_FLAGS = {
    "--dim-word": "dim_word",
    "--dim-char": "dim_char",
    "--hidden-char": "hidden_char",
    "--hidden-word": "hidden_word",
    "--dim-tb": "dim_tb",
    "--mlp-hidden": "mlp_hidden",
    "--explore-prob": "explore_prob",
    "--word-dropout": "word_dropout",
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def treebank_arg(value: str) -> TreebankSpec:
    """``NAME=TRAIN[,DEV[,TEST]]``"""
    name, sep, paths = value.partition("=")
    if not sep or not name or not paths:
        raise argparse.ArgumentTypeError(f"expected NAME=TRAIN[,DEV[,TEST]], got {value!r}")
    parts = paths.split(",")
    if len(parts) > 3 or not all(parts):
        raise argparse.ArgumentTypeError(f"expected NAME=TRAIN[,DEV[,TEST]], got {value!r}")
    parts += [None] * (3 - len(parts))
    return TreebankSpec(name, *parts)


def _positive(value: str) -> int:
    n = int(value)
    if n <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {n}")
    return n


def _probability(value: str) -> float:
    p = float(value)
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {p}")
    return p


def _add_training_flags(p: argparse.ArgumentParser, strategy: bool = True):
    if strategy:
        p.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.SINGLE.value,
                       help="training regime (default: single)")
        p.add_argument("--epochs", type=_positive, default=30, help="training epochs (default: 30)")
    p.add_argument("--treebank", type=treebank_arg, action="append", default=[], metavar="NAME=TRAIN[,DEV[,TEST]]",
                   help="a treebank; repeat for several")
    p.add_argument("--ft-epochs", type=_positive, default=10, help="fine-tuning epochs for cft (default: 10)")
    p.add_argument("--cap", type=_positive, default=None, help="max sentences per treebank per epoch")
    p.add_argument("--seed", type=int, default=1, help="master random seed (default: 1)")
    p.add_argument("--output", required=True, metavar="PATH",
                   help="model file; a directory for cft and finetune")
    defaults = Hyperparameters()
    for flag, name in HYPER_FLAGS.items():
        kind = _probability if isinstance(getattr(defaults, name), float) else _positive
        p.add_argument(flag, type=kind, default=None, dest=name, help=f"default: {getattr(defaults, name)}")


def build_parser() -> argparse.ArgumentParser:
    # logging flags are accepted before and after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help="more logging on standard error")
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS, help="only log errors")
    p = _Parser(prog="mtparser", description="Multi-treebank transition-based dependency parser.", parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser = functools.partial(sub.add_parser, parents=[common])

    t = sub.add_parser("train", help="train a model with one of the strategies")
    _add_training_flags(t)

    f = sub.add_parser("finetune", help="fine-tune a concat model on individual treebanks")
    f.add_argument("--model", required=True, metavar="PATH", help="base model to fine-tune")
    _add_training_flags(f, strategy=False)

    ps = sub.add_parser("parse", help="parse a CoNLL-U file")
    ps.add_argument("input", help="CoNLL-U input (existing annotation is replaced)")
    ps.add_argument("--model", required=True, metavar="PATH", help="model file, or a cft output directory")
    ps.add_argument("--proxy", metavar="NAME", help="treebank whose model or embedding to use")
    ps.add_argument("--output", metavar="PATH", help="output file (default: standard output)")
    ps.add_argument("--workers", type=_positive, default=1, help="parallel parsing processes (default: 1)")

    e = sub.add_parser("eval", help="attachment scores; with two systems also a significance test")
    e.add_argument("gold")
    e.add_argument("system")
    e.add_argument("system2", nargs="?")
    e.add_argument("--truncate-subtypes", action="store_true", help="compare labels up to the first ':'")
    e.add_argument("--iterations", type=_positive, default=10000, help="randomization test iterations (default: 10000)")
    e.add_argument("--seed", type=int, default=0, help="randomization test seed (default: 0)")
    e.add_argument("--format", choices=("json", "tsv"), default="json")
    e.add_argument("--output", metavar="PATH", help="output file (default: standard output)")

    x = sub.add_parser("experiment", help="compare all strategies as described by a JSON file")
    x.add_argument("spec", help="experiment JSON file")
    x.add_argument("--output", required=True, metavar="PATH", help="directory for report.tsv and report.md")
    x.add_argument("--workers", type=_positive, default=1, help="parallel training jobs (default: 1)")

    o = sub.add_parser("oracle", help="static oracle derivations of gold trees")
    o.add_argument("input", help="CoNLL-U file with gold trees")
    o.add_argument("--trace", action="store_true", help="print every transition with the stack and buffer")
    return p


def _hyper(args) -> Hyperparameters:
    changes = {name: getattr(args, name) for name in HYPER_FLAGS.values() if getattr(args, name) is not None}
    return Hyperparameters().replace(**changes)


def _write_text(text: str, output: str | None):
    if output:
        atomic_write(output, text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def _training_log(run) -> str:
    record = {
        "strategy": run.kind.value,
        "treebanks": run.registry.names,
        "seed": run.config.seed,
        "models": {
            name: {"dev_curve": run.dev_curve[name], "selected_epoch": run.selected_epoch[name]}
            for name in run.models
        },
    }
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


def _save_run(run, output: str, directory: bool):
    if directory:
        out = Path(output)
        for name, model in run.models.items():
            save_model(model, out / f"{name.replace(':', '-')}.model")
        log_path = out / "train.log.json"
    else:
        (model,) = run.models.values()
        save_model(model, output)
        log_path = Path(f"{output}.log.json")
    atomic_write(log_path, _training_log(run).encode("utf-8"))
    log.info("wrote %s", output)


def cmd_train(args) -> int:
    if not args.treebank:
        raise ConfigError("at least one --treebank is required")
    kind = Strategy.parse(args.strategy)
    try:
        config = StrategyConfig(kind, args.treebank, args.epochs, args.ft_epochs, args.cap, args.seed, _hyper(args))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    run = train(config)
    _save_run(run, args.output, directory=kind == Strategy.C_FT)
    return 0


def cmd_finetune(args) -> int:
    if not args.treebank:
        raise ConfigError("at least one --treebank is required")
    base = load_model(args.model)
    if base.uses_tb:
        raise ConfigError("fine-tuning applies to models trained without treebank embeddings")
    changes = {name: getattr(args, name) for name in HYPER_FLAGS.values() if getattr(args, name) is not None}
    try:
        config = StrategyConfig(Strategy.C_FT, args.treebank, 1, args.ft_epochs, args.cap, args.seed, base.hyper.replace(**changes))
        base.hyper = config.hyper
        run = train(config, base=base)
    except (EmptyTreebank, DevMissing):
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None
    _save_run(run, args.output, directory=True)
    return 0


def _resolve_parse_model(path: str, proxy: str | None) -> tuple[Model, str | None]:
    p = Path(path)
    if p.is_dir():
        available = sorted(m.name[len("ft-") : -len(".model")] for m in p.glob("ft-*.model"))
        if proxy is None or proxy not in available:
            raise UnknownProxy(proxy, available)
        return load_model(p / f"ft-{proxy}.model"), None
    return load_model(p), proxy


_worker_model: tuple[Model, str | None] | None = None


def _init_worker(path, proxy):
    global _worker_model
    _worker_model = _resolve_parse_model(path, proxy)


def _parse_chunk(sentences):
    model, proxy = _worker_model
    return parse_with_model(model, sentences, proxy)


def cmd_parse(args) -> int:
    model, proxy = _resolve_parse_model(args.model, args.proxy)
    if not model.uses_tb and proxy is not None:
        log.warning("proxy %r is ignored: the model has no treebank embeddings", proxy)
        proxy = None
    if model.uses_tb and (proxy is None or proxy not in model.treebanks):
        raise UnknownProxy(proxy, model.treebanks)
    sentences = read_conllu(args.input)
    if args.workers > 1 and len(sentences) > 1:
        size = -(-len(sentences) // args.workers)
        chunks = [sentences[i : i + size] for i in range(0, len(sentences), size)]
        with ProcessPoolExecutor(args.workers, initializer=_init_worker, initargs=(args.model, args.proxy)) as pool:
            parsed = [s for part in pool.map(_parse_chunk, chunks) for s in part]
    else:
        parsed = parse_with_model(model, sentences, proxy)
    for i, s in enumerate(parsed):
        problems = validate_tree(s)
        if problems:  # the decoder guarantees trees; this would be a bug
            raise RuntimeError(f"sentence {i}: parser produced an invalid tree: {problems}")
    _write_text(write_conllu(parsed), args.output)
    return 0


def cmd_eval(args) -> int:
    gold = read_conllu(args.gold)
    system = read_conllu(args.system)
    result = las(gold, system, args.truncate_subtypes)
    record = result.to_json()
    record["p_values"] = {}
    if args.system2:
        other = read_conllu(args.system2)
        second = las(gold, other, args.truncate_subtypes)
        record["system2"] = second.to_json()
        record["p_values"]["system_vs_system2"] = randomization_test(
            gold, system, other, args.iterations, args.seed, args.truncate_subtypes
        )
    if args.format == "json":
        text = json.dumps(record, indent=2, sort_keys=True) + "\n"
    else:
        rows = [("system", result)] + ([("system2", second)] if args.system2 else [])
        text = "system\tLAS\tUAS\ttotal\tp_value\n"
        p = record["p_values"].get("system_vs_system2")
        for name, r in rows:
            text += f"{name}\t{r.las:.2f}\t{r.uas:.2f}\t{r.total}\t{'' if p is None else format(p, '.4f')}\n"
    _write_text(text, args.output)
    return 0


def cmd_experiment(args) -> int:
    spec = load_spec(args.spec)
    report = run_experiment(spec, workers=args.workers)
    tsv, md = write_report(report, args.output)
    failed = sum(1 for c in report.cells if c.error)
    if failed:
        log.warning("%d of %d cells failed; see %s", failed, len(report.cells), md)
    log.info("wrote %s and %s", tsv, md)
    return 0


def cmd_oracle(args) -> int:
    sentences = read_conllu(args.input)
    labels = sorted({t.deprel for s in sentences for t in s.tokens if t.deprel is not None})
    index = {l: i for i, l in enumerate(labels)}
    out = []
    total = swaps = 0
    for i, s in enumerate(sentences):
        problems = validate_tree(s)
        if problems:
            raise InvalidTree(f"sentence {i}: {'; '.join(problems)}")
        gold = GoldTree([t.head for t in s.tokens], [index.get(t.deprel, 0) for t in s.tokens])
        transitions = static_oracle(gold)
        total += len(transitions)
        swaps += sum(1 for t in transitions if t.kind.name == "SWAP")
        if args.trace:
            sent_id = next((c.split("=", 1)[1].strip() for c in s.comments if c.startswith("# sent_id")), str(i + 1))
            out.append(f"# sentence {sent_id}")
            out.extend(trace_lines(len(s.tokens), transitions))
    out.append(f"sentences\t{len(sentences)}\ntransitions\t{total}\nswaps\t{swaps}")
    sys.stdout.write("\n".join(out) + "\n")
    return 0


COMMANDS = {
    "train": cmd_train,
    "finetune": cmd_finetune,
    "parse": cmd_parse,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose, quiet = getattr(args, "verbose", 0), getattr(args, "quiet", False)
    level = logging.ERROR if quiet else (logging.DEBUG if verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UnknownProxy, SpecError) as e:
        log.error("%s", e)
        return EXIT_CONFIG
    except (FileNotFoundError, IsADirectoryError, ConlluError, Misaligned, EmptyTreebank, DevMissing,
            ModelFormatError, InvalidTree, UnicodeDecodeError) as e:
        log.error("%s", e)
        return EXIT_DATA
    except OracleStuck as e:
        log.error("internal error: %s", e)
        return EXIT_INTERNAL
    except Exception as e:
        log.error("internal error: %s: %s", type(e).__name__, e)
        log.debug("traceback", exc_info=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
