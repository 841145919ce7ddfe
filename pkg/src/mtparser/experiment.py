"""Strategy-comparison experiments: train every strategy per language,
evaluate all (test set, strategy, proxy) cells, test significance against
``single`` and ``concat`` and write a TSV and a Markdown report.

Experiment file (JSON; relative paths resolve against the file's directory)::

    {
      "languages": [
        {"name": "sv",
         "treebanks": [{"name": "sv_talbanken", "train": "...", "dev": "...", "test": "..."}, ...],
         "extra_tests": [{"name": "sv_pud", "path": "...", "proxies": ["sv_talbanken", "sv_lines"]}]}
      ],
      "strategies": ["single", "concat", "cft", "tbemb"],
      "seeds": [1],
      "epochs": 30, "ft_epochs": 10, "cap": null,
      "iterations": 10000, "truncate_subtypes": false,
      "hyperparameters": {"dim_word": 100},
      "record_timing": false
    }

``train_seconds`` is wall-clock time and is only filled in when
``record_timing`` is true, so that reruns produce identical reports.
"""
from __future__ import annotations

import dataclasses
import io
import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .conllu import Sentence, read_conllu
from .evaluate import las, randomization_test, significance_marker
from .neural import Hyperparameters, atomic_write
from .strategies import Strategy, StrategyConfig, StrategyRun, TreebankSpec, resolve_model, train
from .parser import parse_sentences

log = logging.getLogger(__name__)

TSV_COLUMNS = [
    "language", "test_set", "strategy", "proxy", "LAS", "UAS",
    "p_vs_single", "p_vs_concat", "selected_epoch", "train_seconds", "seed",
]

_JSON_TYPES = {"int": {"type": "integer", "minimum": 0}, "float": {"type": "number", "minimum": 0}}
_HYPER_FIELDS = {f.name: _JSON_TYPES[str(f.type)] for f in dataclasses.fields(Hyperparameters) if f.name != "use_tb"}

SCHEMA = {
    "type": "object",
    "required": ["languages"],
    "additionalProperties": False,
    "properties": {
        "languages": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "treebanks"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "treebanks": {
                        "type": "array",
                        "minItems": 2,
                        "items": {
                            "type": "object",
                            "required": ["name", "train", "dev", "test"],
                            "additionalProperties": False,
                            "properties": {k: {"type": "string", "minLength": 1} for k in ("name", "train", "dev", "test")},
                        },
                    },
                    "extra_tests": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "path", "proxies"],
                            "additionalProperties": False,
                            "properties": {
                                "name": {"type": "string", "minLength": 1},
                                "path": {"type": "string", "minLength": 1},
                                "proxies": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                            },
                        },
                    },
                },
            },
        },
        "strategies": {
            "type": "array",
            "minItems": 1,
            "uniqueItems": True,
            "items": {"enum": [s.value for s in Strategy]},
        },
        "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
        "epochs": {"type": "integer", "minimum": 1},
        "ft_epochs": {"type": "integer", "minimum": 1},
        "cap": {"type": ["integer", "null"], "minimum": 1},
        "iterations": {"type": "integer", "minimum": 1},
        "truncate_subtypes": {"type": "boolean"},
        "record_timing": {"type": "boolean"},
        "hyperparameters": {
            "type": "object",
            "additionalProperties": False,
            "properties": _HYPER_FIELDS,
        },
    },
}


class SpecError(ValueError):
    pass


def validate_spec(spec: dict) -> None:
    """Raise SpecError listing every schema violation with its JSON path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(spec), key=lambda e: list(e.absolute_path))
    if errors:
        raise SpecError("; ".join(f"{e.json_path}: {e.message}" for e in errors))
    for lang in spec["languages"]:
        names = [t["name"] for t in lang["treebanks"]]
        if len(set(names)) != len(names):
            raise SpecError(f"$.languages[{lang['name']}]: duplicate treebank names {names}")
        for extra in lang.get("extra_tests", []):
            unknown = [p for p in extra["proxies"] if p not in names]
            if unknown:
                raise SpecError(f"$.languages[{lang['name']}].extra_tests[{extra['name']}]: unknown proxies {unknown}")


def load_spec(path: str | os.PathLike) -> dict:
    """Read, validate and resolve relative paths of an experiment file."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        try:
            spec = json.load(f)
        except json.JSONDecodeError as e:
            raise SpecError(f"{path}: invalid JSON: {e}") from None
    validate_spec(spec)
    base = path.parent
    for lang in spec["languages"]:
        for tb in lang["treebanks"]:
            for k in ("train", "dev", "test"):
                tb[k] = str(base / tb[k])
        for extra in lang.get("extra_tests", []):
            extra["path"] = str(base / extra["path"])
    return spec


@dataclass
class Cell:
    language: str
    test_set: str
    strategy: str
    proxy: str
    seed: int
    las: float | None = None
    uas: float | None = None
    p_vs_single: float | None = None
    p_vs_concat: float | None = None
    selected_epoch: int | None = None
    train_seconds: float | None = None
    error: str | None = None

    def row(self) -> list[str]:
        def num(x, fmt):
            return "" if x is None else format(x, fmt)

        las_ = "ERROR" if self.error else num(self.las, ".2f")
        return [
            self.language, self.test_set, self.strategy, self.proxy, las_, num(self.uas, ".2f"),
            num(self.p_vs_single, ".4f"), num(self.p_vs_concat, ".4f"),
            num(self.selected_epoch, "d"), num(self.train_seconds, ".1f"), str(self.seed),
        ]


@dataclass
class Report:
    cells: list[Cell] = field(default_factory=list)
    strategies: list[str] = field(default_factory=list)

    def tsv(self) -> str:
        out = io.StringIO()
        out.write("\t".join(TSV_COLUMNS) + "\n")
        for c in self.cells:
            out.write("\t".join(c.row()) + "\n")
        return out.getvalue()

    def markdown(self) -> str:
        """Table with one row per (language, test set, proxy), one column per
        strategy, significance markers and per-strategy averages."""
        lines = []
        seeds = sorted({c.seed for c in self.cells})
        for seed in seeds:
            cells = [c for c in self.cells if c.seed == seed]
            if len(seeds) > 1:
                lines.append(f"## Seed {seed}\n")
            lines.append("| Test set | Proxy | " + " | ".join(self.strategies) + " |")
            lines.append("|---|---|" + "---|" * len(self.strategies))
            rows: dict[tuple, dict[str, Cell]] = {}
            for c in cells:
                rows.setdefault((c.language, c.test_set, c.proxy), {})[c.strategy] = c
            sums = {s: [] for s in self.strategies}
            for (lang, test, proxy), by in rows.items():
                out = []
                for s in self.strategies:
                    c = by.get(s)
                    if c is None:
                        out.append("")
                    elif c.error:
                        out.append("error")
                    else:
                        out.append(f"{c.las:.1f}{significance_marker(c.p_vs_single, c.p_vs_concat)}")
                        sums[s].append(c.las)
                shown_proxy = "" if proxy == test else proxy
                lines.append(f"| {test} | {shown_proxy} | " + " | ".join(out) + " |")
            avg = [f"{sum(v) / len(v):.1f}" if v else "" for v in sums.values()]
            lines.append("| Average |  | " + " | ".join(avg) + " |")
            lines.append("")
        lines.append("`+`: significantly different from single, `×`: from concat, `*`: from both (p < 0.05).")
        failed = [c for c in self.cells if c.error]
        if failed:
            lines.append("")
            lines.append("Failed cells:")
            for c in failed:
                lines.append(f"- {c.language}/{c.test_set}/{c.strategy}/{c.proxy} (seed {c.seed}): {c.error}")
        return "\n".join(lines) + "\n"


@dataclass
class _Job:
    """One training job: a strategy run for one language and seed."""

    language: str
    seed: int
    strategy: Strategy
    config: StrategyConfig


def _jobs(spec: dict) -> list[_Job]:
    strategies = [Strategy.parse(s) for s in spec.get("strategies", [s.value for s in Strategy])]
    hyper = Hyperparameters(**spec.get("hyperparameters", {}))
    jobs = []
    for lang in spec["languages"]:
        tbs = [TreebankSpec(t["name"], t["train"], t["dev"], t["test"]) for t in lang["treebanks"]]
        for seed in spec.get("seeds", [1]):
            common = dict(
                epochs=spec.get("epochs", 30), ft_epochs=spec.get("ft_epochs", 10),
                per_epoch_cap=spec.get("cap"), seed=seed, hyper=hyper,
            )
            if Strategy.SINGLE in strategies:
                for tb in tbs:
                    jobs.append(_Job(lang["name"], seed, Strategy.SINGLE, StrategyConfig(Strategy.SINGLE, [tb], **common)))
            # cft's first phase is the concat run, so one job serves both
            if Strategy.C_FT in strategies:
                jobs.append(_Job(lang["name"], seed, Strategy.C_FT, StrategyConfig(Strategy.C_FT, tbs, **common)))
            elif Strategy.CONCAT in strategies:
                jobs.append(_Job(lang["name"], seed, Strategy.CONCAT, StrategyConfig(Strategy.CONCAT, tbs, **common)))
            if Strategy.TB_EMB in strategies:
                jobs.append(_Job(lang["name"], seed, Strategy.TB_EMB, StrategyConfig(Strategy.TB_EMB, tbs, **common)))
    return jobs


def _run_job(job: _Job) -> StrategyRun | str:
    try:
        return train(job.config)
    except Exception as e:  # reported per cell
        log.debug("training failed: %s", traceback.format_exc())
        return f"{type(e).__name__}: {e}"


@dataclass
class _System:
    """A trained strategy as seen by the evaluation grid."""

    kind: Strategy
    runs: dict[str, StrategyRun | str]  # treebank name -> run for single, "" otherwise
    treebanks: list[str]

    def run_for(self, proxy: str) -> StrategyRun | str:
        return self.runs[proxy] if self.kind == Strategy.SINGLE else self.runs[""]

    def parse(self, sentences: list[Sentence], proxy: str):
        run = self.run_for(proxy)
        if isinstance(run, str):
            raise RuntimeError(f"training failed: {run}")
        if self.kind == Strategy.CONCAT and run.kind == Strategy.C_FT:
            model, tb = run.models["base"], None
        else:
            model, tb = resolve_model(self.kind, run.models, run.registry.names, None if self.kind in (Strategy.SINGLE, Strategy.CONCAT) else proxy)
        return model, parse_sentences(model, sentences, tb)

    def seconds(self, proxy: str) -> float | None:
        run = self.run_for(proxy)
        return None if isinstance(run, str) else run.train_seconds


def run_experiment(spec: dict, workers: int = 1) -> Report:
    """Train and evaluate everything in a validated, path-resolved ``spec``."""
    strategies = [Strategy.parse(s) for s in spec.get("strategies", [s.value for s in Strategy])]
    iterations = spec.get("iterations", 10000)
    truncate = spec.get("truncate_subtypes", False)
    timing = spec.get("record_timing", False)
    jobs = _jobs(spec)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]

    report = Report(strategies=[s.value for s in strategies])
    for lang in spec["languages"]:
        names = [t["name"] for t in lang["treebanks"]]
        for seed in spec.get("seeds", [1]):
            mine = [(j, r) for j, r in zip(jobs, results) if j.language == lang["name"] and j.seed == seed]
            systems: dict[Strategy, _System] = {}
            for j, r in mine:
                if j.strategy == Strategy.SINGLE:
                    systems.setdefault(Strategy.SINGLE, _System(Strategy.SINGLE, {}, names)).runs[j.config.treebanks[0].name] = r
                else:
                    systems[j.strategy] = _System(j.strategy, {"": r}, names)
                    if j.strategy == Strategy.C_FT and Strategy.CONCAT in strategies:
                        systems[Strategy.CONCAT] = _System(Strategy.CONCAT, {"": r}, names)
            tests = [(t["name"], t["test"], [t["name"]]) for t in lang["treebanks"]]
            tests += [(e["name"], e["path"], e["proxies"]) for e in lang.get("extra_tests", [])]
            for test_name, test_path, proxies in tests:
                try:
                    gold = read_conllu(test_path)
                    load_error = None
                except Exception as e:
                    gold, load_error = None, f"{type(e).__name__}: {e}"
                for proxy in proxies:
                    report.cells.extend(
                        _evaluate_row(lang["name"], seed, test_name, proxy, gold, load_error, strategies, systems, iterations, truncate, timing)
                    )
    return report


def _evaluate_row(language, seed, test_name, proxy, gold, load_error, strategies, systems, iterations, truncate, timing) -> list[Cell]:
    outputs = {}
    cells = {}
    for s in strategies:
        cell = Cell(language, test_name, s.value, proxy, seed)
        cells[s] = cell
        if load_error:
            cell.error = load_error
            continue
        system = systems[s]
        try:
            model, parsed = system.parse(gold, proxy)
            result = las(gold, parsed, truncate)
            cell.las, cell.uas = result.las, result.uas
            cell.selected_epoch = model.meta.get("selected_epoch")
            if timing:
                cell.train_seconds = system.seconds(proxy)
            outputs[s] = parsed
        except Exception as e:
            cell.error = f"{type(e).__name__}: {e}"
    for s, cell in cells.items():
        if s not in outputs:
            continue
        if s != Strategy.SINGLE and Strategy.SINGLE in outputs:
            cell.p_vs_single = randomization_test(gold, outputs[s], outputs[Strategy.SINGLE], iterations, seed, truncate)
        if s != Strategy.CONCAT and Strategy.CONCAT in outputs:
            cell.p_vs_concat = randomization_test(gold, outputs[s], outputs[Strategy.CONCAT], iterations, seed, truncate)
    return [cells[s] for s in strategies]


def write_report(report: Report, output: str | os.PathLike) -> tuple[Path, Path]:
    """Write ``report.tsv`` and ``report.md`` into directory ``output``."""
    out = Path(output)
    tsv, md = out / "report.tsv", out / "report.md"
    atomic_write(tsv, report.tsv().encode("utf-8"))
    atomic_write(md, report.markdown().encode("utf-8"))
    return tsv, md
