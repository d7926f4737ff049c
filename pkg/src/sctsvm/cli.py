"""Command-line entry point.

Every command that writes files writes them into ``--out`` together with
``manifest.json``; ``sctsvm replay manifest.json --out DIR`` repeats the run
and reproduces the files byte for byte. Exit codes: 0 success, 1 usage
error, 2 data or solver error (one line on stderr, ``sctsvm: E_CODE: ...``).
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, experiments as ex, formats, scenario as scn, tasvm, trend
from .core import PairHistory, SctError, TimedClassifier, make_binary_view
from .linsvm import SvmConfig, train_soft_margin
from .pipeline import (
    PipelineConfig,
    bootstrap_histories,
    resolve_order,
    sample_training_rows,
    step,
    train_direct,
)
from .qpsolve import QpFailure

log = logging.getLogger("sctsvm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- argument helpers ---

def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _order(text: str):
    if text == "auto":
        return "auto"
    try:
        r = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"order must be an integer or 'auto', got {text!r}")
    if r < 0:
        raise argparse.ArgumentTypeError("order must be >= 0")
    return r


def _orders(text: str) -> list:
    return [_order(t.strip()) for t in text.split(",") if t.strip()]


def _band(text: str) -> tuple:
    try:
        lo, hi = (float(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must look like lo:hi, got {text!r}")
    return lo, hi


def _pair(text: str) -> tuple:
    try:
        a, b = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"pair must look like POS,NEG, got {text!r}")
    return a, b


# --- output helpers ---

def _prepare_out(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args: argparse.Namespace, artifacts: Sequence[str]) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func", "command", "verbose")}
    formats.write_json(out / "manifest.json", {
        "tool": "sctsvm",
        "version": __version__,
        "command": args.command,
        "config": _jsonable(config),
        "seed": getattr(args, "seed", None),
        "artifacts": sorted(artifacts),
    })


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _write_rows(path: Path, rows: list, columns: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        out.writeheader()
        for r in rows:
            out.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _load_data(paths):
    return formats.read_many(paths)


# --- commands ---

def cmd_simulate(args) -> list:
    if (args.config is None) == (args.fixture is None):
        raise UsageError("simulate: give exactly one of --config or --fixture")
    if args.config is not None:
        cfg = formats.scenario_from_dict(formats.read_json(args.config))
    else:
        cfg = scn.FIXTURES[args.fixture](seed=0 if args.seed is None else args.seed)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    data = scn.generate(cfg)
    out = _prepare_out(args.out)
    names = ["samples.csv", "scenario.json"]
    formats.write_samples(out / "samples.csv", data, cfg.reference_date)
    formats.write_json(out / "scenario.json", formats.scenario_to_dict(cfg))
    for d in data:
        name = f"date_{d.date:05d}.csv"
        formats.write_samples(out / name, [d], cfg.reference_date)
        names.append(name)
    return names


def cmd_bootstrap(args) -> list:
    data, _ = _load_data(args.data)
    cfg = PipelineConfig(window=args.window, bootstrap_C=args.C)
    histories = bootstrap_histories(data[-args.window:], cfg)
    out = _prepare_out(args.out)
    formats.write_histories(out / "history.json", histories)
    return ["history.json"]


def cmd_predict(args) -> list:
    histories = formats.read_histories(args.history)
    predicted, models = {}, []
    cfg = PipelineConfig(window=max(2, max(len(h) for h in histories.values())), order=args.order)
    for pair, h in sorted(histories.items()):
        r = resolve_order(h, cfg, args.date)
        params, model = trend.predict_classifier(h, r, args.date)
        predicted[pair] = replace(h, entries=(TimedClassifier(params, args.date),), window=1)
        models.append({"pos": pair[0], "neg": pair[1], **model.as_dict()})
    out = _prepare_out(args.out)
    formats.write_histories(out / "predicted.json", predicted)
    formats.write_json(out / "trend_models.json", {"target_date": args.date, "pairs": models})
    return ["predicted.json", "trend_models.json"]


def _single_date(data, date: Optional[int]):
    if date is None:
        if len(data) != 1:
            raise UsageError(f"the samples hold {len(data)} dates; choose one with --date")
        return data[0]
    for d in data:
        if d.date == date:
            return d
    raise SctError(f"no samples dated {date}")


def cmd_finetune(args) -> list:
    predicted = formats.read_histories(args.predicted)
    data, _ = _load_data(args.data)
    target = _single_date(data, args.date)
    if args.nt is not None:
        rows, _ = sample_training_rows(target.labels, args.nt, np.random.default_rng(args.seed))
        target = target.subset(rows)
    cfg = tasvm.FineTuneConfig(C=args.C, F=args.F)
    tuned, report = {}, []
    for pair, h in sorted(predicted.items()):
        prior = h.entries[-1].params
        view = make_binary_view(target, *pair)
        res = tasvm.fine_tune(prior, view, cfg)
        tuned[pair] = replace(h, entries=(TimedClassifier(res.params, target.date),), window=1)
        report.append({"pos": pair[0], "neg": pair[1], **tasvm.kkt_report(res, prior, view, cfg),
                       "duality_gap": res.duality_gap, "primal": res.primal, "dual": res.dual,
                       "bias_fallback": bool(res.bias_fallback)})
    out = _prepare_out(args.out)
    formats.write_histories(out / "finetuned.json", tuned)
    formats.write_json(out / "kkt_report.json", {"C": args.C, "F": args.F, "pairs": report})
    return ["finetuned.json", "kkt_report.json"]


def _pipeline_config(args, **extra) -> PipelineConfig:
    return PipelineConfig(window=args.window, order=args.order, C=args.C, F=args.F,
                          nt=args.nt, seed=args.seed, bootstrap_C=args.bootstrap_C,
                          grid_search=getattr(args, "grid_search", False), **extra)


def cmd_run(args) -> list:
    data, _ = _load_data(args.data)
    cfg = _pipeline_config(args)
    if len(data) <= cfg.window:
        raise SctError(f"need more than {cfg.window} dates (window) to run, got {len(data)}")
    boot, rest = data[:cfg.window], data[cfg.window:]
    start = bootstrap_histories(boot, cfg)
    classes = sorted({c for pair in start for c in pair})
    rows, final = [], None
    for t in range(args.trials):
        trial_seed = args.seed + t
        histories = start
        for d in rest:
            seed = ex.derive_seed(trial_seed, d.date)
            train_rows, _ = sample_training_rows(d.labels, cfg.nt, np.random.default_rng(seed))
            test = np.setdiff1d(np.arange(d.n), train_rows)
            if test.size == 0:
                raise SctError(f"date {d.date}: no rows left for testing with nt={cfg.nt}")
            model, histories, _ = step(histories, d, replace(cfg, seed=seed), train_rows=train_rows)
            reports = {
                "sct-svm": ex.evaluate(model, d, test, seed),
                "dir-svm": ex.evaluate(train_direct(d.subset(train_rows), cfg.C, cfg.qp), d, test, seed),
            }
            for method, rep in reports.items():
                row = {"trial": t, "seed": seed, "date": d.date, "method": method,
                       "overall_acc": rep.overall}
                row.update({f"acc_{c}": rep.per_class.get(c, float("nan")) for c in classes})
                rows.append(row)
        if t == 0:
            final = histories
    out = _prepare_out(args.out)
    columns = ["trial", "seed", "date", "method", "overall_acc"] + [f"acc_{c}" for c in classes]
    _write_rows(out / "results.csv", rows, columns)
    formats.write_histories(out / "history.json", final)
    return ["results.csv", "history.json"]


def cmd_benchmark(args) -> list:
    if (args.data is None) == (args.fixture is None):
        raise UsageError("benchmark: give exactly one of --data or --fixture")
    if args.data is not None:
        data, _ = _load_data(args.data)
    else:
        data = scn.generate(scn.FIXTURES[args.fixture](seed=args.scenario_seed))
    cfg = PipelineConfig(window=args.window, bootstrap_C=args.bootstrap_C)
    if len(data) <= cfg.window:
        raise SctError(f"need more than {cfg.window} dates (window) to benchmark, got {len(data)}")
    stream = ex.prepare_stream(data[-cfg.window - 1:], cfg)
    rows = ex.benchmark_rows(stream, cfg, args.nt_list, args.f_list, args.c_list, args.order_list,
                             args.trials, base_seed=args.seed)
    classes = sorted({c for pair in stream.histories for c in pair})
    out = _prepare_out(args.out)
    _write_rows(out / "benchmark.csv", rows, list(ex.BENCH_COLUMNS) + [f"acc_{c}" for c in classes])
    return ["benchmark.csv"]


def cmd_perturb(args) -> list:
    data, _ = _load_data(args.data)
    classes = sorted({c for d in data for c in d.classes()})
    pair = args.pair
    if pair is None:
        if len(classes) != 2:
            raise UsageError(f"the samples hold {len(classes)} classes; choose two with --pair")
        pair = tuple(classes)
    pair = tuple(sorted(pair))
    entries = []
    for i, d in enumerate(data):
        view = make_binary_view(d, *pair)
        optimal = train_soft_margin(view, SvmConfig(C=args.C))
        entries.append(scn.perturb_to_band(optimal, view, args.band, args.noise_scale,
                                           ex.derive_seed(args.seed, d.date), args.max_attempts, d.date))
    h = PairHistory(*pair, tuple(entries), window=len(entries))
    out = _prepare_out(args.out)
    formats.write_histories(out / "perturbed.json", {pair: h})
    return ["perturbed.json"]


def cmd_replay(args) -> int:
    doc = formats.read_json(args.manifest)
    if doc.get("tool") != "sctsvm" or "command" not in doc:
        raise SctError(f"{args.manifest}: not an sctsvm manifest")
    argv = [doc["command"]]
    for key, value in doc.get("config", {}).items():
        flag = "--" + key.replace("_", "-")
        if value is None or value is False:
            continue
        if value is True:
            argv.append(flag)
        elif key in LIST_FLAGS:
            argv += [flag, ",".join(str(v) for v in value)]
        elif key == "band":
            argv += [flag, f"{value[0]!r}:{value[1]!r}"]
        elif key == "pair":
            argv += [flag, f"{value[0]},{value[1]}"]
        elif isinstance(value, list):
            argv += [flag] + [str(v) for v in value]
        else:
            argv += [flag, repr(value) if isinstance(value, float) else str(value)]
    argv += ["--out", args.out]
    return main(argv)


LIST_FLAGS = {"nt_list", "f_list", "c_list", "order_list"}


# --- parser ---

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sctsvm", description="Sequential classifier training for dated image series.")
    p.add_argument("--version", action="version", version=f"sctsvm {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=func)
        return sp

    s = command("simulate", cmd_simulate, "Generate dated samples from a scenario config or a named fixture.")
    s.add_argument("--config", help="scenario JSON")
    s.add_argument("--fixture", choices=sorted(scn.FIXTURES))
    s.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    s.add_argument("--out", required=True)

    s = command("bootstrap", cmd_bootstrap, "Train one SVM per class pair and date; write the history JSON.")
    s.add_argument("--data", nargs="+", required=True, help="samples CSV files")
    s.add_argument("--window", type=int, default=4, help="use the latest WINDOW dates")
    s.add_argument("--C", type=float, default=50.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = command("predict", cmd_predict, "Extrapolate every pair history to a target date.")
    s.add_argument("--history", required=True)
    s.add_argument("--date", type=int, required=True, help="target date in days")
    s.add_argument("--order", type=_order, default=1, help="polynomial order or 'auto'")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = command("finetune", cmd_finetune, "Fine-tune predicted classifiers on labelled samples.")
    s.add_argument("--predicted", required=True)
    s.add_argument("--data", nargs="+", required=True)
    s.add_argument("--date", type=int, default=None, help="which date of the samples to use")
    s.add_argument("--nt", type=int, default=None, help="draw NT samples per class (default: all)")
    s.add_argument("--C", type=float, default=50.0)
    s.add_argument("--F", type=float, default=20.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    def pipeline_flags(s):
        s.add_argument("--window", type=int, default=4)
        s.add_argument("--bootstrap-C", dest="bootstrap_C", type=float, default=50.0)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", required=True)

    s = command("run", cmd_run, "Sequential training over a multitemporal samples file.")
    s.add_argument("--data", nargs="+", required=True)
    s.add_argument("--nt", type=int, default=5)
    s.add_argument("--C", type=float, default=50.0)
    s.add_argument("--F", type=float, default=20.0)
    s.add_argument("--order", type=_order, default=1)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--grid-search", action="store_true", help="choose F and C by cross-validation")
    pipeline_flags(s)

    s = command("benchmark", cmd_benchmark, "Compare SCT-SVM with Dir-SVM over parameter sweeps.")
    s.add_argument("--data", nargs="+")
    s.add_argument("--fixture", choices=sorted(scn.FIXTURES))
    s.add_argument("--scenario-seed", type=int, default=0)
    s.add_argument("--nt-list", type=_ints, default=[5, 50])
    s.add_argument("--f-list", type=_floats, default=[20.0])
    s.add_argument("--c-list", type=_floats, default=[50.0])
    s.add_argument("--order-list", type=_orders, default=[1])
    s.add_argument("--trials", type=int, default=10)
    pipeline_flags(s)

    s = command("perturb", cmd_perturb, "Degrade the optimal classifier of every date into an accuracy band.")
    s.add_argument("--data", nargs="+", required=True)
    s.add_argument("--pair", type=_pair, default=None)
    s.add_argument("--band", type=_band, default=(0.6, 0.7))
    s.add_argument("--max-attempts", type=int, default=200)
    s.add_argument("--noise-scale", type=float, default=0.1)
    s.add_argument("--C", type=float, default=50.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = command("replay", cmd_replay, "Repeat the run recorded in a manifest.")
    s.add_argument("manifest")
    s.add_argument("--out", required=True)
    return p


ERROR_CODES = (
    (scn.BandUnreachableError, "E_BAND"),
    (QpFailure, "E_SOLVER"),
    (formats.FormatError, "E_FORMAT"),
    (SctError, "E_DATA"),
    (OSError, "E_IO"),
)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("sctsvm: a subcommand is required (see --help)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        if args.command == "replay":
            return args.func(args)
        artifacts = args.func(args)
        _write_manifest(Path(args.out), args, artifacts)
        return 0
    except UsageError as exc:
        print(f"{exc}", file=sys.stderr)
        print("usage: see `sctsvm --help`", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - mapped to one-line codes below
        for kind, code in ERROR_CODES:
            if isinstance(exc, kind):
                print(f"sctsvm: {code}: {exc}", file=sys.stderr)
                return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
