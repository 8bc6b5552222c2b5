"""``trustgate`` command line: generate, replay, experiment."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .config import CONFIG_ENV, Config, load_config
from .gate import GateAction, Latch, Mode, oracle_rng, run_trace, trust_series
from .geo import ValidationError
from .tracegen import generate_corpus
from .traceio import corpus_hash, file_sha256, manifest_path, read_traces, write_corpus

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4

EXPERIMENTS = ("detection", "ablation", "sweep", "robustness", "bench")

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> Config:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "lenient", False):
        cfg = replace(cfg, strict=False)
    return cfg


# -- generate ------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = _config(args)
    corpus = cfg.corpus
    if args.seed is not None:
        corpus = replace(corpus, master_seed=args.seed)
    if args.traces_per_scenario is not None:
        corpus = replace(corpus, traces_per_scenario=args.traces_per_scenario)
    if args.fixes_per_trace is not None:
        corpus = replace(corpus, fixes_per_trace=args.fixes_per_trace)
    out = Path(args.out)
    manifest = write_corpus(out, corpus)
    print(f"wrote {manifest['n_traces']} traces to {out}")
    print(f"manifest {manifest_path(out)}")
    print(f"sha256 {manifest['content_sha256']}")
    return EXIT_OK


# -- replay --------------------------------------------------------------------


def _fmt_t(t: float | None) -> str:
    return "unscored" if t is None else f"{t:.4f}"


def cmd_replay(args) -> int:
    cfg = _config(args).with_thresholds(args.theta_p, args.theta_s)
    traces = read_traces(args.input, strict=cfg.strict)
    scorer = cfg.scorer()
    mode = Mode(args.mode)
    oracle = cfg.oracle if args.verify else None
    out = sys.stdout
    for i, trace in enumerate(traces):
        trust = trust_series(trace, scorer)
        outcome = run_trace(
            trace, cfg.thresholds, mode, oracle, oracle_rng(cfg.oracle_seed, i), scorer=scorer, trust=trust
        )
        for k, action in enumerate(outcome.actions):
            if mode is Mode.BINARY:
                latch = "-"
                t = trust[k]
            else:
                latch = outcome.latches[k].value
                t = outcome.scores[k]
            out.write(f"{trace.session_id}\t{k}\t{_fmt_t(t)}\t{action.value}\t{latch}\n")
        counts = {a: 0 for a in (GateAction.PROCEED, GateAction.STEP_UP, GateAction.DENY)}
        for a in outcome.actions[1:]:
            if a in counts:
                counts[a] += 1
        n_scored = len(outcome.actions) - 1
        min_t = min((t for t in trust if t is not None), default=None)
        latch_at = "-" if outcome.first_latch_index is None else str(outcome.first_latch_index)
        disposition = outcome.disposition.value
        if outcome.latches and outcome.latches[-1] is Latch.STEP_UP:
            disposition = "step_up_pending"
        out.write(
            f"# {trace.session_id} mode={mode.value} theta_p={cfg.thresholds.theta_p} "
            f"theta_s={cfg.thresholds.theta_s} proceed={counts[GateAction.PROCEED]}/{n_scored} "
            f"step_up={counts[GateAction.STEP_UP]}/{n_scored} deny={counts[GateAction.DENY]}/{n_scored} "
            f"min_T={_fmt_t(min_t)} latch_at={latch_at} disposition={disposition}\n"
        )
    return EXIT_OK


# -- experiment ----------------------------------------------------------------


def _load_corpus(args, cfg: Config) -> tuple[ex.ScoredCorpus, int | None]:
    """Corpus plus the master seed it came from (None when unknown)."""
    if args.corpus:
        traces = read_traces(args.corpus, strict=cfg.strict)
        digest = file_sha256(args.corpus)
        seed = None
        mpath = manifest_path(args.corpus)
        if mpath.exists():
            try:
                manifest = json.loads(mpath.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{mpath}: invalid JSON: {exc.msg}") from None
            if manifest.get("content_sha256") != digest:
                raise ValidationError(f"{args.corpus}: content does not match manifest {mpath}")
            seed = manifest.get("master_seed")
    else:
        corpus_cfg = cfg.corpus
        if args.traces_per_scenario is not None:
            corpus_cfg = replace(corpus_cfg, traces_per_scenario=args.traces_per_scenario)
        if args.seed is not None:
            corpus_cfg = replace(corpus_cfg, master_seed=args.seed)
        traces = generate_corpus(corpus_cfg)
        digest = corpus_hash(traces)
        seed = corpus_cfg.master_seed
    return ex.ScoredCorpus.build(traces, cfg.signals, digest), seed


def _write_report(report: ex.ExperimentReport, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    md = out_dir / f"{report.experiment}.md"
    md.write_text(report.to_markdown(), encoding="utf-8")
    written.append(md)
    for name, table in report.tables.items():
        path = out_dir / f"{report.experiment}_{name}.csv"
        path.write_text(table.to_csv(), encoding="utf-8")
        written.append(path)
    return written


def run_experiment(
    name: str, cfg: Config, corpus: ex.ScoredCorpus | None, args, master_seed: int | None = None
) -> ex.ExperimentReport:
    scorer = cfg.scorer()
    theta_p = cfg.thresholds.theta_p
    if name == "bench":
        results = [ex.bench_scoring(args.iterations, full=True), ex.bench_scoring(args.iterations, full=False)]
        return ex.bench_report(results)
    assert corpus is not None
    if name == "detection":
        report = ex.run_detection(corpus, scorer).report(corpus.corpus_hash)
    elif name == "ablation":
        report = ex.run_ablation(corpus, theta_p).report(corpus.corpus_hash)
    elif name == "sweep":
        thetas = args.thetas or ex.DEFAULT_SWEEP
        rows = ex.run_sweep(
            corpus, thetas, cfg.oracle, theta_s=cfg.thresholds.theta_s, oracle_seed=cfg.oracle_seed, scorer=scorer
        )
        report = ex.sweep_report(rows, corpus.corpus_hash, cfg.oracle_seed)
    elif name == "robustness":
        report = ex.robustness_report(ex.run_robustness(corpus, theta_p, scorer), theta_p, corpus.corpus_hash)
    else:
        raise ValidationError(f"unknown experiment {name!r}")
    snapshot = cfg.to_dict()
    report.config.update(
        {
            "master_seed": "unknown" if master_seed is None else master_seed,
            "theta_p": snapshot["theta_p"],
            "theta_s": snapshot["theta_s"],
            "signal_constants": json.dumps({k: snapshot[k] for k in sorted(cfg.signals.__dataclass_fields__)}),
        }
    )
    return report


def cmd_experiment(args) -> int:
    cfg = _config(args)
    corpus, seed = (None, None) if args.name == "bench" else _load_corpus(args, cfg)
    report = run_experiment(args.name, cfg, corpus, args, seed)
    for path in _write_report(report, Path(args.out)):
        print(f"wrote {path}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def _theta(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold {v} outside [0, 1]")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trustgate", description="Location trust scoring and graduated gating.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV}, else built-in defaults)")
        p.add_argument("--lenient", action="store_true", help="warn on unknown trace fields instead of failing")

    g = sub.add_parser("generate", help="write a synthetic labelled corpus plus manifest")
    common(g)
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--out", required=True, help="output JSONL path")
    g.add_argument("--traces-per-scenario", type=_positive_int)
    g.add_argument("--fixes-per-trace", type=_positive_int)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("replay", help="run a trace file through the gate and log each decision")
    common(r)
    r.add_argument("--in", dest="input", required=True, help="JSONL trace file")
    r.add_argument("--theta-p", type=_theta)
    r.add_argument("--theta-s", type=_theta)
    r.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.GRADUATED.value)
    r.add_argument(
        "--verify",
        action="store_true",
        help="resolve step-ups with the configured oracle (needs labelled traces)",
    )
    r.set_defaults(func=cmd_replay)

    e = sub.add_parser("experiment", help="run a study and write CSV + markdown reports")
    common(e)
    e.add_argument("name", choices=EXPERIMENTS)
    e.add_argument("--corpus", help="JSONL corpus (default: generate from config)")
    e.add_argument("--out", default="reports", help="output directory")
    e.add_argument("--seed", type=int, help="master seed when generating")
    e.add_argument("--traces-per-scenario", type=_positive_int, help="corpus size when generating")
    e.add_argument("--thetas", type=_theta, nargs="+", help="sweep thresholds")
    e.add_argument("--iterations", type=int, default=100_000, help="benchmark iterations")
    e.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. `| head`); not an error
        sys.stderr.close()
        return EXIT_OK
    except ValidationError as exc:
        print(f"trustgate: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"trustgate: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
