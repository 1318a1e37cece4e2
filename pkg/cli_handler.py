"""
Command-line entry point for the Irish-aware ASR evaluation harness.

Subcommands:
    normalize       normalise stdin line by line to stdout
    score           score a manifest against predictions or a model adapter
    rescore         rebuild a run from its predictions.jsonl and check results.json
    report          leaderboard, gap and profile tables over emitted runs
    filter-hard     utterances every included model gets badly wrong
    show-alignment  word or character alignment of one scored utterance

Exit status: 0 on success, 1 on user error (bad flags, unreadable or
malformed inputs), 2 on adapter or protocol failure and on a failed
rescore check. Data goes to standard output or --out-dir; diagnostics go to
standard error.
"""

import argparse
import logging
import shlex
import sys
from pathlib import Path
from typing import Any, List, Optional, Sequence, TextIO

from src.adapter import ModelAdapter
from src.aligner import ErrorCounts, alignment, count_steps, percentage
from src.analysis import (
    cross_corpus_gap,
    discover_runs,
    filter_hard,
    gap_table,
    hard_table,
    leaderboard,
    leaderboard_json,
    leaderboard_table,
    profile_rows,
    profile_table,
)
from src.config import Config
from src.corpus_io import (
    META_FILE,
    PREDICTIONS_FILE,
    RunMetadata,
    emit_artifacts,
    load_manifest,
    load_prediction_records,
    load_predictions,
    read_json_artifact,
    render_json,
    software_versions,
)
from src.exceptions import (
    AdapterError,
    AdapterProtocolError,
    ArtifactError,
    EvaluationError,
    NormalizationConfigError,
)
from src.ga_normalizer import APOSTROPHE_POLICIES, DIGIT_POLICIES, char_tokens, normalize, word_tokens
from src.observability import ObservabilityManager
from src.scorer import RunLabels, Scorer


EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_ADAPTER_FAILURE = 2

# Configure logging
logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# Create console handler if not already present
if not logger.handlers:
    handler = logging.StreamHandler()
    handler.setLevel(logging.INFO)
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    handler.setFormatter(formatter)
    logger.addHandler(handler)


class UsageError(Exception):
    """Bad command line; argparse would otherwise exit with status 2."""
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def version_string() -> str:
    versions = software_versions()
    return (
        f"asr-eval {versions['asr_eval']} (python {versions['python']}, "
        f"numpy {versions['numpy']}, unicode {versions['unicode']})"
    )


def build_parser() -> argparse.ArgumentParser:
    """
    Build the argument parser.

    Flags that map onto Config default to None so environment values
    survive unless a flag is given.
    """
    common = _ArgumentParser(add_help=False)
    norm = common.add_argument_group("normaliser")
    norm.add_argument('--lowercase', action=argparse.BooleanOptionalAction, default=None)
    norm.add_argument('--strip-punctuation', action=argparse.BooleanOptionalAction, default=None)
    norm.add_argument('--collapse-whitespace', action=argparse.BooleanOptionalAction, default=None)
    norm.add_argument('--apostrophe-policy', choices=APOSTROPHE_POLICIES, default=None)
    norm.add_argument('--digit-policy', choices=DIGIT_POLICIES, default=None)
    boot = common.add_argument_group("bootstrap")
    boot.add_argument('--resamples', type=int, default=None)
    boot.add_argument('--seed', type=int, default=None)
    common.add_argument('--workers', type=int, default=None, help="Scoring and bootstrap threads")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help="Debug logging")
    verbosity.add_argument('-q', '--quiet', action='store_true', help="Warnings and errors only")

    parser = _ArgumentParser(
        prog='asr-eval',
        description="Irish-aware ASR evaluation: normalise, score, report, filter.",
    )
    parser.add_argument('--version', action='version', version=version_string())
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_ArgumentParser)

    sub.add_parser('normalize', parents=[common], help="Normalise stdin lines to stdout")

    score = sub.add_parser('score', parents=[common], help="Score a run and emit artifacts")
    score.add_argument('--manifest', required=True, help="Manifest JSONL (id, reference, audio)")
    source = score.add_mutually_exclusive_group(required=True)
    source.add_argument('--predictions', help="Predictions JSONL (id, hypothesis)")
    source.add_argument('--adapter-cmd', help="Model adapter command line")
    score.add_argument('--out-dir', required=True)
    score.add_argument('--dataset-name', default=None, help="Defaults to the manifest file stem")
    score.add_argument('--dataset-split', default="test")
    score.add_argument('--model', default=None, help="Model identity recorded in meta.json")
    score.add_argument('--timeout-secs', type=float, default=None)

    rescore = sub.add_parser('rescore', parents=[common], help="Rescore a run from predictions.jsonl")
    rescore.add_argument('--run', required=True, help="Run directory")
    rescore.add_argument('--out-dir', default=None, help="Also write the rebuilt artifacts here")

    report = sub.add_parser('report', help="Cross-run reports")
    kinds = report.add_subparsers(dest='report_kind', required=True, parser_class=_ArgumentParser)

    board = kinds.add_parser('leaderboard', parents=[common], help="Runs ordered by WER")
    board.add_argument('runs', nargs='+', help="Run directories or parents of run directories")
    board.add_argument('--dataset', default=None)
    board.add_argument('--json', action='store_true')

    gap = kinds.add_parser('gap', parents=[common], help="Per-model WER gap B - A")
    gap.add_argument('--a', nargs='+', required=True, dest='runs_a')
    gap.add_argument('--b', nargs='+', required=True, dest='runs_b')
    gap.add_argument('--json', action='store_true')

    profile = kinds.add_parser('profile', parents=[common], help="Dominant error type per run")
    profile.add_argument('runs', nargs='+')
    profile.add_argument('--ins-threshold', type=float, default=None)
    profile.add_argument('--json', action='store_true')

    hard = sub.add_parser('filter-hard', parents=[common], help="Utterances above a WER bar for every model")
    hard.add_argument('runs', nargs='+')
    hard.add_argument('--threshold', type=float, default=None)
    hard.add_argument('--exclude', nargs='*', default=[], metavar='MODEL')
    hard.add_argument('--json', action='store_true')

    show = sub.add_parser('show-alignment', parents=[common], help="Alignment trace of one utterance")
    show.add_argument('--run', required=True)
    show.add_argument('--id', required=True, dest='sample_id')
    show.add_argument('--level', choices=('word', 'char'), default='word')

    return parser


def apply_overrides(config: Config, args: argparse.Namespace) -> Config:
    """Overlay command-line flags on an environment-derived Config."""
    mapping = {
        'lowercase': 'lowercase',
        'strip_punctuation': 'strip_punctuation',
        'collapse_whitespace': 'collapse_whitespace',
        'apostrophe_policy': 'apostrophe_policy',
        'digit_policy': 'digit_policy',
        'resamples': 'resamples',
        'seed': 'seed',
        'workers': 'workers',
        'timeout_secs': 'timeout_secs',
        'ins_threshold': 'ins_threshold_pct',
        'threshold': 'hard_wer_threshold_pct',
    }
    for arg_name, field_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(config, field_name, value)
    if getattr(args, 'verbose', False):
        config.log_level = "DEBUG"
    elif getattr(args, 'quiet', False):
        config.log_level = "WARNING"
    return config


def main(
    argv: Optional[Sequence[str]] = None,
    stdin: Optional[TextIO] = None,
    stdout: Optional[TextIO] = None
) -> int:
    """
    Run one subcommand.

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])
        stdin: Input stream for normalize (defaults to sys.stdin)
        stdout: Output stream for data (defaults to sys.stdout)

    Returns:
        int: Exit status
    """
    out = stdout if stdout is not None else _utf8_stream(sys.stdout)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USER_ERROR
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)

    try:
        config = apply_overrides(Config.from_environment(), args)
    except ValueError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USER_ERROR

    validation_errors = config.validate()
    if validation_errors:
        for message in validation_errors:
            logger.error(f"Configuration validation failed: {message}")
        return EXIT_USER_ERROR

    obs = ObservabilityManager(config)

    try:
        if args.command == 'normalize':
            source = stdin if stdin is not None else _utf8_stream(sys.stdin)
            return run_normalize(config, source, out)
        if args.command == 'score':
            return run_score(config, args, obs, out)
        if args.command == 'rescore':
            return run_rescore(config, args, obs, out)
        if args.command == 'report':
            return run_report(config, args, out)
        if args.command == 'filter-hard':
            return run_filter_hard(config, args, out)
        if args.command == 'show-alignment':
            return run_show_alignment(args, out)
        parser.print_usage(sys.stderr)
        return EXIT_USER_ERROR
    except (AdapterError, AdapterProtocolError) as e:
        obs.log_error("Adapter run aborted", e, command=args.command)
        return EXIT_ADAPTER_FAILURE
    except EvaluationError as e:
        obs.log_error(f"{args.command} failed", e)
        return EXIT_USER_ERROR


def run_normalize(config: Config, source: TextIO, out: TextIO) -> int:
    norm_config = config.norm_config()
    for line_number, line in enumerate(source, start=1):
        text = line[:-1] if line.endswith('\n') else line
        try:
            out.write(normalize(text, norm_config).text + "\n")
        except NormalizationConfigError as e:
            raise NormalizationConfigError(f"stdin line {line_number}: {e}") from e
    out.flush()
    return EXIT_OK


def run_score(config: Config, args: argparse.Namespace, obs: ObservabilityManager, out: TextIO) -> int:
    utterances = load_manifest(args.manifest)
    scorer = Scorer(config, obs)

    dataset_name = args.dataset_name or Path(args.manifest).stem
    if args.predictions:
        model = args.model or Path(args.predictions).stem
        labels = RunLabels(dataset_name, args.dataset_split, model)
        run = scorer.score_predictions(utterances, load_predictions(args.predictions), labels)
    else:
        argv = shlex.split(args.adapter_cmd)
        model = args.model or (Path(argv[-1]).stem if argv else "adapter")
        labels = RunLabels(dataset_name, args.dataset_split, model)
        adapter_run = ModelAdapter(argv, config.timeout_secs).run(utterances)
        run = scorer.score_adapter_run(utterances, adapter_run, labels)

    emit_artifacts(run.pairs, run.global_score, run.cis, run.meta, args.out_dir)

    wer_ci = run.cis['WER']
    out.write(
        f"{model}\t{dataset_name}\tWER {run.global_score.wer_pct:.1f}% "
        f"[{wer_ci.low_pct:.1f}, {wer_ci.high_pct:.1f}]\tCER {run.global_score.cer_pct:.1f}%\n"
    )
    return EXIT_OK


def run_rescore(config: Config, args: argparse.Namespace, obs: ObservabilityManager, out: TextIO) -> int:
    run, matches = Scorer(config, obs).rescore(args.run)
    if args.out_dir:
        emit_artifacts(run.pairs, run.global_score, run.cis, run.meta, args.out_dir)
    out.write(("match" if matches else "mismatch") + "\n")
    return EXIT_OK if matches else EXIT_ADAPTER_FAILURE


def run_report(config: Config, args: argparse.Namespace, out: TextIO) -> int:
    if args.report_kind == 'leaderboard':
        ranked = leaderboard(discover_runs(args.runs), args.dataset)
        _write(out, args.json, leaderboard_json(ranked), leaderboard_table(ranked))
    elif args.report_kind == 'gap':
        rows = cross_corpus_gap(discover_runs(args.runs_a), discover_runs(args.runs_b))
        _write(out, args.json, [row.to_dict() for row in rows], gap_table(rows))
    else:
        rows = profile_rows(discover_runs(args.runs), config.ins_threshold_pct)
        _write(out, args.json, rows, profile_table(rows))
    return EXIT_OK


def run_filter_hard(config: Config, args: argparse.Namespace, out: TextIO) -> int:
    result = filter_hard(discover_runs(args.runs), config.hard_wer_threshold_pct, set(args.exclude))
    _write(out, args.json, result.to_dict(), hard_table(result))
    return EXIT_OK


def run_show_alignment(args: argparse.Namespace, out: TextIO) -> int:
    run_dir = Path(args.run)
    meta = RunMetadata.from_dict(read_json_artifact(run_dir / META_FILE))
    records = {r.sample_id: r for r in load_prediction_records(run_dir / PREDICTIONS_FILE)}
    record = records.get(args.sample_id)
    if record is None:
        raise ArtifactError(f"No utterance '{args.sample_id}' in {run_dir / PREDICTIONS_FILE}")

    ref_norm = normalize(record.reference, meta.norm_config, sample_id=record.sample_id)
    hyp_norm = normalize(record.hypothesis, meta.norm_config, sample_id=record.sample_id)
    tokens = word_tokens if args.level == 'word' else char_tokens
    ref_tokens = tokens(ref_norm)
    steps = alignment(ref_tokens, tokens(hyp_norm))

    out.write(f"id: {record.sample_id}\n")
    out.write(format_alignment(steps))
    out.write(format_counts(count_steps(steps, len(ref_tokens))))
    return EXIT_OK


def format_alignment(steps: Sequence[Any]) -> str:
    """Three aligned rows: reference, hypothesis and S/I/D markers."""
    marks = {'match': '', 'sub': 'S', 'del': 'D', 'ins': 'I'}
    ref_row: List[str] = []
    hyp_row: List[str] = []
    op_row: List[str] = []
    for step in steps:
        ref = step.ref if step.ref is not None else '*' * len(step.hyp)
        hyp = step.hyp if step.hyp is not None else '*' * len(step.ref)
        width = max(len(ref), len(hyp), 1)
        ref_row.append(ref.ljust(width))
        hyp_row.append(hyp.ljust(width))
        op_row.append(marks[step.op].ljust(width))
    return (
        "REF: " + " ".join(ref_row).rstrip() + "\n"
        + "HYP: " + " ".join(hyp_row).rstrip() + "\n"
        + "OP:  " + " ".join(op_row).rstrip() + "\n"
    )


def format_counts(counts: ErrorCounts) -> str:
    rate = f"{percentage(counts.errors, counts.n_ref):.1f}%" if counts.n_ref else "undefined"
    return (
        f"S={counts.substitutions} I={counts.insertions} D={counts.deletions} "
        f"N={counts.n_ref} ER={rate}\n"
    )


def _write(out: TextIO, as_json: bool, document: Any, table: str) -> None:
    out.write(render_json(document) if as_json else table)


def _utf8_stream(stream: TextIO) -> TextIO:
    reconfigure = getattr(stream, 'reconfigure', None)
    if reconfigure is not None:
        try:
            reconfigure(encoding='utf-8')
        except (ValueError, OSError):
            pass
    return stream


if __name__ == '__main__':
    sys.exit(main())
