"""Command line: ``memtk check``, ``estimate``, ``evaluate`` and ``build``.

Each command is a thin click wrapper around a ``run_*`` function that returns an ``InvocationResult``, so the
commands can be driven without a process. Exit statuses are 0 on success, 1 when ``check`` finds the files
incompatible and 2 on unreadable or malformed input.
"""

import contextlib
from dataclasses import dataclass, field
from os import PathLike

import click
from loguru import logger

from .__version__ import __version__
from .checker import Report, verify
from .enums import ExitCode, FeatureMode
from .estimator import TrainConfig, format_header, train
from .evaluator import evaluate, write_results
from .exceptions import FormatError, MaxEntError
from .features import Corpus, FeatureSpec, build
from .formats import EventsFile, ExpressionsFile, ParametersFile
from .model import build_model

LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "WARNING", "ERROR")

_sink_id: int | None = None


@dataclass(frozen=True, slots=True)
class InvocationResult:
    """Exit status and the text a command writes to stdout and stderr."""

    exit_code: ExitCode
    stdout: str = ""
    stderr: str = ""


def _lines(lines: list[str]) -> str:
    return "".join(f"{line}\n" for line in lines)


@dataclass(slots=True)
class _Output:
    stdout: list[str] = field(default_factory=list)
    stderr: list[str] = field(default_factory=list)

    def done(self, code: ExitCode) -> InvocationResult:
        return InvocationResult(code, _lines(self.stdout), _lines(self.stderr))

    def failed(self, err: BaseException, fpath: str | PathLike | None = None) -> InvocationResult:
        code = getattr(err, "code", type(err).__name__)
        where = f" {fpath}" if fpath is not None else ""
        self.stderr.append(f"ERROR {code}{where}: {err}")
        return self.done(ExitCode.InputError)

    def report(self, report: Report, verbose: bool = False) -> None:
        self.stderr.extend(finding.format(verbose) for finding in report.findings())


def run_check(
    *,
    verbose: bool = False,
    model_path: str | PathLike | None = None,
    events_path: str | PathLike | None = None,
    expressions_path: str | PathLike | None = None,
) -> InvocationResult:
    """Verify any combination of a parameters, events and expressions file.

    Files are parsed leniently so that semantic problems come back as findings (exit 1) rather than
    parse failures (exit 2).
    """
    out = _Output()
    if model_path is None and events_path is None and expressions_path is None:
        out.stderr.append("ERROR NoInput: give at least one of -p, -e or -x")
        return out.done(ExitCode.InputError)

    documents: dict[str, ParametersFile | EventsFile | ExpressionsFile | None] = {}
    readers = (
        ("p", model_path, ParametersFile.from_file),
        ("e", events_path, EventsFile.from_file),
        ("x", expressions_path, ExpressionsFile.from_file),
    )
    for name, fpath, reader in readers:
        if fpath is None:
            documents[name] = None
            continue
        try:
            documents[name] = reader(fpath, strict=False)  # type: ignore[operator]
        except (FormatError, OSError) as err:
            return out.failed(err, fpath)

    report = verify(**documents)  # type: ignore[arg-type]
    out.report(report, verbose)
    out.stdout.append(report.summary())
    return out.done(ExitCode.Success if report.compatible else ExitCode.Incompatible)


def run_estimate(
    model_in: str | PathLike,
    events_path: str | PathLike,
    iterations: int,
    model_out: str | PathLike,
    *,
    monotonic: bool = False,
    entropy: bool = False,
    workers: int = 1,
) -> InvocationResult:
    """Train the alphas of ``model_in`` on ``events_path`` and write the result to ``model_out``.

    One diagnostics row is printed per retained iteration. Non-convergence is reported, never fatal.
    """
    out = _Output()
    try:
        params = ParametersFile.from_file(model_in)
        events = EventsFile.from_file(events_path)
    except (FormatError, OSError) as err:
        return out.failed(err)

    report = verify(params, events)
    if not report.compatible:
        out.report(report)
        return out.done(ExitCode.InputError)

    try:
        config = TrainConfig(iterations, monotonic=monotonic, compute_entropy=entropy, workers=workers)
        model, history = train(build_model(params, events), events, config)
        model.to_parameters().to_file(model_out)
    except (MaxEntError, OSError, ValueError) as err:
        return out.failed(err)

    out.stdout.append(format_header(entropy))
    out.stdout.extend(diagnostics.row() for diagnostics in history)
    if monotonic and len(history) < iterations:
        stopped = f"stopped after {len(history)} of {iterations} iterations"
        out.stderr.append(f"WARNING codelength increased, {stopped}")
    return out.done(ExitCode.Success)


def run_evaluate(
    model_path: str | PathLike,
    events_path: str | PathLike,
    expressions_path: str | PathLike,
    results_path: str | PathLike,
    *,
    workers: int = 1,
) -> InvocationResult:
    """Evaluate every expression and write one value in nats per line to ``results_path``.

    Nothing is written when the inputs fail to parse or verify.
    """
    out = _Output()
    try:
        params = ParametersFile.from_file(model_path)
        events = EventsFile.from_file(events_path, strict=False)
        expressions = ExpressionsFile.from_file(expressions_path, strict=False)
    except (FormatError, OSError) as err:
        return out.failed(err)

    report = verify(params, events, expressions)
    if not report.compatible:
        out.report(report)
        return out.done(ExitCode.InputError)

    try:
        values = evaluate(build_model(params, events), events, expressions, check=False, workers=workers)
        write_results(values, results_path)
    except (MaxEntError, OSError) as err:
        return out.failed(err)
    out.stdout.append(f"Evaluated {len(values)} expressions into {results_path}")
    return out.done(ExitCode.Success)


def run_build(
    corpus_path: str | PathLike,
    out_prefix: str,
    *,
    order: int = 1,
    mode: FeatureMode = FeatureMode.Overlapping,
    c_min: int = 0,
    triggers: tuple[int, ...] = (),
) -> InvocationResult:
    """Extract features from a corpus and write ``<prefix>.params`` and ``<prefix>.events``."""
    out = _Output()
    try:
        corpus = Corpus.from_file(corpus_path)
        fs, table, params, events = build(corpus, FeatureSpec(order, FeatureMode(mode), c_min, triggers))
    except (MaxEntError, OSError, ValueError) as err:
        return out.failed(err, corpus_path)
    if not len(fs):
        out.stderr.append(f"ERROR NoFeatures {corpus_path}: no feature count exceeds c_min = {c_min}")
        return out.done(ExitCode.InputError)

    try:
        params.to_file(f"{out_prefix}.params")
        events.to_file(f"{out_prefix}.events")
    except (MaxEntError, OSError) as err:
        return out.failed(err)
    out.stdout.append(
        f"{len(fs)} features ({len(params.marginal)} marginal), {len(table)} contexts, "
        f"{events.number_events} events"
    )
    return out.done(ExitCode.Success)


def _stderr_sink(message: str) -> None:
    click.echo(message, err=True, nl=False)


def configure_logging(level: str = "WARNING") -> None:
    """Route library logging to stderr at ``level``, replacing the sink a previous call installed."""
    global _sink_id
    with contextlib.suppress(ValueError):
        logger.remove(0 if _sink_id is None else _sink_id)
    _sink_id = logger.add(_stderr_sink, level=level.upper(), format="{level}: {message}")


def _finish(result: InvocationResult) -> None:
    if result.stdout:
        click.echo(result.stdout, nl=False)
    if result.stderr:
        click.echo(result.stderr, err=True, nl=False)
    click.get_current_context().exit(int(result.exit_code))


@click.group()
@click.version_option(version=__version__, prog_name="memtk")
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default="WARNING",
    show_default=True,
    help="Level of the log messages written to stderr.",
)
def main(log_level: str) -> None:
    """Maximum entropy modeling toolkit."""
    configure_logging(log_level)


@main.command()
@click.option("-v", "--verbose", is_flag=True, help="Explain every finding.")
@click.option("-p", "model_path", type=click.Path(dir_okay=False), help="Parameters file.")
@click.option("-e", "events_path", type=click.Path(dir_okay=False), help="Events file.")
@click.option("-x", "expressions_path", type=click.Path(dir_okay=False), help="Expressions file.")
@click.pass_context
def check(
    ctx: click.Context, verbose: bool, model_path: str, events_path: str, expressions_path: str
) -> None:
    """Verify files and their mutual compatibility; exit 0 iff compatible."""
    if model_path is None and events_path is None and expressions_path is None:
        click.echo(ctx.get_usage(), err=True)
        ctx.exit(int(ExitCode.InputError))
    _finish(
        run_check(
            verbose=verbose, model_path=model_path, events_path=events_path, expressions_path=expressions_path
        )
    )


@main.command()
@click.option("-m", "--monotonic", is_flag=True, help="Stop and revert as soon as the codelength increases.")
@click.option("--entropy", is_flag=True, help="Also report the conditional entropy H(m|f).")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True)
@click.argument("model_in", type=click.Path(dir_okay=False))
@click.argument("events", type=click.Path(dir_okay=False))
@click.argument("n", type=click.IntRange(min=0))
@click.argument("model_out", type=click.Path(dir_okay=False))
def estimate(
    monotonic: bool, entropy: bool, threads: int, model_in: str, events: str, n: int, model_out: str
) -> None:
    """Run N iterations of improved iterative scaling and write the trained parameters."""
    _finish(
        run_estimate(model_in, events, n, model_out, monotonic=monotonic, entropy=entropy, workers=threads)
    )


@main.command(name="evaluate")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True)
@click.argument("model", type=click.Path(dir_okay=False))
@click.argument("events", type=click.Path(dir_okay=False))
@click.argument("expressions", type=click.Path(dir_okay=False))
@click.argument("results", type=click.Path(dir_okay=False))
def evaluate_command(threads: int, model: str, events: str, expressions: str, results: str) -> None:
    """Write -ln P in nats for every expression to RESULTS."""
    _finish(run_evaluate(model, events, expressions, results, workers=threads))


@main.command(name="build")
@click.option("--order", type=click.IntRange(min=0), default=1, show_default=True, help="Markov order.")
@click.option(
    "--mode",
    type=click.Choice([mode.value for mode in FeatureMode]),
    default=FeatureMode.Overlapping.value,
    show_default=True,
)
@click.option("--c-min", type=click.IntRange(min=0), default=0, show_default=True, help="Count threshold.")
@click.option("--trigger", "triggers", type=click.IntRange(min=0), multiple=True, help="Trigger word id.")
@click.argument("corpus", type=click.Path(dir_okay=False))
@click.argument("out_prefix")
def build_command(
    order: int, mode: str, c_min: int, triggers: tuple[int, ...], corpus: str, out_prefix: str
) -> None:
    """Build OUT_PREFIX.params and OUT_PREFIX.events from a corpus."""
    _finish(
        run_build(corpus, out_prefix, order=order, mode=FeatureMode(mode), c_min=c_min, triggers=triggers)
    )


if __name__ == "__main__":
    main()
