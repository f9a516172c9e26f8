"""Evaluation of expressions files in negative log space.

Every expression yields one value in nats, ``-ln`` of the probability it describes. Products add their
children's values and sums combine them with a stable log-sum-exp, so no probability is ever formed in the
linear domain and long products cannot underflow.
"""

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from os import PathLike

import numpy as np
from loguru import logger

from .checker import verify
from .exceptions import IncompatibleInputsError
from .formats import ConditionalEvent, EventsFile, Expression, ExpressionsFile, Product
from .model import Model, build_model
from .utils import atomic_write, format_nats


def neglog_sum(terms: Sequence[float]) -> float:
    """Return ``-ln(sum_j exp(-t_j))``, shifting on the smallest term.

    An empty sum has probability zero and returns ``inf``.
    """
    if not terms:
        return math.inf
    values = np.asarray(terms, dtype=float)
    shift = float(values.min())
    if math.isinf(shift):
        return shift
    return shift - math.log(math.fsum(np.exp(shift - values).tolist()))


def _evaluate_expression(expression: Expression, score: Callable[[ConditionalEvent], float]) -> float:
    results: list[list[float]] = [[]]
    stack: list[tuple[Expression, bool]] = [(expression, False)]
    while stack:
        node, closed = stack.pop()
        if isinstance(node, ConditionalEvent):
            results[-1].append(score(node))
        elif not closed:
            stack.append((node, True))
            results.append([])
            stack.extend((term, False) for term in reversed(node.terms))
        else:
            values = results.pop()
            results[-1].append(math.fsum(values) if isinstance(node, Product) else neglog_sum(values))
    return results[0][0]


def evaluate(
    model: Model,
    events: EventsFile,
    expressions: ExpressionsFile,
    *,
    check: bool = True,
    workers: int = 1,
) -> list[float]:
    """Return ``-ln P`` for every expression, in file order.

    An event ``(x, y)`` scores ``ln Z(x) - ln r(y|x)``. Its conditional activation comes from the expression
    record, its marginal activation from the events file, and ``Z(x)`` from the events file's conditional
    records for ``x``; contexts without records get ``Z_marg``, so an otherwise unused context id works as
    an empty context for marginal probabilities. ``Z(x)`` is computed once per distinct context before any
    expression is evaluated.

    Parameters
    ----------
    model
        Trained model; only its alphas and alphabet are used.
    events
        Testing events file.
    expressions
        Expressions to evaluate.
    check
        Verify the three files first.
    workers
        Threads used to fill the partition cache. Results do not depend on it.

    Raises
    ------
    IncompatibleInputsError
        Verification reported errors.
    """
    params = model.to_parameters()
    if check:
        report = verify(params, events, expressions)
        if not report.compatible:
            first = report.errors[0]
            raise IncompatibleInputsError(
                f"{len(report.errors)} verification error(s), first: "
                f"{first.code} {first.location} {first.message}"
            )
    scorer = build_model(params, events)

    contexts = list(dict.fromkeys(event.context for event in expressions.events()))

    def log_partition_of(context: int) -> float:
        return math.log(scorer.partition(context))

    if workers > 1 and len(contexts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            log_partitions = list(pool.map(log_partition_of, contexts))
    else:
        log_partitions = [log_partition_of(context) for context in contexts]
    cache = dict(zip(contexts, log_partitions, strict=True))
    logger.debug("Cached Z(x) for {} contexts", len(cache))

    def score(event: ConditionalEvent) -> float:
        return cache[event.context] - math.log(scorer.weight(event.symbol, event.features))

    return [_evaluate_expression(expression, score) for expression in expressions.expressions]


def format_results(values: Sequence[float]) -> str:
    """Return the results file text, one value per line."""
    return "".join(f"{format_nats(value)}\n" for value in values)


def write_results(values: Sequence[float], fpath: str | PathLike) -> None:
    """Write a results file atomically."""
    atomic_write(fpath, format_results(values))
