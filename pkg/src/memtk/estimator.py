"""Improved iterative scaling over an events file.

Each iteration accumulates, for every feature ``i``, the coefficients::

    b_{i,k} = sum over pairs (x,y) with g_i active and M(x,y) = k of f(x) m(y|x) g_i(x,y)

where ``M(x,y)`` is the total (marginal plus conditional) activation of the pair, and solves
``sum_k b_{i,k} beta^k = a_i`` for the multiplicative update ``beta_i``. Only observed contexts and the
pairs listed in the events file are visited; the marginal features reach every symbol of every observed
context through the aggregate ``A = sum_x f(x)/Z(x)``.
"""

import math
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from loguru import logger

from .exceptions import EmptyCorpusError, NoSolutionError, ZeroTargetError
from .formats import ConditionalEvent, EventsFile
from .model import Model
from .utils import batched

DIAGNOSTIC_COLUMNS = ("iter", "d(m[g],a)", "|Update|", "Max(alpha)", "L(C|m)", "H(m|f)")
COLUMN_WIDTH = 14


@dataclass(frozen=True, slots=True)
class EmpiricalSummary:
    """Corpus size, context distribution and empirical feature expectations of an events file.

    Attributes
    ----------
    total_count
        ``T``, the sum of all conditional event counts.
    context_freq
        ``f(x) = sum_y c(x,y) / T`` for every context with positive count, in file order.
    targets_empirical
        ``f[g_i]``, counting the value (multiplicity) of every feature.
    """

    total_count: int
    context_freq: dict[int, float]
    targets_empirical: dict[int, float]


@dataclass(frozen=True, slots=True)
class Diagnostics:
    """Convergence information of one iteration.

    ``distance`` and ``update_norm`` describe the model before the update (expectations) and the update
    itself; ``max_alpha``, ``codelength`` and ``entropy`` describe the model after it.
    """

    iteration: int
    distance: float
    update_norm: float
    max_alpha: float
    codelength: float
    entropy: float | None = None
    clamped: int = 0

    def row(self) -> str:
        """Return the fixed-width table row printed by ``estimate``."""
        values = [self.distance, self.update_norm, self.max_alpha, self.codelength]
        if self.entropy is not None:
            values.append(self.entropy)
        return f"{self.iteration:>6d}" + "".join(f"{value:>{COLUMN_WIDTH}.6g}" for value in values)


def format_header(entropy: bool = False) -> str:
    """Return the header matching ``Diagnostics.row``."""
    columns = DIAGNOSTIC_COLUMNS if entropy else DIAGNOSTIC_COLUMNS[:-1]
    return f"{columns[0]:>6}" + "".join(f"{name:>{COLUMN_WIDTH}}" for name in columns[1:])


@dataclass(slots=True)
class TrainConfig:
    """Settings of an estimation run.

    Attributes
    ----------
    iterations
        Maximum number of iterations; zero leaves the model untouched.
    monotonic
        Stop and revert the last update as soon as the codelength increases.
    newton_tol
        Relative tolerance of the per-feature update solve.
    newton_max_steps
        Maximum number of steps in the per-feature update solve.
    lambda_clamp
        Bound on ``|ln alpha|``.
    compute_entropy
        Report ``H(m|f)`` on every iteration.
    workers
        Threads used to accumulate expectations. Results do not depend on it.
    """

    iterations: int = 100
    monotonic: bool = False
    newton_tol: float = 1e-12
    newton_max_steps: int = 100
    lambda_clamp: float = 30.0
    compute_entropy: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if not self.newton_tol > 0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.newton_max_steps < 1:
            raise ValueError(f"newton_max_steps must be positive, got {self.newton_max_steps}")
        if not self.lambda_clamp > 0:
            raise ValueError(f"lambda_clamp must be positive, got {self.lambda_clamp}")
        if self.workers < 1:
            raise ValueError(f"workers must be positive, got {self.workers}")


def summarize_empirical(events: EventsFile) -> EmpiricalSummary:
    """Compute ``T``, ``f(x)`` and the empirical feature expectations.

    Every positive-count conditional event credits its conditional features and the marginal features
    of its symbol.

    Raises
    ------
    EmptyCorpusError
        All counts are zero.
    """
    marginal = {event.symbol: event.features for event in events.marginal}
    context_counts: Counter[int] = Counter()
    feature_counts: Counter[int] = Counter()
    for event in events.conditional:
        if event.count == 0:
            continue
        context_counts[event.context] += event.count
        for index in (*event.features, *marginal.get(event.symbol, ())):
            feature_counts[index] += event.count
    total = sum(context_counts.values())
    if total == 0:
        raise EmptyCorpusError("the events file has no event with positive count")
    return EmpiricalSummary(
        total_count=total,
        context_freq={context: count / total for context, count in context_counts.items()},
        targets_empirical={index: count / total for index, count in sorted(feature_counts.items())},
    )


@dataclass(slots=True)
class _ContextGroup:
    context: int
    freq: float
    events: list[ConditionalEvent] = field(default_factory=list)


@dataclass(slots=True)
class _Accumulation:
    """Partition aggregates and per-feature, per-exponent coefficient terms."""

    normalizer: float
    terms: dict[int, dict[int, list[float]]]

    def coefficients(self, index: int) -> dict[int, float]:
        """Return ``{k: b_k}`` for a feature, empty when it is never active."""
        return {k: max(0.0, math.fsum(values)) for k, values in sorted(self.terms.get(index, {}).items())}

    def expectation(self, index: int) -> float:
        """Return ``m[g_i]``, the sum of the feature's coefficients."""
        return math.fsum(self.coefficients(index).values())


def _group_contexts(summary: EmpiricalSummary, events: EventsFile) -> list[_ContextGroup]:
    groups = {context: _ContextGroup(context, freq) for context, freq in summary.context_freq.items()}
    for event in events.conditional:
        group = groups.get(event.context)
        if group is not None and event.features:
            group.events.append(event)
    return list(groups.values())


def _accumulate_shard(
    model: Model, shard: tuple[_ContextGroup, ...]
) -> tuple[list[float], list[tuple[int, int, float]]]:
    normalizers = []
    terms = []
    for group in shard:
        scale = group.freq / model.partition(group.context)
        normalizers.append(scale)
        for event in group.events:
            marginal = model.marginal_activations.get(event.symbol, ())
            exponent = len(marginal) + len(event.features)
            joint = scale * model.weight(event.symbol, event.features)
            terms.extend((index, exponent, joint) for index in event.features)
            if marginal:
                # The aggregate term already counted this pair at the marginal-only weight and exponent.
                base = scale * model.weight_marg(event.symbol)
                for index in marginal:
                    terms.append((index, len(marginal), -base))
                    terms.append((index, exponent, joint))
    return normalizers, terms


def _accumulate(
    model: Model, summary: EmpiricalSummary, events: EventsFile, workers: int = 1
) -> _Accumulation:
    groups = _group_contexts(summary, events)
    if workers > 1 and len(groups) > 1:
        chunk = -(-len(groups) // workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shards = list(pool.map(partial(_accumulate_shard, model), batched(groups, chunk)))
    else:
        shards = [_accumulate_shard(model, tuple(groups))]

    terms: dict[int, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    normalizers: list[float] = []
    for shard_normalizers, shard_terms in shards:
        normalizers.extend(shard_normalizers)
        for index, exponent, value in shard_terms:
            terms[index][exponent].append(value)
    normalizer = math.fsum(normalizers)
    for symbol, features in model.marginal_activations.items():
        value = normalizer * model.weight_marg(symbol)
        for index in features:
            terms[index][len(features)].append(value)
    return _Accumulation(normalizer, terms)


def model_expectations(
    model: Model, summary: EmpiricalSummary, events: EventsFile, workers: int = 1
) -> dict[int, float]:
    """Return ``m[g_i] = sum_x f(x) sum_y m(y|x) g_i(x,y)`` for every feature of the model.

    The cost is linear in the number of observed contexts, listed events and marginal symbols.
    """
    accumulation = _accumulate(model, summary, events, workers)
    return {index: accumulation.expectation(index) for index in model.alphas}


def _polynomial(coeffs: dict[int, float], target: float, beta: float) -> tuple[float, float]:
    try:
        value = math.fsum([*(b * beta**k for k, b in coeffs.items()), -target])
        slope = math.fsum(k * b * beta ** (k - 1) for k, b in coeffs.items() if k)
    except OverflowError:
        return math.inf, math.inf
    return value, slope


def newton_update(
    coeffs: dict[int, float], target: float, *, tol: float = 1e-12, max_steps: int = 100
) -> float:
    """Solve ``sum_k b_k beta^k = a`` for ``beta > 0``.

    The left side is strictly increasing on ``beta > 0`` so the root is unique. A single exponent is
    solved in closed form; otherwise Newton steps start from ``beta = 1`` and fall back to bisection
    whenever a step leaves the current bracket.

    Raises
    ------
    NoSolutionError
        No positive coefficient with a positive exponent, or the constant term alone reaches the target.
    """
    if not target > 0:
        raise NoSolutionError(f"target must be positive, got {target}")
    positive = {k: b for k, b in coeffs.items() if b > 0}
    constant = positive.pop(0, 0.0)
    if not positive:
        raise NoSolutionError("every coefficient with a positive exponent is zero")
    if constant >= target:
        raise NoSolutionError(f"constant term {constant} already reaches target {target}")
    if len(positive) == 1 and constant == 0:
        ((exponent, coefficient),) = positive.items()
        return (target / coefficient) ** (1.0 / exponent)
    if constant:
        positive[0] = constant

    low, high = 0.0, 1.0
    while _polynomial(positive, target, high)[0] < 0:
        low, high = high, high * 2.0
        if high > 1e300:
            raise NoSolutionError(f"no root below {high:g} for target {target}")

    beta = 1.0 if low < 1.0 <= high else 0.5 * (low + high)
    for _ in range(max_steps):
        value, slope = _polynomial(positive, target, beta)
        if value == 0:
            return beta
        if value < 0:
            low = beta
        else:
            high = beta
        candidate = beta - value / slope if slope > 0 and math.isfinite(value) else math.nan
        if not low < candidate < high:
            candidate = 0.5 * (low + high)
        if abs(candidate - beta) <= tol * candidate:
            return candidate
        beta = candidate
    logger.warning("Update solve did not converge in {} steps (beta={}, target={})", max_steps, beta, target)
    return beta


def codelength(model: Model, events: EventsFile, summary: EmpiricalSummary | None = None) -> float:
    """Return ``L(C|m) = -sum c(x,y) ln m(y|x)`` in nats."""
    log_partition: dict[int, float] = {}
    terms = []
    for event in events.conditional:
        if event.count == 0:
            continue
        if event.context not in log_partition:
            log_partition[event.context] = math.log(model.partition(event.context))
        log_weight = math.log(model.weight_cond(event.context, event.symbol))
        terms.append(event.count * (log_partition[event.context] - log_weight))
    return math.fsum(terms)


def conditional_entropy(model: Model, summary: EmpiricalSummary) -> float:
    """Return ``H(m|f) = -sum_x f(x) sum_y m(y|x) ln m(y|x)`` in nats.

    The inner sum starts from the closed form over the marginal table,
    ``sum_y (r(y)/Z) ln(r(y)/Z) = (sum_y r(y) ln r(y) - Z_marg ln Z) / Z``, and then swaps in the
    conditional weight for each symbol of ``Y_x+``.
    """
    marginal_entropy = math.fsum(r * math.log(r) for r in model.marginal_weight.values())
    weighted = []
    for context, freq in summary.context_freq.items():
        partition = model.partition(context)
        log_partition = math.log(partition)
        terms = [(marginal_entropy - model.marginal_mass * log_partition) / partition]
        for symbol in model.symbols_in(context):
            marginal = model.weight_marg(symbol)
            conditional = model.weight_cond(context, symbol)
            terms.append(-marginal / partition * (math.log(marginal) - log_partition))
            terms.append(conditional / partition * (math.log(conditional) - log_partition))
        weighted.append(-freq * math.fsum(terms))
    return max(0.0, math.fsum(weighted))


def active_features(model: Model, summary: EmpiricalSummary, events: EventsFile) -> set[int]:
    """Return the features active on at least one pair of an observed context."""
    active = {index for features in model.marginal_activations.values() for index in features}
    for event in events.conditional:
        if event.context in summary.context_freq:
            active.update(event.features)
    return active


def _norm(values: list[float]) -> float:
    return float(np.linalg.norm(np.asarray(values, dtype=float))) if values else 0.0


def iis_step(
    model: Model,
    summary: EmpiricalSummary,
    events: EventsFile,
    targets: dict[int, float],
    config: TrainConfig,
    *,
    iteration: int = 1,
) -> tuple[Model, Diagnostics]:
    """Apply one improved iterative scaling update to every active feature.

    Features never active on an observed context keep their alpha. ``|ln alpha|`` is clamped to
    ``config.lambda_clamp``.

    Raises
    ------
    ZeroTargetError
        An active feature has target zero; the update would drive its alpha to zero.
    """
    accumulation = _accumulate(model, summary, events, config.workers)
    expectations = {index: accumulation.expectation(index) for index in model.alphas}
    coefficients = {index: accumulation.coefficients(index) for index in model.alphas}
    zero_targets = [i for i, coeffs in coefficients.items() if coeffs and not targets.get(i, 0.0) > 0]
    if zero_targets:
        raise ZeroTargetError(
            f"features {zero_targets} are active but have target 0; their alphas would be driven to zero"
        )

    updates = []
    clamped = 0
    for index, coeffs in coefficients.items():
        if not coeffs:
            continue
        beta = newton_update(
            coeffs, targets[index], tol=config.newton_tol, max_steps=config.newton_max_steps
        )
        old = math.log(model.alphas[index])
        new = old + math.log(beta)
        if abs(new) > config.lambda_clamp:
            logger.warning("Clamped lambda of feature {} from {} to +/-{}", index, new, config.lambda_clamp)
            new = math.copysign(config.lambda_clamp, new)
            clamped += 1
        updates.append(new - old)
        model.alphas[index] = math.exp(new)
    model.refresh()

    distance = _norm([expectations[i] - targets.get(i, 0.0) for i in model.alphas])
    diagnostics = Diagnostics(
        iteration=iteration,
        distance=distance,
        update_norm=_norm(updates),
        max_alpha=model.max_alpha,
        codelength=codelength(model, events, summary),
        entropy=conditional_entropy(model, summary) if config.compute_entropy else None,
        clamped=clamped,
    )
    return model, diagnostics


def train(
    model: Model, events: EventsFile, config: TrainConfig, summary: EmpiricalSummary | None = None
) -> tuple[Model, list[Diagnostics]]:
    """Run up to ``config.iterations`` scaling iterations against the model's targets.

    With ``config.monotonic`` the run stops at the first iteration whose codelength exceeds the previous
    one; that update is reverted and its diagnostics are not part of the returned history.
    """
    summary = summary or summarize_empirical(events)
    inactive = sorted(set(model.alphas) - active_features(model, summary, events))
    if inactive:
        logger.warning("Features {} are never active in the events file; their alphas stay fixed", inactive)

    previous = codelength(model, events, summary)
    history: list[Diagnostics] = []
    for iteration in range(1, config.iterations + 1):
        saved = dict(model.alphas)
        model, diagnostics = iis_step(model, summary, events, model.targets, config, iteration=iteration)
        if config.monotonic and diagnostics.codelength > previous:
            model.alphas = saved
            model.refresh()
            logger.warning(
                "Codelength increased from {} to {} at iteration {}; reverted and stopped",
                previous,
                diagnostics.codelength,
                iteration,
            )
            break
        logger.debug("Iteration {}: {}", iteration, diagnostics.row())
        history.append(diagnostics)
        previous = diagnostics.codelength
    return model, history
