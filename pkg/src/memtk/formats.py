"""Parameters, events and expressions files.

The three ASCII formats are whitespace-delimited token streams. Parsing is single pass with one token of
lookahead; documents are dataclasses that validate themselves and write back a canonical form (one
record per line, single spaces, shortest round-trip decimals) which parses to an equal document.
"""

import math
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field
from os import PathLike
from typing import IO, Any, TypeAlias

from loguru import logger

from .enums import KEYWORDS, Block, keyword2block
from .exceptions import (
    ArityMismatchError,
    CountMismatchError,
    DuplicateEventError,
    DuplicateIndexError,
    FormatError,
    IllegalNestingError,
    InvalidTargetError,
    InvariantViolationError,
    MalformedHeaderError,
    NoConditionalEventsError,
    NonNumericTokenError,
    NonPositiveAlphaError,
    NonUnitFrequencyError,
    ZeroIndexError,
)
from .utils import as_text_stream, atomic_write, format_real, parse_real, parse_uint

Source: TypeAlias = "str | bytes | IO[str] | IO[bytes]"


@dataclass(frozen=True, slots=True)
class Parameter:
    """Weight and target expectation of one feature.

    Attributes
    ----------
    index
        Feature id, strictly positive.
    alpha
        Multiplicative weight ``exp(lambda)``.
    target
        Expectation the trained model has to reproduce under ``f(x) m(y|x)``.
    """

    index: int
    alpha: float
    target: float

    @property
    def lam(self) -> float:
        """Return the log weight ``lambda = ln alpha``."""
        return math.log(self.alpha)


@dataclass(frozen=True, slots=True)
class MarginalEvent:
    """Marginal features active on a symbol, independent of the context."""

    symbol: int
    activation: int
    features: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class ConditionalEvent:
    """Observed frequency and conditional features of one ``(context, symbol)`` pair.

    An n-ary feature of value ``k`` appears ``k`` times in ``features``, so the list length always equals
    ``activation``.
    """

    context: int
    symbol: int
    count: int
    activation: int
    features: tuple[int, ...] = ()

    @property
    def pair(self) -> tuple[int, int]:  # noqa: D102
        return self.context, self.symbol


@dataclass(frozen=True, slots=True)
class Product:
    """Product of event probabilities and sums. An empty product is one."""

    terms: tuple["Expression", ...] = ()


@dataclass(frozen=True, slots=True)
class Sum:
    """Sum of event probabilities and products. An empty sum is zero."""

    terms: tuple["Expression", ...] = ()


Expression: TypeAlias = ConditionalEvent | Product | Sum


def _block_of(node: Product | Sum) -> Block:
    return Block.Product if isinstance(node, Product) else Block.Sum


@dataclass(slots=True)
class ParametersFile:
    """Alphabet size plus the marginal and conditional parameter blocks."""

    alphabet_size: int
    marginal: list[Parameter] = field(default_factory=list)
    conditional: list[Parameter] = field(default_factory=list)

    @property
    def number_parameters(self) -> int:  # noqa: D102
        return len(self.marginal) + len(self.conditional)

    def parameters(self) -> Iterator[Parameter]:
        """Iterate over marginal then conditional parameters."""
        yield from self.marginal
        yield from self.conditional

    def validate(self) -> None:
        """Raise the first violated invariant of the document."""
        if self.alphabet_size < 1:
            raise MalformedHeaderError(f"alphabet size must be positive, got {self.alphabet_size}")
        seen: set[int] = set()
        for block, params in (("marginal", self.marginal), ("conditional", self.conditional)):
            for position, param in enumerate(params, start=1):
                where = f"{block} parameter #{position}"
                if param.index == 0:
                    raise ZeroIndexError(f"{where} uses the reserved index 0")
                if param.index in seen:
                    raise DuplicateIndexError(f"{where} reuses index {param.index}")
                seen.add(param.index)
                if not (param.alpha > 0 and math.isfinite(param.alpha)):
                    raise NonPositiveAlphaError(f"{where} has alpha {param.alpha}, must be positive")
                if not (param.target >= 0 and math.isfinite(param.target)):
                    raise InvalidTargetError(f"{where} has target {param.target}, must be finite and >= 0")

    @classmethod
    def from_text(cls, source: Source, *, strict: bool = True) -> "ParametersFile":  # noqa: D102
        return parse_parameters(source, strict=strict)

    @classmethod
    def from_file(cls, fpath: str | PathLike, *, strict: bool = True) -> "ParametersFile":  # noqa: D102
        with open(fpath, encoding="ascii", errors="replace") as f:
            document = parse_parameters(f, strict=strict)
        logger.info("Parsed {} parameters from {}", document.number_parameters, fpath)
        return document

    def to_text(self) -> str:  # noqa: D102
        return serialize_document(self)

    def to_file(self, fpath: str | PathLike) -> None:  # noqa: D102
        atomic_write(fpath, self.to_text())


@dataclass(slots=True)
class EventsFile:
    """Marginal and conditional events, the full behavior of the features on observed data."""

    marginal: list[MarginalEvent] = field(default_factory=list)
    conditional: list[ConditionalEvent] = field(default_factory=list)

    @property
    def number_events(self) -> int:  # noqa: D102
        return len(self.marginal) + len(self.conditional)

    def validate(self) -> None:
        """Raise the first violated invariant of the document."""
        symbols: set[int] = set()
        for position, event in enumerate(self.marginal, start=1):
            where = f"marginal event #{position} (y={event.symbol})"
            _validate_indices(where, event.activation, event.features)
            if event.symbol in symbols:
                raise DuplicateEventError(f"{where} repeats symbol {event.symbol}")
            symbols.add(event.symbol)
        pairs: set[tuple[int, int]] = set()
        for position, cevent in enumerate(self.conditional, start=1):
            where = f"conditional event #{position} (x={cevent.context}, y={cevent.symbol})"
            _validate_indices(where, cevent.activation, cevent.features)
            if cevent.pair in pairs:
                raise DuplicateEventError(f"{where} repeats an earlier event")
            pairs.add(cevent.pair)
        if not self.conditional:
            raise NoConditionalEventsError("an events file must include at least one conditional event")

    @classmethod
    def from_text(cls, source: Source, *, strict: bool = True) -> "EventsFile":  # noqa: D102
        return parse_events(source, strict=strict)

    @classmethod
    def from_file(cls, fpath: str | PathLike, *, strict: bool = True) -> "EventsFile":  # noqa: D102
        with open(fpath, encoding="ascii", errors="replace") as f:
            document = parse_events(f, strict=strict)
        logger.info("Parsed {} events from {}", document.number_events, fpath)
        return document

    def to_text(self) -> str:  # noqa: D102
        return serialize_document(self)

    def to_file(self, fpath: str | PathLike) -> None:  # noqa: D102
        atomic_write(fpath, self.to_text())


@dataclass(slots=True)
class ExpressionsFile:
    """Sequence of probability expressions, each evaluated to one value."""

    expressions: list[Expression] = field(default_factory=list)

    def events(self) -> Iterator[ConditionalEvent]:
        """Iterate over every primitive event of every expression, in file order."""
        for expression in self.expressions:
            yield from iter_events(expression)

    def validate(self) -> None:
        """Raise the first violated invariant of the document."""
        if not self.expressions:
            raise MalformedHeaderError("an expressions file must hold at least one expression")
        for position, expression in enumerate(self.expressions, start=1):
            _validate_expression(expression, f"expression #{position}")

    @classmethod
    def from_text(cls, source: Source, *, strict: bool = True) -> "ExpressionsFile":  # noqa: D102
        return parse_expressions(source, strict=strict)

    @classmethod
    def from_file(cls, fpath: str | PathLike, *, strict: bool = True) -> "ExpressionsFile":  # noqa: D102
        with open(fpath, encoding="ascii", errors="replace") as f:
            document = parse_expressions(f, strict=strict)
        logger.info("Parsed {} expressions from {}", len(document.expressions), fpath)
        return document

    def to_text(self) -> str:  # noqa: D102
        return serialize_document(self)

    def to_file(self, fpath: str | PathLike) -> None:  # noqa: D102
        atomic_write(fpath, self.to_text())


Document: TypeAlias = ParametersFile | EventsFile | ExpressionsFile


def iter_events(expression: Expression) -> Iterator[ConditionalEvent]:
    """Iterate over the primitive events of an expression tree, depth first."""
    stack: list[Expression] = [expression]
    while stack:
        node = stack.pop()
        if isinstance(node, ConditionalEvent):
            yield node
        else:
            stack.extend(reversed(node.terms))


def _validate_indices(where: str, activation: int, features: tuple[int, ...]) -> None:
    if len(features) != activation:
        raise ArityMismatchError(f"{where} declares activation {activation}, lists {len(features)} indices")
    if 0 in features:
        raise ZeroIndexError(f"{where} lists the reserved index 0")


def _validate_expression(expression: Expression, where: str) -> None:
    stack: list[tuple[Expression, Block | None]] = [(expression, None)]
    while stack:
        node, parent = stack.pop()
        if isinstance(node, ConditionalEvent):
            event = f"{where} event (x={node.context}, y={node.symbol})"
            _validate_indices(event, node.activation, node.features)
            if node.count != 1:
                raise NonUnitFrequencyError(
                    f"{where} event (x={node.context}, y={node.symbol}) has frequency {node.count}, must be 1"
                )
            continue
        block = _block_of(node)
        if block is parent:
            raise IllegalNestingError(f"{where} nests {block.begin} directly inside {block.begin}")
        stack.extend((term, block) for term in node.terms)


class TokenStream:
    """Whitespace tokenizer over a text stream with one token of lookahead."""

    def __init__(self, source: Source) -> None:
        self._tokens = self._iter_tokens(as_text_stream(source))
        self._peeked: tuple[int, str] | None = None
        self._exhausted = False
        self.line = 0

    @staticmethod
    def _iter_tokens(stream: IO[str]) -> Iterator[tuple[int, str]]:
        for number, line in enumerate(stream, start=1):
            for token in line.split():
                yield number, token

    def peek(self) -> str | None:
        """Return the next token without consuming it, ``None`` at the end of input."""
        if self._peeked is None and not self._exhausted:
            self._peeked = next(self._tokens, None)
            self._exhausted = self._peeked is None
        return None if self._peeked is None else self._peeked[1]

    def next(self) -> str | None:
        """Consume and return the next token, ``None`` at the end of input."""
        token = self.peek()
        if self._peeked is not None:
            self.line = self._peeked[0]
            self._peeked = None
        return token

    def expect_keyword(self, keyword: str) -> None:  # noqa: D102
        token = self.next()
        if token != keyword:
            found = "end of input" if token is None else repr(token)
            raise MalformedHeaderError(f"expected {keyword!r}, found {found}", line=self.line)

    def expect_end(self) -> None:  # noqa: D102
        token = self.next()
        if token is not None:
            raise MalformedHeaderError(f"unexpected token {token!r} after the end keyword", line=self.line)

    def read_uint(self, what: str, truncated: type[FormatError] = MalformedHeaderError) -> int:
        """Read an unsigned integer field.

        A keyword or the end of input where the field should be raises ``truncated``; any other
        non-integer token raises ``NonNumericTokenError``.
        """
        token = self._field(what, truncated)
        value = parse_uint(token)
        if value is None:
            raise NonNumericTokenError(f"{what}: {token!r} is not an unsigned integer", line=self.line)
        return value

    def read_real(self, what: str, truncated: type[FormatError] = MalformedHeaderError) -> float:
        """Read a decimal floating point field."""
        token = self._field(what, truncated)
        value = parse_real(token)
        if value is None:
            raise NonNumericTokenError(f"{what}: {token!r} is not a decimal number", line=self.line)
        return value

    def _field(self, what: str, truncated: type[FormatError]) -> str:
        token = self.peek()
        if token is None or token in KEYWORDS:
            found = "end of input" if token is None else repr(token)
            raise truncated(f"{what} expected, found {found}", line=self.line)
        self.next()
        return token


def _read_block(tokens: TokenStream, block: Block, read_record: Callable[[TokenStream], Any]) -> list[Any]:
    tokens.expect_keyword(block.begin)
    declared = tokens.read_uint(f"{block.begin} count")
    records = []
    while True:
        token = tokens.peek()
        if token == block.end:
            break
        if token is None:
            raise MalformedHeaderError(f"missing {block.end!r}", line=tokens.line)
        if token in KEYWORDS:
            raise MalformedHeaderError(f"unexpected {token!r} inside {block.begin}", line=tokens.line)
        if len(records) == declared:
            raise CountMismatchError(
                f"{block.begin} declares {declared} records but more follow", line=tokens.line
            )
        records.append(read_record(tokens))
    if len(records) != declared:
        raise CountMismatchError(
            f"{block.begin} declares {declared} records, found {len(records)}", line=tokens.line
        )
    tokens.expect_keyword(block.end)
    return records


def _read_parameter(tokens: TokenStream) -> Parameter:
    index = tokens.read_uint("parameter index", ArityMismatchError)
    alpha = tokens.read_real("parameter alpha", ArityMismatchError)
    target = tokens.read_real("parameter target", ArityMismatchError)
    return Parameter(index, alpha, target)


def _read_indices(tokens: TokenStream, activation: int) -> tuple[int, ...]:
    indices = []
    for listed in range(activation):
        if tokens.peek() is None or tokens.peek() in KEYWORDS:
            raise ArityMismatchError(
                f"record declares activation {activation} but lists {listed} indices", line=tokens.line
            )
        indices.append(tokens.read_uint("feature index", ArityMismatchError))
    return tuple(indices)


def _read_marginal_event(tokens: TokenStream) -> MarginalEvent:
    symbol = tokens.read_uint("marginal symbol", ArityMismatchError)
    activation = tokens.read_uint("marginal activation", ArityMismatchError)
    return MarginalEvent(symbol, activation, _read_indices(tokens, activation))


def _read_conditional_event(tokens: TokenStream) -> ConditionalEvent:
    context = tokens.read_uint("event context", ArityMismatchError)
    symbol = tokens.read_uint("event symbol", ArityMismatchError)
    count = tokens.read_uint("event count", ArityMismatchError)
    activation = tokens.read_uint("event activation", ArityMismatchError)
    return ConditionalEvent(context, symbol, count, activation, _read_indices(tokens, activation))


def parse_parameters(source: Source, *, strict: bool = True) -> ParametersFile:
    """Parse a parameters file.

    Parameters
    ----------
    source
        Text, bytes or an open stream.
    strict
        Also enforce the semantic restrictions (zero, duplicate and overlapping indices, alpha and
        target ranges). Lenient parsing enforces the grammar only and leaves the rest to the checker.

    Raises
    ------
    FormatError
        A concrete subclass naming the first violation found.
    """
    tokens = TokenStream(source)
    tokens.expect_keyword(Block.Parameters.begin)
    alphabet_size = tokens.read_uint("alphabet size")
    if alphabet_size < 1:
        raise MalformedHeaderError("alphabet size must be positive", line=tokens.line)
    declared = tokens.read_uint("number of parameters")
    marginal = _read_block(tokens, Block.Marginal, _read_parameter)
    conditional = _read_block(tokens, Block.Conditional, _read_parameter)
    tokens.expect_keyword(Block.Parameters.end)
    tokens.expect_end()
    document = ParametersFile(alphabet_size, marginal, conditional)
    if declared != document.number_parameters:
        raise CountMismatchError(
            f"header declares {declared} parameters, found {document.number_parameters}", line=1
        )
    if strict:
        document.validate()
    logger.trace("Parsed parameters file with {} parameters", document.number_parameters)
    return document


def parse_events(source: Source, *, strict: bool = True) -> EventsFile:
    """Parse an events file.

    The number of events in the header is the number of marginal plus conditional events. Symbol ranges
    are not checked here since the alphabet size lives in the parameters file.
    """
    tokens = TokenStream(source)
    tokens.expect_keyword(Block.Events.begin)
    declared = tokens.read_uint("number of events")
    marginal = _read_block(tokens, Block.Marginal, _read_marginal_event)
    conditional = _read_block(tokens, Block.Conditional, _read_conditional_event)
    tokens.expect_keyword(Block.Events.end)
    tokens.expect_end()
    document = EventsFile(marginal, conditional)
    if declared != document.number_events:
        raise CountMismatchError(f"header declares {declared} events, found {document.number_events}", line=1)
    if strict:
        document.validate()
    logger.trace("Parsed events file with {} events", document.number_events)
    return document


@dataclass(slots=True)
class _Frame:
    block: Block
    declared: int
    terms: list[Expression]
    line: int


def _read_expression(tokens: TokenStream) -> Expression:
    if keyword2block(tokens.peek() or "") is None:
        return _read_conditional_event(tokens)
    stack: list[_Frame] = []
    while True:
        token = tokens.peek()
        if token is None:
            raise MalformedHeaderError("unterminated expression", line=tokens.line)
        block = keyword2block(token)
        if block in (Block.Product, Block.Sum) and token == block.begin:  # type: ignore[union-attr]
            if stack and stack[-1].block is block:
                raise IllegalNestingError(f"{token} directly inside {token}", line=tokens.line)
            if stack and len(stack[-1].terms) == stack[-1].declared:
                raise CountMismatchError(
                    f"{stack[-1].block.begin} declares {stack[-1].declared} terms but more follow",
                    line=tokens.line,
                )
            tokens.next()
            line = tokens.line
            declared = tokens.read_uint(f"{token} term count")
            stack.append(_Frame(block, declared, [], line))  # type: ignore[arg-type]
        elif stack and token == stack[-1].block.end:
            tokens.next()
            frame = stack.pop()
            if len(frame.terms) != frame.declared:
                raise CountMismatchError(
                    f"{frame.block.begin} declares {frame.declared} terms, found {len(frame.terms)}",
                    line=frame.line,
                )
            node: Expression = (Product if frame.block is Block.Product else Sum)(tuple(frame.terms))
            if not stack:
                return node
            stack[-1].terms.append(node)
        elif block is not None or not stack:
            raise MalformedHeaderError(f"unexpected {token!r} in expression", line=tokens.line)
        else:
            if len(stack[-1].terms) == stack[-1].declared:
                raise CountMismatchError(
                    f"{stack[-1].block.begin} declares {stack[-1].declared} terms but more follow",
                    line=tokens.line,
                )
            stack[-1].terms.append(_read_conditional_event(tokens))


def parse_expressions(source: Source, *, strict: bool = True) -> ExpressionsFile:
    """Parse an expressions file.

    Products hold events and sums, sums hold events and products; the same event may appear any number
    of times. Strict parsing also requires every embedded event to have frequency one.
    """
    tokens = TokenStream(source)
    tokens.expect_keyword(Block.Expressions.begin)
    declared = tokens.read_uint("number of expressions")
    expressions: list[Expression] = []
    while tokens.peek() != Block.Expressions.end:
        if tokens.peek() is None:
            raise MalformedHeaderError(f"missing {Block.Expressions.end!r}", line=tokens.line)
        if len(expressions) == declared:
            raise CountMismatchError(f"header declares {declared} expressions, more follow", line=tokens.line)
        expressions.append(_read_expression(tokens))
    if len(expressions) != declared:
        raise CountMismatchError(f"header declares {declared} expressions, found {len(expressions)}", line=1)
    tokens.expect_keyword(Block.Expressions.end)
    tokens.expect_end()
    document = ExpressionsFile(expressions)
    if strict:
        document.validate()
    return document


def _record(*fields: object) -> str:
    return " ".join(format_real(f) if isinstance(f, float) else str(f) for f in fields)


def _expression_lines(expression: Expression) -> Iterator[str]:
    stack: list[Expression | str] = [expression]
    while stack:
        node = stack.pop()
        if isinstance(node, str):
            yield node
        elif isinstance(node, ConditionalEvent):
            yield _record(node.context, node.symbol, node.count, node.activation, *node.features)
        else:
            block = _block_of(node)
            yield _record(block.begin, len(node.terms))
            stack.append(block.end)
            stack.extend(reversed(node.terms))


def _document_lines(doc: Document) -> Iterable[str]:
    if isinstance(doc, ParametersFile):
        yield _record(Block.Parameters.begin, doc.alphabet_size, doc.number_parameters)
        for block, params in ((Block.Marginal, doc.marginal), (Block.Conditional, doc.conditional)):
            yield _record(block.begin, len(params))
            yield from (_record(p.index, float(p.alpha), float(p.target)) for p in params)
            yield block.end
        yield Block.Parameters.end
    elif isinstance(doc, EventsFile):
        yield _record(Block.Events.begin, doc.number_events)
        yield _record(Block.Marginal.begin, len(doc.marginal))
        yield from (_record(e.symbol, e.activation, *e.features) for e in doc.marginal)
        yield Block.Marginal.end
        yield _record(Block.Conditional.begin, len(doc.conditional))
        yield from (_record(c.context, c.symbol, c.count, c.activation, *c.features) for c in doc.conditional)
        yield Block.Conditional.end
        yield Block.Events.end
    else:
        yield _record(Block.Expressions.begin, len(doc.expressions))
        for expression in doc.expressions:
            yield from _expression_lines(expression)
        yield Block.Expressions.end


def serialize_document(doc: Document) -> str:
    """Return the canonical text of a document.

    Raises
    ------
    InvariantViolationError
        The document fails its own invariants; the original error is chained.
    """
    try:
        doc.validate()
    except FormatError as err:
        raise InvariantViolationError(f"cannot serialize an invalid document: {err}") from err
    return "\n".join(_document_lines(doc)) + "\n"
