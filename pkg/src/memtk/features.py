"""Markov and trigger features of a token corpus, emitted as events and parameters files.

A history is reduced to its context: the last ``order`` symbols, padded with ``BOUNDARY`` at the start of
the corpus, plus one bit per trigger word telling whether the word has occurred so far. Markov features
``g_<w,z>`` fire when the context ends with the suffix ``w`` and ``z`` is predicted; trigger features
``d_<w,z>`` fire when ``w`` is in the history and ``z`` is predicted.
"""

from collections import Counter, defaultdict
from collections.abc import Iterable
from dataclasses import dataclass, field
from os import PathLike
from typing import TypeAlias

from loguru import logger

from .enums import FeatureKind, FeatureMode, Family
from .estimator import summarize_empirical
from .exceptions import CorpusError
from .formats import ConditionalEvent, EventsFile, MarginalEvent, Parameter, ParametersFile, Source
from .utils import as_text_stream, parse_uint

BOUNDARY = -1
CORPUS_HEADER = "alphabet"

ContextKey: TypeAlias = tuple[tuple[int, ...], tuple[bool, ...]]


@dataclass(frozen=True, slots=True)
class Corpus:
    """Sequence of symbol ids over an alphabet of ``alphabet_size`` symbols."""

    alphabet_size: int
    tokens: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.alphabet_size < 1:
            raise CorpusError(f"alphabet size must be positive, got {self.alphabet_size}")
        if not self.tokens:
            raise CorpusError("a corpus needs at least one token")
        outside = [token for token in self.tokens if not 0 <= token < self.alphabet_size]
        if outside:
            raise CorpusError(f"token {outside[0]} outside alphabet of size {self.alphabet_size}")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_text(cls, source: Source) -> "Corpus":
        """Parse ``alphabet <k>`` followed by whitespace separated symbol ids."""
        words = (word for line in as_text_stream(source) for word in line.split())
        if next(words, None) != CORPUS_HEADER:
            raise CorpusError(f"a corpus starts with the header '{CORPUS_HEADER} <k>'")
        size = parse_uint(next(words, ""))
        if size is None:
            raise CorpusError("the alphabet size must be an unsigned integer")
        tokens = []
        for position, word in enumerate(words, start=1):
            token = parse_uint(word)
            if token is None:
                raise CorpusError(f"token #{position} {word!r} is not a symbol id")
            tokens.append(token)
        return cls(size, tuple(tokens))

    @classmethod
    def from_file(cls, fpath: str | PathLike) -> "Corpus":  # noqa: D102
        with open(fpath, encoding="ascii", errors="replace") as f:
            corpus = cls.from_text(f)
        logger.info("Read {} tokens over {} symbols from {}", len(corpus), corpus.alphabet_size, fpath)
        return corpus


@dataclass(frozen=True, slots=True)
class FeatureSpec:
    """Which features to extract from a corpus.

    Attributes
    ----------
    order
        Markov order ``n``, the longest suffix a feature conditions on.
    mode
        ``basic`` keeps order ``n`` only, ``overlapping`` orders ``0..n``, ``complemented`` orders ``0..n``
        where a lower order feature fires only when no higher one does, ``heterogeneous`` both families.
    c_min
        A feature is kept when its corpus count exceeds ``c_min``.
    triggers
        Trigger words.
    """

    order: int = 1
    mode: FeatureMode = FeatureMode.Overlapping
    c_min: int = 0
    triggers: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.order < 0:
            raise ValueError(f"order must be >= 0, got {self.order}")
        if self.c_min < 0:
            raise ValueError(f"c_min must be >= 0, got {self.c_min}")
        if len(set(self.triggers)) != len(self.triggers):
            raise ValueError(f"trigger words must be distinct, got {list(self.triggers)}")

    @property
    def families(self) -> tuple[Family, ...]:
        """Return the Markov feature families the mode asks for."""
        match self.mode:
            case FeatureMode.Basic | FeatureMode.Overlapping:
                return (Family.Overlapping,)
            case FeatureMode.Complemented:
                return (Family.Complemented,)
            case FeatureMode.Heterogeneous:
                return Family.Overlapping, Family.Complemented

    @property
    def orders(self) -> range:  # noqa: D102
        return range(self.order, self.order + 1) if self.mode is FeatureMode.Basic else range(self.order + 1)


@dataclass(frozen=True, slots=True)
class Feature:
    """One Markov or trigger feature with its corpus count.

    For a complemented copy the count is the number of corpus positions where it is the feature of its
    family that fires.
    """

    index: int
    kind: FeatureKind
    family: Family
    symbol: int
    count: int
    suffix: tuple[int, ...] = ()
    word: int | None = None

    @property
    def order(self) -> int:  # noqa: D102
        return len(self.suffix)

    @property
    def is_marginal(self) -> bool:
        """Whether the feature depends on the predicted symbol only."""
        return self.kind is FeatureKind.Markov and self.family is Family.Overlapping and not self.suffix


@dataclass(slots=True)
class FeatureSet:
    """Features with ids ``1..len``, plus the lookup tables used to activate them."""

    alphabet_size: int
    triggers: tuple[int, ...]
    features: list[Feature] = field(default_factory=list)
    _by_suffix: dict[tuple[Family, tuple[int, ...]], list[Feature]] = field(
        default_factory=lambda: defaultdict(list), init=False, repr=False
    )
    _by_word: dict[int, list[Feature]] = field(
        default_factory=lambda: defaultdict(list), init=False, repr=False
    )

    def __post_init__(self) -> None:
        for feature in self.features:
            if feature.kind is FeatureKind.Trigger:
                self._by_word[feature.word].append(feature)  # type: ignore[index]
            else:
                self._by_suffix[feature.family, feature.suffix].append(feature)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def marginal(self) -> list[Feature]:  # noqa: D102
        return [f for f in self.features if f.is_marginal]

    @property
    def conditional(self) -> list[Feature]:  # noqa: D102
        return [f for f in self.features if not f.is_marginal]

    def conditional_activations(self, key: ContextKey) -> dict[int, list[int]]:
        """Return the conditional feature ids active on every symbol that has any, for one context."""
        suffix, bits = key
        suffixes = [suffix[len(suffix) - i :] for i in range(len(suffix) + 1)]
        active: dict[int, list[int]] = defaultdict(list)
        for tail in suffixes:
            for feature in self._by_suffix.get((Family.Overlapping, tail), ()):
                if not feature.is_marginal:
                    active[feature.symbol].append(feature.index)
        for symbol, feature in _complemented_winners(self._by_suffix, suffixes).items():
            active[symbol].append(feature.index)
        for word, seen in zip(self.triggers, bits, strict=True):
            if seen:
                for feature in self._by_word.get(word, ()):
                    active[feature.symbol].append(feature.index)
        return {symbol: sorted(ids) for symbol, ids in active.items()}


def _complemented_winners(
    by_suffix: dict[tuple[Family, tuple[int, ...]], list[Feature]], suffixes: list[tuple[int, ...]]
) -> dict[int, Feature]:
    # Suffixes go from order 0 upwards, so the highest order seen for a symbol wins.
    winners: dict[int, Feature] = {}
    for tail in suffixes:
        for feature in by_suffix.get((Family.Complemented, tail), ()):
            winners[feature.symbol] = feature
    return winners


@dataclass(slots=True)
class ContextTable:
    """Context ids assigned by first occurrence, with the context of every corpus position."""

    ids: dict[ContextKey, int] = field(default_factory=dict)
    keys: list[ContextKey] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    positions: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.keys)

    def intern(self, key: ContextKey) -> int:
        """Return the id of a context, registering it on first sight, and count one occurrence."""
        context = self.ids.get(key)
        if context is None:
            context = self.ids[key] = len(self.keys)
            self.keys.append(key)
            self.counts.append(0)
        self.counts[context] += 1
        self.positions.append(context)
        return context


def _histories(corpus: Corpus, spec: FeatureSpec) -> Iterable[ContextKey]:
    unknown = [word for word in spec.triggers if not 0 <= word < corpus.alphabet_size]
    if unknown:
        raise CorpusError(f"trigger word {unknown[0]} outside alphabet of size {corpus.alphabet_size}")
    window = [BOUNDARY] * spec.order
    seen: set[int] = set()
    for token in corpus.tokens:
        yield tuple(window), tuple(word in seen for word in spec.triggers)
        if spec.order:
            window = [*window[1:], token]
        seen.add(token)


def intern_contexts(corpus: Corpus, spec: FeatureSpec) -> ContextTable:
    """Map the history of every corpus position to its context id."""
    table = ContextTable()
    for key in _histories(corpus, spec):
        table.intern(key)
    logger.debug("Interned {} contexts from {} positions", len(table), len(corpus))
    return table


def extract_features(corpus: Corpus, spec: FeatureSpec) -> FeatureSet:
    """Count every candidate feature on the corpus and keep those with count above ``c_min``.

    Ids are consecutive from 1: overlapping copies, then complemented copies, then triggers, each group
    sorted by order, suffix and predicted symbol (triggers by word and symbol). Complemented copies that
    never fire on the corpus because a higher order copy always does are dropped.
    """
    suffix_counts: Counter[tuple[tuple[int, ...], int]] = Counter()
    trigger_counts: Counter[tuple[int, int]] = Counter()
    histories = list(_histories(corpus, spec))
    for (suffix, bits), token in zip(histories, corpus.tokens, strict=True):
        for i in spec.orders:
            suffix_counts[suffix[len(suffix) - i :], token] += 1
        for word, seen in zip(spec.triggers, bits, strict=True):
            if seen:
                trigger_counts[word, token] += 1

    kept = sorted(
        (key for key, count in suffix_counts.items() if count > spec.c_min), key=lambda k: (len(k[0]), k)
    )
    candidates: list[tuple[Family, tuple[int, ...], int, int]] = []
    for family in spec.families:
        if family is Family.Overlapping:
            candidates.extend((family, *key, suffix_counts[key]) for key in kept)
        else:
            candidates.extend(_complemented_candidates(kept, histories, corpus.tokens))

    features: list[Feature] = []
    for family, suffix, symbol, count in candidates:
        features.append(Feature(len(features) + 1, FeatureKind.Markov, family, symbol, count, suffix=suffix))
    for (word, symbol), count in sorted(trigger_counts.items()):
        if count > spec.c_min:
            features.append(
                Feature(len(features) + 1, FeatureKind.Trigger, Family.Trigger, symbol, count, word=word)
            )
    fs = FeatureSet(corpus.alphabet_size, spec.triggers, features)
    logger.info(
        "Extracted {} features ({} marginal) with order {} in {} mode",
        len(fs),
        len(fs.marginal),
        spec.order,
        spec.mode,
    )
    return fs


def _complemented_candidates(
    kept: list[tuple[tuple[int, ...], int]], histories: list[ContextKey], tokens: tuple[int, ...]
) -> list[tuple[Family, tuple[int, ...], int, int]]:
    by_suffix: dict[tuple[Family, tuple[int, ...]], list[Feature]] = defaultdict(list)
    for suffix, symbol in kept:
        by_suffix[Family.Complemented, suffix].append(
            Feature(0, FeatureKind.Markov, Family.Complemented, symbol, 0, suffix=suffix)
        )
    fired: Counter[tuple[tuple[int, ...], int]] = Counter()
    for (suffix, _), token in zip(histories, tokens, strict=True):
        suffixes = [suffix[len(suffix) - i :] for i in range(len(suffix) + 1)]
        winner = _complemented_winners(by_suffix, suffixes).get(token)
        if winner is not None:
            fired[winner.suffix, token] += 1
    return [
        (Family.Complemented, suffix, symbol, fired[suffix, symbol])
        for suffix, symbol in kept
        if fired[suffix, symbol]
    ]


def emit_events(corpus: Corpus, spec: FeatureSpec, table: ContextTable, fs: FeatureSet) -> EventsFile:
    """Return the events file of a corpus for a feature set.

    Every context of the table gets one record per symbol that is observed in it or activates a
    conditional feature in it, so each corpus position is counted in exactly one record.
    """
    marginal_ids: dict[int, list[int]] = defaultdict(list)
    for feature in fs.marginal:
        marginal_ids[feature.symbol].append(feature.index)
    marginal = [
        MarginalEvent(symbol, len(ids), tuple(sorted(ids))) for symbol, ids in sorted(marginal_ids.items())
    ]

    pair_counts = Counter(zip(table.positions, corpus.tokens, strict=True))
    observed: dict[int, set[int]] = defaultdict(set)
    for context, symbol in pair_counts:
        observed[context].add(symbol)

    conditional = []
    for context, key in enumerate(table.keys):
        active = fs.conditional_activations(key)
        for symbol in sorted(observed[context] | set(active)):
            ids = tuple(active.get(symbol, ()))
            conditional.append(ConditionalEvent(context, symbol, pair_counts[context, symbol], len(ids), ids))
    events = EventsFile(marginal, conditional)
    logger.info(
        "Emitted {} marginal and {} conditional events over {} contexts",
        len(marginal),
        len(conditional),
        len(table),
    )
    return events


def emit_parameters(fs: FeatureSet, events: EventsFile) -> ParametersFile:
    """Return a parameters file with every alpha at 1 and the empirical expectations as targets."""
    targets = summarize_empirical(events).targets_empirical
    return ParametersFile(
        fs.alphabet_size,
        [Parameter(f.index, 1.0, targets.get(f.index, 0.0)) for f in fs.marginal],
        [Parameter(f.index, 1.0, targets.get(f.index, 0.0)) for f in fs.conditional],
    )


def build(corpus: Corpus, spec: FeatureSpec) -> tuple[FeatureSet, ContextTable, ParametersFile, EventsFile]:
    """Extract features, intern contexts and emit the matching parameters and events files."""
    table = intern_contexts(corpus, spec)
    fs = extract_features(corpus, spec)
    events = emit_events(corpus, spec, table, fs)
    return fs, table, emit_parameters(fs, events), events
