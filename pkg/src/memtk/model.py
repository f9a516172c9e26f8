"""Conditional exponential model ``m(y|x) = r(y|x) / Z(x)``.

``r(y|x)`` is the product of ``alpha_i`` over the features active on the pair, split into the marginal
factor ``r(y)`` (features that depend on ``y`` only) and the conditional factor. The partition function of a
context only visits the symbols with a conditional feature active in it::

    Z(x) = Z_marg + sum_{y in Y_x+} (r(y|x) - r(y)),    Z_marg = sum_{all y} r(y)

where ``Z_marg`` is cached and refreshed whenever the alphas change.
"""

import math
from collections import defaultdict
from collections.abc import Iterable

from loguru import logger

from .exceptions import ClassMismatchError, SymbolOutOfRangeError, UnknownFeatureError
from .formats import EventsFile, Parameter, ParametersFile


class Model:
    """Indexed alpha values with the marginal and conditional activation tables.

    A model is not safe to mutate while other threads read it; update ``alphas`` and call ``refresh``
    with exclusive access.
    """

    def __init__(
        self,
        alphabet_size: int,
        alphas: dict[int, float],
        marginal_index_set: Iterable[int],
        conditional_index_set: Iterable[int],
        marginal_activations: dict[int, tuple[int, ...]] | None = None,
        conditional_activations: dict[tuple[int, int], tuple[int, ...]] | None = None,
        targets: dict[int, float] | None = None,
    ) -> None:
        self.alphabet_size = alphabet_size
        self.alphas = alphas
        self.marginal_order = list(marginal_index_set)
        self.conditional_order = list(conditional_index_set)
        self.marginal_index_set = frozenset(self.marginal_order)
        self.conditional_index_set = frozenset(self.conditional_order)
        self.marginal_activations = marginal_activations or {}
        self.conditional_activations = conditional_activations or {}
        self.targets = targets or {}
        self.marginal_weight: dict[int, float] = {}
        self.marginal_mass = float(alphabet_size)

        self._context_symbols: dict[int, list[int]] = defaultdict(list)
        for context, symbol in self.conditional_activations:
            self._context_symbols[context].append(symbol)
        self.refresh()

    def refresh(self) -> "Model":
        """Recompute the marginal weight table and ``Z_marg`` after alphas changed."""
        self.marginal_weight = {
            symbol: self._product(features) for symbol, features in self.marginal_activations.items()
        }
        uncovered = self.alphabet_size - len(self.marginal_weight)
        self.marginal_mass = math.fsum([*self.marginal_weight.values(), float(uncovered)])
        return self

    def _product(self, features: Iterable[int]) -> float:
        return math.prod(self.alphas[index] for index in features)

    def _check_symbol(self, symbol: int) -> None:
        if not 0 <= symbol < self.alphabet_size:
            raise SymbolOutOfRangeError(f"symbol {symbol} outside alphabet of size {self.alphabet_size}")

    def weight_marg(self, symbol: int) -> float:
        """Return ``r(y)``, the product of the marginal alphas active on ``symbol``."""
        self._check_symbol(symbol)
        return self.marginal_weight.get(symbol, 1.0)

    def weight(self, symbol: int, features: Iterable[int]) -> float:
        """Return ``r(y) * prod alpha_i`` for an explicit conditional activation list."""
        return self.weight_marg(symbol) * self._product(features)

    def weight_cond(self, context: int, symbol: int) -> float:
        """Return ``r(y|x)`` using the conditional activations recorded for the pair."""
        return self.weight(symbol, self.conditional_activations.get((context, symbol), ()))

    def symbols_in(self, context: int) -> list[int]:
        """Return ``Y_x+``, the symbols with a conditional feature active in ``context``."""
        return self._context_symbols.get(context, [])

    def partition(self, context: int) -> float:
        """Return ``Z(x)`` in time proportional to ``|Y_x+|``.

        Contexts without conditional activations are legal and get ``Z_marg``.
        """
        corrections = [
            self.weight_cond(context, symbol) - self.weight_marg(symbol)
            for symbol in self.symbols_in(context)
        ]
        return math.fsum([self.marginal_mass, *corrections])

    def partition_bruteforce(self, context: int) -> float:
        """Return ``Z(x)`` summed naively over the whole alphabet."""
        return math.fsum(self.weight_cond(context, symbol) for symbol in range(self.alphabet_size))

    def cond_prob(self, context: int, symbol: int) -> float:
        """Return ``m(y|x)``."""
        return self.weight_cond(context, symbol) / self.partition(context)

    def activation(self, context: int, symbol: int) -> int:
        """Return ``M(x,y)``, the marginal plus conditional activation of a pair."""
        return len(self.marginal_activations.get(symbol, ())) + len(
            self.conditional_activations.get((context, symbol), ())
        )

    @property
    def max_alpha(self) -> float:  # noqa: D102
        return max(self.alphas.values(), default=1.0)

    def to_parameters(self) -> ParametersFile:
        """Return a parameters file with the current alphas and the original targets and block order."""
        return ParametersFile(
            self.alphabet_size,
            [Parameter(i, self.alphas[i], self.targets.get(i, 0.0)) for i in self.marginal_order],
            [Parameter(i, self.alphas[i], self.targets.get(i, 0.0)) for i in self.conditional_order],
        )


def build_model(params: ParametersFile, events: EventsFile) -> Model:
    """Build a model from a parameters file and the events file describing its features.

    Raises
    ------
    SymbolOutOfRangeError
        An event names a symbol outside the alphabet.
    UnknownFeatureError
        An event lists an index the parameters file does not define.
    ClassMismatchError
        A marginal index is listed in a conditional event or the other way around.
    """
    params.validate()
    marginal_set = {p.index for p in params.marginal}
    conditional_set = {p.index for p in params.conditional}

    def _check(features: tuple[int, ...], own: set[int], other: set[int], where: str) -> None:
        for index in features:
            if index in own:
                continue
            if index in other:
                raise ClassMismatchError(f"{where} lists feature {index} from the other parameter block")
            raise UnknownFeatureError(f"{where} lists feature {index} missing from the parameters file")

    def _check_symbol(symbol: int, where: str) -> None:
        if symbol >= params.alphabet_size:
            raise SymbolOutOfRangeError(f"{where}: symbol {symbol} not below {params.alphabet_size}")

    marginal_activations: dict[int, tuple[int, ...]] = {}
    for event in events.marginal:
        where = f"marginal event y={event.symbol}"
        _check_symbol(event.symbol, where)
        _check(event.features, marginal_set, conditional_set, where)
        if event.features:
            marginal_activations[event.symbol] = event.features

    conditional_activations: dict[tuple[int, int], tuple[int, ...]] = {}
    for cevent in events.conditional:
        where = f"conditional event x={cevent.context} y={cevent.symbol}"
        _check_symbol(cevent.symbol, where)
        _check(cevent.features, conditional_set, marginal_set, where)
        if cevent.features:
            conditional_activations[cevent.pair] = cevent.features

    model = Model(
        params.alphabet_size,
        {p.index: p.alpha for p in params.parameters()},
        [p.index for p in params.marginal],
        [p.index for p in params.conditional],
        marginal_activations,
        conditional_activations,
        {p.index: p.target for p in params.parameters()},
    )
    logger.debug(
        "Built model: |Y|={}, {} marginal and {} conditional features, {} active pairs, Z_marg={}",
        model.alphabet_size,
        len(marginal_set),
        len(conditional_set),
        len(conditional_activations),
        model.marginal_mass,
    )
    return model
