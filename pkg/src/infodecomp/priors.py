"""Phrase prior providers: -log p(phrase) and -log p(phrase | context).

Three sources: a JSON-backed table, mixture-model subset weights (the toy
convention: a phrase names a component subset and its prior is that subset's
mass), and a masked-language-model bridge. Multi-token phrases under the
bridge are scored token by token, each token masked in isolation with the
rest of the template intact, and the per-token log-probabilities summed;
this is a documented convention, not the only possible one.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .conditions import DenoiserCondition, combine, prompt
from .errors import DomainError, UnknownPhraseError, ZeroProbabilityError

log = logging.getLogger(__name__)

_CLAMP_FLOOR = 1e-12


@dataclass(frozen=True)
class PhraseLogProb:
    phrase: str
    context: str | None
    log_prob: float  # nats, <= 0

    def __post_init__(self):
        if not math.isfinite(self.log_prob):
            raise DomainError(f"log_prob must be finite, got {self.log_prob!r}")
        if self.log_prob > 0:
            raise DomainError(f"log_prob must be <= 0, got {self.log_prob!r}")

    @property
    def neg_log_prob(self) -> float:
        return -self.log_prob


class PriorProvider(Protocol):
    def lookup(self, phrase: str, context: str | None = None) -> PhraseLogProb: ...


def lookup_prior(provider: PriorProvider, phrase: str, context: str | None = None) -> PhraseLogProb:
    return provider.lookup(phrase, context)


class TablePriorProvider:
    """Immutable phrase -> probability table, optionally context-keyed."""

    def __init__(self, entries: dict[tuple[str, str | None], float]):
        self._entries: dict[tuple[str, str | None], float] = {}
        for (phrase, context), prob in entries.items():
            if prob == 0.0:
                raise ZeroProbabilityError(f"phrase {phrase!r} has zero probability")
            if not (0.0 < prob <= 1.0):
                raise DomainError(f"phrase {phrase!r} probability {prob!r} outside (0, 1]")
            self._entries[(phrase, context)] = float(prob)

    def lookup(self, phrase: str, context: str | None = None) -> PhraseLogProb:
        key = (phrase, context or None)
        if key not in self._entries:
            if key[1] is not None:
                raise UnknownPhraseError(f"no entry for phrase {phrase!r} with context {context!r}")
            raise UnknownPhraseError(f"no entry for phrase {phrase!r}")
        return PhraseLogProb(phrase=phrase, context=key[1], log_prob=math.log(self._entries[key]))

    @classmethod
    def from_json(cls, text: str) -> "TablePriorProvider":
        raw = json.loads(text)
        entries: dict[tuple[str, str | None], float] = {}
        for item in raw["entries"]:
            entries[(item["phrase"], item.get("context"))] = float(item["probability"])
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> "TablePriorProvider":
        return cls.from_json(Path(path).read_text())


class GmmPriorProvider:
    """Priors from mixture weights: p(phrase) is the named subset's mass."""

    def __init__(self, model):
        self._model = model

    def _condition(self, phrase: str) -> DenoiserCondition:
        return prompt(phrase)

    def lookup(self, phrase: str, context: str | None = None) -> PhraseLogProb:
        cond = self._condition(phrase)
        if context:
            ctx = self._condition(context)
            num = self._model.subset_weight(combine(cond, ctx))
            den = self._model.subset_weight(ctx)
            prob = num / den
        else:
            prob = self._model.subset_weight(cond)
        if prob <= 0.0:
            raise ZeroProbabilityError(f"phrase {phrase!r} selects zero mass")
        return PhraseLogProb(phrase=phrase, context=context or None, log_prob=math.log(prob))


MASK_TOKEN = "[MASK]"


class BridgePriorProvider:
    """Masked-token priors served over the bridge protocol, cached per query.

    Unconditional: the phrase alone forms the template, one token masked per
    query. Conditional: when the context sentence contains the phrase, each
    phrase token is masked in place; a rest-of-prompt context (phrase absent)
    has the phrase appended first. Served probabilities below 1e-12 are
    clamped before logs and the clamping is counted.
    """

    def __init__(self, client):
        self._client = client
        self._cache: dict[tuple[str, str | None], PhraseLogProb] = {}
        self.clamp_events = 0

    def _masked_queries(self, phrase: str, context: str | None) -> list[tuple[str, str]]:
        tokens = phrase.split()
        if not tokens:
            raise DomainError("empty phrase")
        if context is None:
            base = tokens
            offset = 0
        else:
            base = context.split()
            offset = _find_subsequence(base, tokens)
            if offset < 0:
                # context given as "the rest of the prompt": realize the
                # conditional sentence by appending the phrase, mirroring how
                # text conditions combine with a context
                offset = len(base)
                base = base + tokens
        queries = []
        for i, token in enumerate(tokens):
            masked = list(base)
            masked[offset + i] = MASK_TOKEN
            queries.append((" ".join(masked), token))
        return queries

    def lookup(self, phrase: str, context: str | None = None) -> PhraseLogProb:
        key = (phrase, context or None)
        if key in self._cache:
            return self._cache[key]
        total = 0.0
        for template, token in self._masked_queries(phrase, key[1]):
            response = self._client.logprob(template, [token])
            lp = float(response["total"])
            if lp == 0.0 and token:  # p == 1 is legal, just unusual
                log.debug("prior of exactly 1 for token %r in %r", token, template)
            if not math.isfinite(lp) or lp < math.log(_CLAMP_FLOOR):
                self.clamp_events += 1
                log.warning("clamping served log-prob %r for %r to floor", lp, token)
                lp = math.log(_CLAMP_FLOOR)
            total += lp
        result = PhraseLogProb(phrase=phrase, context=key[1], log_prob=total)
        self._cache[key] = result
        return result


def _find_subsequence(haystack: list[str], needle: list[str]) -> int:
    for start in range(len(haystack) - len(needle) + 1):
        if haystack[start : start + len(needle)] == needle:
            return start
    return -1
