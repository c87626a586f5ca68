"""Denoiser conditioning keys.

A condition names the distribution a denoiser should assume: nothing at all,
a full prompt, a subset of a prompt's phrases, or (for toy mixture models) an
explicit component subset. Conditions are immutable values; combining one
with a context yields the condition "context and this", realized per kind
(text concatenation, phrase-index union, component-mask intersection).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DomainError, UnsupportedConditionError

UNCONDITIONAL = "unconditional"
PROMPT = "prompt"
PHRASE_SET = "phrase_set"
COMPONENT_SUBSET = "component_subset"


@dataclass(frozen=True)
class DenoiserCondition:
    kind: str
    text: str | None = None
    phrases: tuple[int, ...] | None = None
    components: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in (UNCONDITIONAL, PROMPT, PHRASE_SET, COMPONENT_SUBSET):
            raise DomainError(f"unknown condition kind {self.kind!r}")
        if self.kind == PROMPT and not self.text:
            raise DomainError("prompt condition requires non-empty text")
        if self.kind == PHRASE_SET:
            if not self.text:
                raise DomainError("phrase_set condition requires the prompt text")
            if not self.phrases:
                raise DomainError("phrase_set condition requires at least one phrase index")
            tokens = self.text.split()
            bad = [i for i in self.phrases if i < 0 or i >= len(tokens)]
            if bad:
                raise DomainError(f"phrase indices {bad} out of range for prompt {self.text!r}")
            object.__setattr__(self, "phrases", tuple(sorted(set(self.phrases))))
        if self.kind == COMPONENT_SUBSET:
            if not self.components:
                raise DomainError("component_subset must select at least one component")
            object.__setattr__(self, "components", tuple(sorted(set(self.components))))

    @property
    def is_unconditional(self) -> bool:
        return self.kind == UNCONDITIONAL

    def phrase_text(self) -> str:
        """For phrase_set conditions: the selected tokens joined in order."""
        if self.kind != PHRASE_SET:
            raise UnsupportedConditionError(f"phrase_text undefined for kind {self.kind!r}")
        tokens = self.text.split()
        return " ".join(tokens[i] for i in self.phrases)

    def describe(self) -> str:
        if self.kind == UNCONDITIONAL:
            return "unconditional"
        if self.kind == PROMPT:
            return f"prompt:{self.text}"
        if self.kind == PHRASE_SET:
            return f"phrases[{','.join(map(str, self.phrases))}]:{self.text}"
        return f"components[{','.join(map(str, self.components))}]"


def unconditional() -> DenoiserCondition:
    return DenoiserCondition(kind=UNCONDITIONAL)


def prompt(text: str) -> DenoiserCondition:
    return DenoiserCondition(kind=PROMPT, text=text)


def phrase_set(text: str, indices) -> DenoiserCondition:
    return DenoiserCondition(kind=PHRASE_SET, text=text, phrases=tuple(indices))


def component_subset(*components: int) -> DenoiserCondition:
    return DenoiserCondition(kind=COMPONENT_SUBSET, components=tuple(components))


def combine(condition: DenoiserCondition, context: DenoiserCondition | None) -> DenoiserCondition:
    """Condition representing "context and condition".

    Used to realize conditional estimates: text kinds widen the prompt,
    component subsets intersect. A missing or unconditional context returns
    the condition unchanged (so a conditional run with empty context is the
    unconditional run, bit for bit).
    """
    if context is None or context.is_unconditional:
        return condition
    if condition.is_unconditional:
        return context
    if condition.kind == COMPONENT_SUBSET and context.kind == COMPONENT_SUBSET:
        shared = tuple(sorted(set(condition.components) & set(context.components)))
        if not shared:
            raise DomainError("context and condition select disjoint component subsets")
        return component_subset(*shared)
    if condition.kind == PHRASE_SET and context.kind == PHRASE_SET:
        if condition.text != context.text:
            raise DomainError("phrase sets must refer to the same prompt to be combined")
        return phrase_set(condition.text, set(condition.phrases) | set(context.phrases))
    if condition.kind in (PROMPT, PHRASE_SET) and context.kind in (PROMPT, PHRASE_SET):
        ctx_text = context.text if context.kind == PROMPT else context.phrase_text()
        own_text = condition.text if condition.kind == PROMPT else condition.phrase_text()
        return prompt(f"{ctx_text} {own_text}")
    raise UnsupportedConditionError(
        f"cannot combine condition kind {condition.kind!r} with context kind {context.kind!r}"
    )
