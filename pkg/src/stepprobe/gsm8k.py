"""Turning real word problems into distractor-injection instances.

An instance is usable when its text names exactly one person from the
approved first-name list and the question refers to that person, so a
spliced sentence about somebody else is unambiguous. Distractors are
built by re-templating one of the instance's own sentences, which keeps
the injected text stylistically native to the problem.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import NoTemplateSentence, PoolExhausted
from .generator import perturb_number
from .model import (
    DEFAULT_OBJECT_POOL,
    RELATIONAL_SUFFIXES,
    NaturalDistractor,
    NaturalProblem,
    derive_rng,
)

NATURAL_KINDS = ("base", "overlap", "position", "negative")

# he/him class becomes the name itself, possessives take 's. Object-case
# "her" is folded into the possessive; in question sentences that reads
# slightly off but stays unambiguous.
_NAME_PRONOUNS = ("he", "she", "him", "they", "them")
_POSSESSIVE_PRONOUNS = ("his", "her", "hers", "their")
_PRONOUN_RE = re.compile(
    r"\b(" + "|".join(_NAME_PRONOUNS + _POSSESSIVE_PRONOUNS) + r")\b",
    re.IGNORECASE,
)
_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?")
_GOLD_RE = re.compile(r"####\s*(-?[\d,]+(?:\.\d+)?)")


@dataclass(frozen=True)
class NaturalInstance:
    """One source problem that passed the eligibility filter."""

    source_index: int
    context: str
    question: str
    pn: str
    answer: int | float | None


def load_name_list(path: str | Path | None = None) -> tuple[str, ...]:
    if path is None:
        text = (
            resources.files("stepprobe") / "assets" / "pn_names.txt"
        ).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


def sentences(text: str) -> list[str]:
    return [s for s in re.split(r"(?<=[.!?])\s+", text.strip()) if s]


def split_question(text: str) -> tuple[str, str] | None:
    """Context and question halves; None when no trailing question."""
    parts = sentences(text)
    if not parts or not parts[-1].endswith("?"):
        return None
    return " ".join(parts[:-1]), parts[-1]


def _name_token(name: str) -> re.Pattern:
    return re.compile(r"\b" + re.escape(name) + r"\b")


def names_present(text: str, names: Sequence[str]) -> list[str]:
    return [name for name in names if _name_token(name).search(text)]


def replace_pronouns(text: str, pn: str) -> str:
    """Swap third-person pronouns for the person's name. Idempotent."""

    def sub(match: re.Match) -> str:
        if match.group().lower() in _POSSESSIVE_PRONOUNS:
            return pn + "'s"
        return pn

    return _PRONOUN_RE.sub(sub, text)


def parse_gold_answer(answer_text: str) -> int | float | None:
    match = None
    for match in _GOLD_RE.finditer(answer_text):
        pass
    if match is None:
        return None
    value = float(match.group(1).replace(",", ""))
    return int(value) if value.is_integer() else value


def extract_instances(
    records: Iterable[dict], names: Sequence[str] | None = None
) -> list[NaturalInstance]:
    """Filter source records down to single-person instances.

    A record is kept when its text contains exactly one distinct name
    from the list and the question mentions that name or a third-person
    pronoun. All pronouns in a kept record, context and question alike,
    are replaced by the name, so a later spliced-in person can't capture
    them.
    """
    if names is None:
        names = load_name_list()
    instances = []
    for index, record in enumerate(records):
        split = split_question(record["question"])
        if split is None:
            continue
        context, question = split
        found = names_present(context + " " + question, names)
        if len(found) != 1:
            continue
        pn = found[0]
        if not (_name_token(pn).search(question) or _PRONOUN_RE.search(question)):
            continue
        instances.append(
            NaturalInstance(
                source_index=index,
                context=replace_pronouns(context, pn),
                question=replace_pronouns(question, pn),
                pn=pn,
                answer=parse_gold_answer(record.get("answer", "")),
            )
        )
    return instances


def _integer_spans(text: str) -> list[tuple[int, int, int]]:
    spans = []
    for match in _NUMBER_RE.finditer(text):
        value = float(match.group())
        if value.is_integer():
            spans.append((match.start(), match.end(), int(value)))
    return spans


def make_template(sentence: str, pn: str) -> tuple[str, list[int]]:
    """Blank out the person and integer amounts of one sentence."""
    spans = _integer_spans(sentence)
    numbers = [value for _, _, value in spans]
    templated = sentence
    for start, end, _ in reversed(spans):
        templated = templated[:start] + "[num]" + templated[end:]
    templated = _name_token(pn).sub("[name]", templated)
    return templated, numbers


def template_candidates(instance: NaturalInstance) -> list[str]:
    pn_re = _name_token(instance.pn)
    return [
        s
        for s in sentences(instance.context)
        if pn_re.search(s) and _integer_spans(s)
    ]


def _fresh_name(
    rng, names: Sequence[str], instance_text: str
) -> str:
    candidates = [n for n in names if not _name_token(n).search(instance_text)]
    if not candidates:
        raise PoolExhausted("every list name already appears in the instance")
    return rng.choice(candidates)


def insert_natural_distractor(
    instance: NaturalInstance,
    kind: str,
    seed: int,
    names: Sequence[str] | None = None,
) -> NaturalProblem:
    """Build one distractor variant of a natural instance.

    All kinds consume the same leading random draws (new name, number
    perturbations, base slot) so variants of one instance differ only in
    the kind-specific part, mirroring how the artificial sets are paired.
    """
    if kind not in NATURAL_KINDS:
        raise ValueError(f"unknown natural distractor kind {kind!r}")
    if names is None:
        names = load_name_list()
    context_sentences = sentences(instance.context)
    candidates = template_candidates(instance)
    if not candidates:
        raise NoTemplateSentence(
            f"instance {instance.source_index} has no sentence naming "
            f"{instance.pn} with an integer amount"
        )
    # one kind-independent stream: shared draws first, kind-specific last,
    # so all variants of an instance agree on name, numbers, and base slot
    rng = derive_rng(str(seed), "natural", str(instance.source_index), "distractor")
    template_sentence = rng.choice(candidates)
    template, numbers = make_template(template_sentence, instance.pn)
    fresh = _fresh_name(rng, names, instance.context + " " + instance.question)
    perturbed = [perturb_number(n, rng) for n in numbers]
    base_index = rng.randint(1, len(context_sentences))

    subject = fresh
    insert_at = base_index
    if kind == "overlap":
        subject = instance.pn + rng.choice(RELATIONAL_SUFFIXES)
    elif kind == "position":
        insert_at = rng.randint(0, base_index - 1)

    if kind == "negative":
        noun = rng.choice(DEFAULT_OBJECT_POOL)
        amount = perturbed[0]
        text = f"{subject} doesn't have {amount} {noun}."
        used_numbers = (amount,)
    else:
        text = template
        for value in perturbed:
            text = text.replace("[num]", str(value), 1)
        text = text.replace("[name]", subject)
        used_numbers = tuple(perturbed)

    spliced = (
        context_sentences[:insert_at] + [text] + context_sentences[insert_at:]
    )
    distractor = NaturalDistractor(
        kind=kind,
        text=text,
        subject=subject,
        numbers=used_numbers,
        surface_index=insert_at,
        negated=kind == "negative",
    )
    return NaturalProblem(
        problem_id=f"gsm8k-{kind}-{instance.source_index:05d}",
        context=" ".join(spliced),
        question=instance.question,
        pn=instance.pn,
        distractor=distractor,
        answer=instance.answer,
        variant=f"gsm8k_{kind}",
        seed=seed,
        source_index=instance.source_index,
    )


def build_natural_dataset(
    records: Iterable[dict],
    kinds: Sequence[str],
    seed: int,
    names: Sequence[str] | None = None,
    limit: int | None = None,
) -> tuple[list[NaturalProblem], dict]:
    """Variants for every usable instance, plus ingestion counts."""
    if names is None:
        names = load_name_list()
    records = list(records)
    instances = extract_instances(records, names)
    problems = []
    skipped_template = 0
    used = 0
    for instance in instances:
        if limit is not None and used >= limit:
            break
        try:
            batch = [
                insert_natural_distractor(instance, kind, seed, names)
                for kind in kinds
            ]
        except NoTemplateSentence:
            skipped_template += 1
            continue
        problems.extend(batch)
        used += 1
    stats = {
        "records": len(records),
        "eligible": len(instances),
        "no_template": skipped_template,
        "instances_used": used,
        "problems": len(problems),
    }
    return problems, stats
