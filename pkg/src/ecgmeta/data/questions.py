"""Question paraphrase templates and prompt rendering.

Each question type has five templates; the first three are the "seen"
pool used when building corpora, the last two stay out of meta-training
so that evaluation can probe unseen phrasings. Everything is lowercase
and punctuation is spaced out, keeping the downstream tokenizer a plain
whitespace split.
"""

from __future__ import annotations

N_SEEN_TEMPLATES = 3

VERIFY_TEMPLATES = (
    "does this ecg show {a} ?",
    "is {a} present in this ecg ?",
    "does this ecg reveal {a} ?",
    "do you see {a} in this recording ?",
    "is there any sign of {a} here ?",
)

CHOOSE_TEMPLATES = (
    "which one does this ecg show , {a} or {b} ?",
    "does this ecg show {a} or {b} ?",
    "is {a} or {b} present in this ecg ?",
    "do you see {a} or {b} in this recording ?",
    "which of {a} and {b} appears in this ecg ?",
)

QUERY_TEMPLATES = {
    "heart axis": (
        "what direction is this ecg deviated to ?",
        "what is the heart axis of this ecg ?",
        "which axis deviation does this ecg show ?",
        "how is the axis oriented in this recording ?",
        "what axis direction do you see here ?",
    ),
    "rr interval": (
        "what is the rr interval category of this ecg ?",
        "how long is the beat spacing in this ecg ?",
        "what beat interval does this ecg show ?",
        "how would you rate the rr spacing here ?",
        "what spacing category do the beats show ?",
    ),
    "infarction stage": (
        "what is the infarction stage of this ecg ?",
        "which infarction stage does this ecg show ?",
        "what stage of infarction is present in this ecg ?",
        "how advanced is the infarction in this recording ?",
        "what infarction stage do you see here ?",
    ),
}

PROMPT_VARIANTS = ("qa_scaffold", "bare", "option_hint")
OPTION_HINT = "the answer can be both , none or in question"


def templates_for(question_type: str, attribute: str):
    if question_type == "verify":
        return VERIFY_TEMPLATES
    if question_type == "choose":
        return CHOOSE_TEMPLATES
    if question_type == "query":
        if attribute not in QUERY_TEMPLATES:
            raise KeyError(f"no query templates for attribute {attribute!r}")
        return QUERY_TEMPLATES[attribute]
    raise KeyError(f"unknown question type {question_type!r}")


def paraphrase_pool(question_type: str, attribute: str, pool: str):
    """Template indices for the requested pool: 'seen', 'unseen' or 'all'."""
    n = len(templates_for(question_type, attribute))
    if pool == "seen":
        return tuple(range(N_SEEN_TEMPLATES))
    if pool == "unseen":
        return tuple(range(N_SEEN_TEMPLATES, n))
    if pool == "all":
        return tuple(range(n))
    raise ValueError(f"unknown template pool {pool!r}")


def instantiate(question_type: str, attribute, paraphrase_id: int) -> str:
    """Fill one template. `attribute` is a name or an (a, b) pair."""
    if question_type == "choose":
        a, b = attribute
        return CHOOSE_TEMPLATES[paraphrase_id].format(a=a, b=b)
    if question_type == "verify":
        return VERIFY_TEMPLATES[paraphrase_id].format(a=attribute)
    return templates_for(question_type, attribute)[paraphrase_id]


def render_question(question: str, prompt_variant: str = "qa_scaffold") -> str:
    """Wrap a bare question in the configured prompt scaffolding."""
    if prompt_variant == "bare":
        return question
    if prompt_variant == "qa_scaffold":
        return f"question: {question} answer:"
    if prompt_variant == "option_hint":
        return f"{question} {OPTION_HINT}"
    raise ValueError(f"unknown prompt variant {prompt_variant!r}")
