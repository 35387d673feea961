"""Word-level tokenizer over the closed question/answer vocabulary.

The QA text is generated from a fixed set of templates, attribute names and
answer strings, so a whitespace tokenizer with an exact vocabulary is enough.
Out-of-vocabulary words are an error by design: hitting one means the corpus
and the tokenizer were built from different class registries.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..data.corpus import Corpus, build_classes
from ..data.questions import (
    PROMPT_VARIANTS,
    instantiate,
    paraphrase_pool,
    render_question,
)

PAD, BOS, EOS, SEP = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<sep>")


class TokenizerError(ValueError):
    pass


@dataclass(frozen=True)
class Tokenizer:
    vocab: tuple[str, ...]          # index -> word, specials first
    index: dict[str, int]

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode(self, text: str) -> list[int]:
        ids = []
        for word in text.split():
            if word not in self.index:
                raise TokenizerError(f"out-of-vocabulary word: {word!r}")
            ids.append(self.index[word])
        return ids

    def decode(self, ids, skip_special: bool = True) -> str:
        words = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.vocab):
                raise TokenizerError(f"token id out of range: {i}")
            if skip_special and i < len(SPECIAL_TOKENS):
                continue
            words.append(self.vocab[i])
        return " ".join(words)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for word in self.vocab:
                fh.write(word + "\n")

    @staticmethod
    def load(path) -> "Tokenizer":
        with open(path, encoding="utf-8") as fh:
            vocab = tuple(line.rstrip("\n") for line in fh if line.rstrip("\n"))
        if vocab[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise TokenizerError("vocabulary file does not start with the special tokens")
        return Tokenizer(vocab=vocab, index={w: i for i, w in enumerate(vocab)})

    @staticmethod
    def from_texts(texts) -> "Tokenizer":
        words = set()
        for text in texts:
            words.update(text.split())
        clash = words.intersection(SPECIAL_TOKENS)
        if clash:
            raise TokenizerError(f"texts contain reserved tokens: {sorted(clash)}")
        vocab = SPECIAL_TOKENS + tuple(sorted(words))
        return Tokenizer(vocab=vocab, index={w: i for i, w in enumerate(vocab)})


def coverage_texts(corpus: Corpus) -> list[str]:
    """Every string the models may ever see for this corpus configuration.

    Spans all template pools (including ones held out from training) and all
    prompt variants, so evaluation-time rephrasings never go out of vocabulary.
    """
    texts = []
    for cls in build_classes(corpus.config):
        arg = cls.attributes if cls.question_type == "choose" else cls.attributes[0]
        pool = paraphrase_pool(cls.question_type, arg, "all")
        for pid in pool:
            q = instantiate(cls.question_type, arg, pid)
            for variant in PROMPT_VARIANTS:
                texts.append(render_question(q, variant))
        texts.append(cls.answer)
    return texts


def build_tokenizer(corpus: Corpus) -> Tokenizer:
    return Tokenizer.from_texts(coverage_texts(corpus))
