"""Episodic N-way K-shot sampling over task classes."""

from __future__ import annotations

from dataclasses import dataclass

from ..utils import stable_rng
from .corpus import Corpus, CorpusError, QATriplet
from .questions import instantiate, paraphrase_pool


class EpisodeError(ValueError):
    pass


@dataclass(frozen=True)
class Episode:
    class_ids: tuple
    support: tuple       # n_way * k_shot triplets
    query: tuple         # n_way * m_query triplets
    n_way: int
    k_shot: int
    m_query: int


def sample_episode(corpus: Corpus, class_pool, n_way: int, k_shot: int,
                   m_query: int, seed) -> Episode:
    """Draw one episode, deterministically for a given seed.

    Classes come without replacement from class_pool; per class, support
    and query triplets are disjoint draws from that class's budget. The
    query set is required to be larger than the support set per class,
    matching the evaluation regime the corpus is sized for.
    """
    if n_way < 2:
        raise EpisodeError("an episode needs at least two classes")
    if m_query <= k_shot:
        raise EpisodeError(f"m_query ({m_query}) must exceed k_shot ({k_shot})")
    pool = sorted(class_pool)
    if len(pool) < n_way:
        raise EpisodeError(f"class pool has {len(pool)} classes, need {n_way}")
    rng = stable_rng(seed, "episode")
    picked = [pool[i] for i in rng.choice(len(pool), size=n_way, replace=False)]

    support: list[QATriplet] = []
    query: list[QATriplet] = []
    for cid in picked:
        idxs = corpus.by_class.get(cid, [])
        need = k_shot + m_query
        if len(idxs) < need:
            raise EpisodeError(
                f"class {cid} has {len(idxs)} samples, episode needs {need}")
        order = rng.permutation(len(idxs))
        support.extend(corpus.triplets[idxs[i]] for i in order[:k_shot])
        query.extend(corpus.triplets[idxs[i]] for i in order[k_shot:need])

    # interleave classes so batch order carries no label signal
    support = [support[i] for i in rng.permutation(len(support))]
    query = [query[i] for i in rng.permutation(len(query))]
    return Episode(tuple(picked), tuple(support), tuple(query),
                   n_way, k_shot, m_query)


def rephrase_episode(corpus: Corpus, episode: Episode, pool: str, seed) -> Episode:
    """Re-draw every question from the given template pool.

    Used by the expression-shift evaluation: the same signals and
    answers, phrased with templates outside (or inside) the pool that
    meta-training saw.
    """
    rng = stable_rng(seed, "rephrase", pool)

    def rewrite(tr: QATriplet) -> QATriplet:
        cls = corpus.classes[tr.class_id]
        pids = paraphrase_pool(cls.question_type, cls.attributes[0], pool)
        pid = int(pids[rng.integers(0, len(pids))])
        attr = cls.attributes if cls.question_type == "choose" else cls.attributes[0]
        question = instantiate(cls.question_type, attr, pid)
        return QATriplet(tr.signal_index, question, tr.answer, tr.class_id,
                         pid, tr.motifs, tr.axis, tr.rr, tr.stage)

    return Episode(episode.class_ids,
                   tuple(rewrite(t) for t in episode.support),
                   tuple(rewrite(t) for t in episode.query),
                   episode.n_way, episode.k_shot, episode.m_query)
