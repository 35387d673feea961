"""Corpus generation: classes, triplets, splits, disk round-trip.

A "class" is an (attribute, answer) pair — the unit of few-shot
episodes — and every class owns a fixed budget of generated triplets.
The generator re-derives each stored answer from the motifs it actually
injected and refuses to emit a corpus where the two disagree, so label
noise is structurally impossible rather than merely unlikely.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..utils import config_hash, stable_rng
from .attributes import BY_NAME, FAMILIES, presence_attributes, value_attributes
from .questions import (
    N_SEEN_TEMPLATES,
    instantiate,
    paraphrase_pool,
    templates_for,
)
from .signals import ECGSignal, RR_PERIODS, clip_amplitude, synth_base
from .attributes import inject_motif

QUESTION_TYPES = ("verify", "choose", "query")
SIG_MAGIC = b"ECGSIG01"
FORMAT_VERSION = 1

AXIS_VALUES = ("normal", "leftward", "rightward")
RR_VALUES = tuple(RR_PERIODS.keys())


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class TaskClass:
    class_id: str
    question_type: str
    attributes: tuple      # one name, or two for choose
    answer: str


@dataclass(frozen=True)
class QATriplet:
    signal_index: int
    question: str          # bare paraphrase, no prompt scaffolding
    answer: str
    class_id: str
    paraphrase_id: int
    motifs: tuple          # presence attributes actually injected
    axis: str
    rr: str
    stage: str | None


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    t_steps: int = 500
    n_leads: int = 12
    question_types: tuple = QUESTION_TYPES
    families: tuple = FAMILIES
    count_verify: int = 40
    count_choose: int = 14
    count_query: int = 20
    max_pairs_per_family: int = 4
    distractor_rate: float = 0.25
    motif_strength: float = 1.0
    noise_floor: float = 0.02
    train_ratio: float = 0.8
    template_pool: str = "seen"
    # domain-shift knobs; zero/neutral values leave the corpus untouched
    extra_noise_std: float = 0.0
    amplitude_scale: float = 1.0

    def count_for(self, question_type: str) -> int:
        return {"verify": self.count_verify, "choose": self.count_choose,
                "query": self.count_query}[question_type]

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def validate(self) -> None:
        if self.t_steps < 64 or self.n_leads < 1:
            raise CorpusError("signal geometry too small")
        if not 0.0 < self.train_ratio < 1.0:
            raise CorpusError("train_ratio must be in (0, 1)")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise CorpusError("distractor_rate must be in [0, 1]")
        unknown = set(self.question_types) - set(QUESTION_TYPES)
        if unknown:
            raise CorpusError(f"unknown question types: {sorted(unknown)}")
        unknown_fam = set(self.families) - set(FAMILIES)
        if unknown_fam:
            raise CorpusError(f"unknown families: {sorted(unknown_fam)}")
        if ("verify" in self.question_types or "choose" in self.question_types) \
                and not presence_attributes(self.families):
            raise CorpusError("no presence attributes for verify/choose questions")
        if "query" in self.question_types and not value_attributes(self.families):
            raise CorpusError("no value attributes for query questions")
        for qt in self.question_types:
            if self.count_for(qt) < 1:
                raise CorpusError(f"per-class count for {qt} must be positive")
        if self.template_pool not in ("seen", "unseen", "all"):
            raise CorpusError(f"unknown template pool {self.template_pool!r}")


@dataclass(frozen=True)
class ShiftConfig:
    """Domain shift: heavier noise, damped amplitude, unseen phrasings."""
    noise_std: float = 0.3
    amplitude_scale: float = 0.75
    template_pool: str = "unseen"


# ---------------------------------------------------------------------
# class enumeration
# ---------------------------------------------------------------------

def build_classes(cfg: GeneratorConfig) -> list[TaskClass]:
    out = []
    if "verify" in cfg.question_types:
        for spec in presence_attributes(cfg.families):
            for ans in ("yes", "no"):
                out.append(TaskClass(f"verify:{spec.name}:{ans}", "verify",
                                     (spec.name,), ans))
    if "choose" in cfg.question_types:
        for family in cfg.families:
            members = [s.name for s in presence_attributes((family,))]
            pairs = list(itertools.combinations(sorted(members), 2))
            for a, b in pairs[: cfg.max_pairs_per_family]:
                for ans in ("both", "none", a, b):
                    out.append(TaskClass(f"choose:{a}|{b}:{ans}", "choose",
                                         (a, b), ans))
    if "query" in cfg.question_types:
        for spec in value_attributes(cfg.families):
            for v in spec.values:
                out.append(TaskClass(f"query:{spec.name}:{v}", "query",
                                     (spec.name,), v))
    return out


def derive_answer(cls: TaskClass, motifs: tuple, axis: str, rr: str,
                  stage: str | None) -> str:
    """Re-derive the ground-truth answer from what was actually injected."""
    if cls.question_type == "verify":
        return "yes" if cls.attributes[0] in motifs else "no"
    if cls.question_type == "choose":
        a, b = cls.attributes
        ha, hb = a in motifs, b in motifs
        if ha and hb:
            return "both"
        if not ha and not hb:
            return "none"
        return a if ha else b
    attr = cls.attributes[0]
    if attr == "heart axis":
        return axis
    if attr == "rr interval":
        return rr
    if attr == "infarction stage":
        if stage is None:
            raise CorpusError("query signal missing its infarction stage")
        return stage
    raise CorpusError(f"cannot derive answer for {cls.class_id}")


# ---------------------------------------------------------------------
# corpus container
# ---------------------------------------------------------------------

class Corpus:
    def __init__(self, signals: np.ndarray, triplets: list[QATriplet],
                 classes: list[TaskClass], splits: dict, config: GeneratorConfig):
        self.signals = signals
        self.triplets = triplets
        self.classes = {c.class_id: c for c in classes}
        self.class_order = [c.class_id for c in classes]
        self.splits = splits
        self.config = config
        self.by_class: dict[str, list[int]] = {}
        for i, tr in enumerate(triplets):
            self.by_class.setdefault(tr.class_id, []).append(i)

    def signal(self, index: int) -> ECGSignal:
        return ECGSignal(self.signals[index])

    def split_classes(self, question_type: str, which: str) -> list[str]:
        """Class ids for one side of the split; 'all_single' pools types."""
        if which not in ("meta_train", "meta_test"):
            raise CorpusError(f"unknown split side {which!r}")
        if question_type == "all_single":
            out = []
            for qt in QUESTION_TYPES:
                if qt in self.splits:
                    out.extend(self.splits[qt][which])
            return out
        if question_type not in self.splits:
            raise CorpusError(f"no classes of question type {question_type!r}")
        return list(self.splits[question_type][which])

    def config_hash(self) -> str:
        return config_hash(self.config.as_dict())

    def validate(self) -> None:
        for qt, sides in self.splits.items():
            train, test = set(sides["meta_train"]), set(sides["meta_test"])
            if train & test:
                raise CorpusError(f"{qt}: split sides overlap: {sorted(train & test)}")
            expected = {c for c in self.classes if self.classes[c].question_type == qt}
            if train | test != expected:
                raise CorpusError(f"{qt}: split does not cover its classes")
        for cid, idxs in self.by_class.items():
            want = self.config.count_for(self.classes[cid].question_type)
            if len(idxs) != want:
                raise CorpusError(f"{cid}: {len(idxs)} triplets, expected {want}")
        for tr in self.triplets:
            cls = self.classes[tr.class_id]
            if derive_answer(cls, tr.motifs, tr.axis, tr.rr, tr.stage) != tr.answer:
                raise CorpusError(f"answer inconsistent with motifs in {cls.class_id}")


# ---------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------

def _synth_for_class(cls: TaskClass, rng: np.random.Generator,
                     cfg: GeneratorConfig):
    axis = rng.choice(AXIS_VALUES)
    rr = rng.choice(RR_VALUES)
    stage = None
    if cls.question_type == "query":
        attr = cls.attributes[0]
        if attr == "heart axis":
            axis = cls.answer
        elif attr == "rr interval":
            rr = cls.answer
        elif attr == "infarction stage":
            stage = cls.answer

    x, beats = synth_base(rng, cfg.t_steps, cfg.n_leads, str(axis), str(rr),
                          cfg.noise_floor)

    to_inject = []
    if cls.question_type == "verify":
        if cls.answer == "yes":
            to_inject.append(cls.attributes[0])
    elif cls.question_type == "choose":
        a, b = cls.attributes
        if cls.answer == "both":
            to_inject += [a, b]
        elif cls.answer != "none":
            to_inject.append(cls.answer)

    excluded = set(cls.attributes)
    if rng.random() < cfg.distractor_rate:
        candidates = [s.name for s in presence_attributes(cfg.families)
                      if s.name not in excluded]
        if candidates:
            to_inject.append(str(rng.choice(candidates)))

    for name in to_inject:
        x = inject_motif(x, beats, name, rng, strength=cfg.motif_strength)
    if stage is not None:
        x = inject_motif(x, beats, "infarction stage", rng,
                         strength=cfg.motif_strength, value=stage)

    # domain-shift post-processing (neutral by default)
    if cfg.extra_noise_std > 0.0:
        x = x + cfg.extra_noise_std * rng.normal(size=x.shape)
    if cfg.amplitude_scale != 1.0:
        x = x * cfg.amplitude_scale

    motifs = tuple(sorted(set(to_inject)))
    return clip_amplitude(x), motifs, str(axis), str(rr), stage


def generate_corpus(cfg: GeneratorConfig) -> Corpus:
    cfg.validate()
    classes = build_classes(cfg)
    if not classes:
        raise CorpusError("configuration yields zero classes")

    signals = []
    triplets = []
    for ci, cls in enumerate(classes):
        pool = paraphrase_pool(cls.question_type, cls.attributes[0],
                               cfg.template_pool)
        for si in range(cfg.count_for(cls.question_type)):
            rng = stable_rng(cfg.seed, "signal", cls.class_id, si)
            x, motifs, axis, rr, stage = _synth_for_class(cls, rng, cfg)
            derived = derive_answer(cls, motifs, axis, rr, stage)
            if derived != cls.answer:
                raise CorpusError(
                    f"self-check failed for {cls.class_id}: derived {derived!r}")
            pid = pool[si % len(pool)]
            question = instantiate(cls.question_type,
                                   cls.attributes if cls.question_type == "choose"
                                   else cls.attributes[0], pid)
            triplets.append(QATriplet(
                signal_index=len(signals), question=question, answer=cls.answer,
                class_id=cls.class_id, paraphrase_id=pid, motifs=motifs,
                axis=axis, rr=rr, stage=stage))
            signals.append(x)

    by_id = {c.class_id: c for c in classes}
    splits = {}
    for qt in cfg.question_types:
        ids = sorted(c.class_id for c in classes if c.question_type == qt)
        if not ids:
            continue
        # verify answers are binary, so stratify that split by answer:
        # both sides keep a balanced yes/no mix and a constant responder
        # scores at chance on meta-test episodes
        if qt == "verify":
            strata = [[i for i in ids if by_id[i].answer == a]
                      for a in ("no", "yes")]
        else:
            strata = [ids]
        train, test = [], []
        for k, stratum in enumerate(strata):
            order = stable_rng(cfg.seed, "split", qt, k).permutation(len(stratum))
            n_test = max(1, round((1.0 - cfg.train_ratio) * len(stratum)))
            if n_test >= len(stratum):
                raise CorpusError(f"{qt}: split leaves no meta-train classes")
            test.extend(stratum[i] for i in order[:n_test])
            train.extend(stratum[i] for i in order[n_test:])
        splits[qt] = {"meta_train": sorted(train), "meta_test": sorted(test)}

    corpus = Corpus(np.stack(signals), triplets, classes, splits, cfg)
    corpus.validate()
    return corpus


def make_domain_shift_corpus(cfg: GeneratorConfig,
                             shift: ShiftConfig | None = None) -> Corpus:
    """Same classes and schema, shifted signal and phrasing statistics."""
    shift = shift or ShiftConfig()
    shifted_cfg = dataclasses.replace(
        cfg,
        extra_noise_std=shift.noise_std,
        amplitude_scale=shift.amplitude_scale,
        template_pool=shift.template_pool,
    )
    return generate_corpus(shifted_cfg)


# ---------------------------------------------------------------------
# disk round-trip
# ---------------------------------------------------------------------

def save_corpus(corpus: Corpus, dirpath: str) -> None:
    os.makedirs(dirpath, exist_ok=True)
    sig = corpus.signals
    with open(os.path.join(dirpath, "signals.bin"), "wb") as f:
        f.write(SIG_MAGIC)
        f.write(struct.pack("<IIII", FORMAT_VERSION, sig.shape[1], sig.shape[2],
                            sig.shape[0]))
        f.write(np.ascontiguousarray(sig, dtype=np.float64).tobytes())
    with open(os.path.join(dirpath, "triplets.jsonl"), "w") as f:
        for tr in corpus.triplets:
            f.write(json.dumps({
                "signal_index": tr.signal_index, "question": tr.question,
                "answer": tr.answer, "class_id": tr.class_id,
                "paraphrase_id": tr.paraphrase_id, "motifs": list(tr.motifs),
                "axis": tr.axis, "rr": tr.rr, "stage": tr.stage,
            }, sort_keys=True) + "\n")
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": corpus.config.seed,
        "config": corpus.config.as_dict(),
        "config_hash": corpus.config_hash(),
        "classes": [{"class_id": c.class_id, "question_type": c.question_type,
                     "attributes": list(c.attributes), "answer": c.answer}
                    for c in (corpus.classes[cid] for cid in corpus.class_order)],
        "splits": corpus.splits,
        "n_signals": int(sig.shape[0]),
    }
    with open(os.path.join(dirpath, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_corpus(dirpath: str) -> Corpus:
    with open(os.path.join(dirpath, "manifest.json")) as f:
        manifest = json.load(f)
    if manifest["format_version"] != FORMAT_VERSION:
        raise CorpusError(f"unsupported corpus format {manifest['format_version']}")
    raw = dict(manifest["config"])
    for k in ("question_types", "families"):
        raw[k] = tuple(raw[k])
    cfg = GeneratorConfig(**raw)
    if config_hash(cfg.as_dict()) != manifest["config_hash"]:
        raise CorpusError("manifest config hash mismatch")

    with open(os.path.join(dirpath, "signals.bin"), "rb") as f:
        blob = f.read()
    if blob[:8] != SIG_MAGIC:
        raise CorpusError("signals.bin: bad magic")
    version, t_steps, n_leads, count = struct.unpack_from("<IIII", blob, 8)
    if version != FORMAT_VERSION:
        raise CorpusError(f"signals.bin: unsupported version {version}")
    signals = np.frombuffer(blob, dtype=np.float64, offset=24).reshape(
        count, t_steps, n_leads).copy()
    if count != manifest["n_signals"]:
        raise CorpusError("signal count disagrees with manifest")

    triplets = []
    with open(os.path.join(dirpath, "triplets.jsonl")) as f:
        for line in f:
            d = json.loads(line)
            triplets.append(QATriplet(
                signal_index=d["signal_index"], question=d["question"],
                answer=d["answer"], class_id=d["class_id"],
                paraphrase_id=d["paraphrase_id"], motifs=tuple(d["motifs"]),
                axis=d["axis"], rr=d["rr"], stage=d["stage"]))

    classes = [TaskClass(c["class_id"], c["question_type"],
                         tuple(c["attributes"]), c["answer"])
               for c in manifest["classes"]]
    corpus = Corpus(signals, triplets, classes, manifest["splits"], cfg)
    corpus.validate()
    return corpus
