from .signals import (
    AMPLITUDE_LIMIT,
    ECGSignal,
    LEAD_NAMES,
    RR_PERIODS,
    apply_lead_mask,
    random_lead_keep,
    synth_base,
)
from .attributes import (
    AttributeSpec,
    BY_NAME,
    FAMILIES,
    REGISTRY,
    inject_motif,
    presence_attributes,
    value_attributes,
)
from .questions import (
    N_SEEN_TEMPLATES,
    OPTION_HINT,
    PROMPT_VARIANTS,
    instantiate,
    paraphrase_pool,
    render_question,
    templates_for,
)
from .corpus import (
    Corpus,
    CorpusError,
    GeneratorConfig,
    QATriplet,
    ShiftConfig,
    TaskClass,
    build_classes,
    derive_answer,
    generate_corpus,
    load_corpus,
    make_domain_shift_corpus,
    save_corpus,
)
from .episodes import Episode, EpisodeError, rephrase_episode, sample_episode
