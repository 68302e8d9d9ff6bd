"""Vocabulary with a generic/emotion partition, dialogue corpus ingestion,
and a deterministic synthetic emotional-dialogue generator.

Corpus text is pre-tokenized; the tokenizer is lowercase + whitespace split.
Vocabulary ids are laid out as [specials][generic words][emotion words] so
the emotion partition is a contiguous block at the top of the id range,
which is what the split output layer of the model relies on.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, CorpusError

PAD, GO, EOS, UNK = "<pad>", "<go>", "<eos>", "<unk>"
SPECIALS = [PAD, GO, EOS, UNK]
PAD_ID, GO_ID, EOS_ID, UNK_ID = 0, 1, 2, 3


class EmotionCategory(Enum):
    """The six response emotion labels, in fixed order."""

    ANGRY = "Angry"
    DISGUST = "Disgust"
    HAPPY = "Happy"
    LIKE = "Like"
    SAD = "Sad"
    OTHER = "Other"

    @property
    def index(self) -> int:
        return CATEGORIES.index(self)

    @classmethod
    def from_name(cls, name: str) -> "EmotionCategory":
        for cat in cls:
            if cat.value == name:
                return cat
        allowed = ", ".join(c.value for c in cls)
        raise ConfigError(f"unknown emotion category {name!r}; allowed: {allowed}")


CATEGORIES: list[EmotionCategory] = list(EmotionCategory)
N_CATEGORIES = len(CATEGORIES)


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass
class EmotionLexicon:
    """token -> category map; only the five non-Other categories appear."""

    word_to_category: dict[str, EmotionCategory]

    def category_of(self, token: str) -> EmotionCategory | None:
        return self.word_to_category.get(token)

    def words_for(self, category: EmotionCategory) -> list[str]:
        return sorted(w for w, c in self.word_to_category.items() if c is category)

    @classmethod
    def load_tsv(cls, path: str | Path) -> "EmotionLexicon":
        mapping: dict[str, EmotionCategory] = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"lexicon line {lineno}: expected 'token<TAB>category'")
            token, cat_name = parts[0].strip().lower(), parts[1].strip()
            cat = EmotionCategory.from_name(cat_name)
            if cat is EmotionCategory.OTHER:
                raise CorpusError(f"lexicon line {lineno}: Other is not a lexicon category")
            if token in mapping and mapping[token] is not cat:
                raise CorpusError(f"lexicon line {lineno}: {token!r} assigned to two categories")
            mapping[token] = cat
        return cls(mapping)


def default_lexicon() -> EmotionLexicon:
    """The small English lexicon shipped with the package."""
    ref = resources.files("ecm.data") / "emotion_lexicon.tsv"
    with resources.as_file(ref) as path:
        return EmotionLexicon.load_tsv(path)


# ---------------------------------------------------------------------------
# vocabulary


@dataclass
class Vocab:
    """Token inventory partitioned into specials, generic and emotion words.

    Ids are dense from 0; emotion words occupy the contiguous block
    [n_generic, size) so a distribution over the vocabulary can be formed
    by concatenating a generic block and an emotion block.
    """

    tokens: list[str]
    tags: list[str]  # per token: "special" | "generic" | a category name
    token_to_id: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.token_to_id:
            self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        self.validate()

    def validate(self) -> None:
        if len(self.tokens) != len(self.tags):
            raise CorpusError("vocab tokens and tags differ in length")
        if self.tokens[: len(SPECIALS)] != SPECIALS:
            raise CorpusError("vocab must start with the four special tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise CorpusError("vocab contains duplicate tokens")
        seen_emotion = False
        for tag in self.tags[len(SPECIALS):]:
            if tag == "generic":
                if seen_emotion:
                    raise CorpusError("generic id after emotion block; partition not contiguous")
            elif tag == "special":
                raise CorpusError("special tag outside the specials prefix")
            else:
                EmotionCategory.from_name(tag)
                seen_emotion = True

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def n_generic(self) -> int:
        """Ids below this bound are specials or generic words."""
        return self.size - self.n_emotion

    @property
    def n_emotion(self) -> int:
        return sum(1 for t in self.tags if t not in ("special", "generic"))

    @property
    def generic_ids(self) -> set[int]:
        return {i for i, t in enumerate(self.tags) if t == "generic"}

    @property
    def emotion_ids(self) -> dict[EmotionCategory, set[int]]:
        out: dict[EmotionCategory, set[int]] = {c: set() for c in CATEGORIES}
        for i, t in enumerate(self.tags):
            if t not in ("special", "generic"):
                out[EmotionCategory.from_name(t)].add(i)
        return out

    def is_emotion_id(self, token_id: int) -> bool:
        return token_id >= self.n_generic

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: str | Path) -> None:
        payload = {"version": 1, "tokens": self.tokens, "tags": self.tags}
        Path(path).write_text(json.dumps(payload, ensure_ascii=True, sort_keys=True,
                                         separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        try:
            payload = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise CorpusError(f"vocab file {path}: {e}") from e
        if payload.get("version") != 1:
            raise CorpusError(f"vocab file {path}: unsupported version")
        return cls(tokens=list(payload["tokens"]), tags=list(payload["tags"]))


def build_vocab(pairs: Iterable["DialoguePair"], max_size: int,
                lexicon: EmotionLexicon) -> Vocab:
    """Frequency-ranked vocabulary with lexicon words routed to the emotion
    partition. Desk default max_size is 2000; the reference setting of
    40000 is far beyond what the synthetic corpus needs."""
    if max_size <= len(SPECIALS):
        raise ConfigError(f"max_size must exceed {len(SPECIALS)}")
    counts: Counter[str] = Counter()
    n_pairs = 0
    for pair in pairs:
        n_pairs += 1
        counts.update(pair.post)
        counts.update(pair.response)
    if n_pairs == 0 or not counts:
        raise CorpusError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[: max_size - len(SPECIALS)]]
    generic = [t for t in kept if lexicon.category_of(t) is None]
    emotion = [t for t in kept if lexicon.category_of(t) is not None]
    tokens = SPECIALS + generic + emotion
    tags = (["special"] * len(SPECIALS)
            + ["generic"] * len(generic)
            + [lexicon.category_of(t).value for t in emotion])
    return Vocab(tokens=tokens, tags=tags)


# ---------------------------------------------------------------------------
# dialogue records


@dataclass
class DialoguePair:
    """A post/response pair at the token level, as stored on disk."""

    post: list[str]
    response: list[str]
    emotion: EmotionCategory | None = None


@dataclass
class DialogueExample:
    """An encoded pair ready for training: ids plus the per-response-token
    emotion-word flags (1 iff the token sits in the vocab's emotion block)."""

    post_ids: list[int]
    response_ids: list[int]
    emotion: EmotionCategory
    q: list[int]


def encode_pairs(pairs: Sequence[DialoguePair], vocab: Vocab) -> list[DialogueExample]:
    out = []
    for i, pair in enumerate(pairs):
        if pair.emotion is None:
            raise CorpusError(f"pair {i} has no emotion label; annotate the corpus first")
        if not pair.post or not pair.response:
            raise CorpusError(f"pair {i} has an empty side")
        response_ids = vocab.encode(pair.response)
        out.append(DialogueExample(
            post_ids=vocab.encode(pair.post),
            response_ids=response_ids,
            emotion=pair.emotion,
            q=[1 if vocab.is_emotion_id(t) else 0 for t in response_ids],
        ))
    return out


def load_corpus(path: str | Path) -> list[DialoguePair]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e
        if not isinstance(obj, dict) or "post" not in obj or "response" not in obj:
            raise CorpusError(f"{path}:{lineno}: need 'post' and 'response' fields")
        emotion = None
        if obj.get("emotion") is not None:
            try:
                emotion = EmotionCategory.from_name(obj["emotion"])
            except ConfigError as e:
                raise CorpusError(f"{path}:{lineno}: {e}") from e
        post, response = tokenize(str(obj["post"])), tokenize(str(obj["response"]))
        if not post or not response:
            raise CorpusError(f"{path}:{lineno}: empty post or response")
        pairs.append(DialoguePair(post=post, response=response, emotion=emotion))
    return pairs


def save_corpus(path: str | Path, pairs: Sequence[DialoguePair]) -> None:
    lines = []
    for pair in pairs:
        obj = {"post": " ".join(pair.post), "response": " ".join(pair.response)}
        if pair.emotion is not None:
            obj["emotion"] = pair.emotion.value
        lines.append(json.dumps(obj, ensure_ascii=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def split_corpus(pairs: Sequence, ratios: Sequence[float], seed: int):
    """Deterministic shuffle + partition; partitions are disjoint and cover
    the input. Boundaries fall at floor(n * cumulative_ratio)."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)}")
    if any(r < 0 for r in ratios):
        raise ConfigError("split ratios must be non-negative")
    order = list(range(len(pairs)))
    random.Random(seed).shuffle(order)
    n = len(pairs)
    bounds = [0]
    acc = 0.0
    for r in ratios:
        acc += r
        bounds.append(min(n, math.floor(n * acc + 1e-9)))
    bounds[-1] = n
    return tuple([pairs[i] for i in order[bounds[k]:bounds[k + 1]]]
                 for k in range(len(ratios)))


# ---------------------------------------------------------------------------
# synthetic corpus generator

# Relative category frequencies used for the default mixture (largest:
# Other, then Like; smallest: Angry).
DEFAULT_MIXTURE: dict[EmotionCategory, float] = {
    EmotionCategory.ANGRY: 234_635.0,
    EmotionCategory.DISGUST: 689_295.0,
    EmotionCategory.HAPPY: 306_364.0,
    EmotionCategory.LIKE: 1_226_954.0,
    EmotionCategory.SAD: 537_028.0,
    EmotionCategory.OTHER: 1_365_371.0,
}

TOPICS = ["movie", "weather", "traffic", "dinner", "garden",
          "football", "painting", "holiday", "meeting", "puppy"]

POST_TEMPLATES: dict[EmotionCategory, list[str]] = {
    EmotionCategory.ANGRY: [
        "the {topic} made me so angry today",
        "i am mad about the {topic} again",
        "that {topic} left me furious and annoyed",
    ],
    EmotionCategory.DISGUST: [
        "the {topic} was gross and nasty",
        "what a disgusting {topic} that was",
        "the {topic} seemed awful and foul",
    ],
    EmotionCategory.HAPPY: [
        "the {topic} made me happy today",
        "i am glad about the {topic} now",
        "what a cheerful {topic} we had",
    ],
    EmotionCategory.LIKE: [
        "i love the {topic} so much",
        "the {topic} was lovely and sweet",
        "i adore that {topic} already",
    ],
    EmotionCategory.SAD: [
        "the {topic} made me sad today",
        "i am unhappy about the {topic} now",
        "that {topic} left me gloomy and tearful",
    ],
    EmotionCategory.OTHER: [
        "tell me about the {topic} please",
        "what happened with the {topic} today",
        "did you see the {topic} yesterday",
    ],
}

RESPONSE_TEMPLATES: dict[EmotionCategory, list[str]] = {
    EmotionCategory.ANGRY: [
        "this makes me angry too",
        "i am furious about it",
        "that is annoying and irritating",
        "such news makes me mad",
    ],
    EmotionCategory.DISGUST: [
        "that sounds disgusting to me",
        "how gross and nasty",
        "what a revolting thing to hear",
        "it seems vile and foul",
    ],
    EmotionCategory.HAPPY: [
        "i feel happy for you",
        "that is cheerful news indeed",
        "i am glad and smiling now",
        "what a joyful thing to hear",
    ],
    EmotionCategory.LIKE: [
        "i love that so much",
        "how lovely and sweet it is",
        "i adore hearing this",
        "that is charming and dear",
    ],
    EmotionCategory.SAD: [
        "that makes me sad inside",
        "i feel unhappy about it",
        "how gloomy and mournful",
        "such sorrow is hard to bear",
    ],
    EmotionCategory.OTHER: [
        "i see what you mean",
        "tell me more about it",
        "maybe we can talk later",
        "i am not sure about that",
    ],
}


@dataclass
class TemplateBank:
    post_templates: dict[EmotionCategory, list[str]]
    response_templates: dict[EmotionCategory, list[str]]
    topics: list[str]

    def validate(self, lexicon: EmotionLexicon) -> None:
        n_posts = sum(len(v) for v in self.post_templates.values())
        if n_posts < 3:
            raise ConfigError("template bank needs at least 3 post templates")
        if not self.topics:
            raise ConfigError("template bank needs at least one topic")
        for cat in CATEGORIES:
            templates = self.response_templates.get(cat, [])
            if len(templates) < 3:
                raise ConfigError(f"need >=3 response templates for {cat.value}")
            for tpl in templates:
                hits = {lexicon.category_of(t) for t in tokenize(tpl)} - {None}
                if cat is EmotionCategory.OTHER:
                    if hits:
                        raise ConfigError(f"Other template {tpl!r} contains emotion words")
                elif hits != {cat}:
                    raise ConfigError(
                        f"{cat.value} template {tpl!r} must contain only {cat.value} "
                        f"emotion words, found {sorted(h.value for h in hits)}")


def default_template_bank() -> TemplateBank:
    return TemplateBank(post_templates=POST_TEMPLATES,
                        response_templates=RESPONSE_TEMPLATES, topics=TOPICS)


def apportion(mixture: dict[EmotionCategory, float], n: int) -> dict[EmotionCategory, int]:
    """Largest-remainder apportionment of n slots over the mixture weights."""
    total = sum(mixture.get(c, 0.0) for c in CATEGORIES)
    if total <= 0:
        raise ConfigError("mixture weights must be positive")
    quotas = {c: n * mixture.get(c, 0.0) / total for c in CATEGORIES}
    counts = {c: math.floor(quotas[c]) for c in CATEGORIES}
    leftover = n - sum(counts.values())
    by_remainder = sorted(CATEGORIES, key=lambda c: (-(quotas[c] - counts[c]), c.index))
    for c in by_remainder[:leftover]:
        counts[c] += 1
    return counts


def _post_key(bank: TemplateBank) -> dict[str, tuple[EmotionCategory, int]]:
    """Rendered post string (any topic) -> (post category, template index)."""
    key = {}
    for cat in CATEGORIES:
        for idx, tpl in enumerate(bank.post_templates.get(cat, [])):
            for topic in bank.topics:
                key[tpl.format(topic=topic)] = (cat, idx)
    return key


def _response_for(bank: TemplateBank, post_cat: EmotionCategory, template_idx: int,
                  response_cat: EmotionCategory) -> str:
    """Deterministic response choice: the corpus maps (post template,
    response category) to exactly one response, so a lookup table can hit
    100% exact match and the mapping is learnable by a small model."""
    bucket = bank.response_templates[response_cat]
    return bucket[(7 * post_cat.index + 3 * template_idx + 11 * response_cat.index) % len(bucket)]


def generate_synthetic_corpus(
    seed: int,
    n_pairs: int,
    bank: TemplateBank | None = None,
    lexicon: EmotionLexicon | None = None,
    mixture: dict[EmotionCategory, float] | None = None,
    empathy: float = 0.6,
) -> tuple[list[DialoguePair], dict[EmotionCategory, int]]:
    """Deterministic synthetic corpus of post/response pairs.

    The response-category histogram follows `mixture` exactly (largest
    remainder). With probability `empathy` a pair's post carries the same
    emotion as its response, which makes the emotion-interaction matrix
    diagonally dominant. Every distinct post ends up with responses in at
    least two categories.
    """
    if n_pairs < 2:
        raise ConfigError("n_pairs must be at least 2")
    bank = bank or default_template_bank()
    lexicon = lexicon or default_lexicon()
    bank.validate(lexicon)
    mixture = mixture or DEFAULT_MIXTURE
    counts = apportion(mixture, n_pairs)
    if sum(1 for c in counts.values() if c > 0) < 2:
        raise ConfigError("mixture must allot pairs to at least two categories")

    rng = random.Random(seed)
    slots: list[EmotionCategory] = []
    for cat in CATEGORIES:
        slots.extend([cat] * counts[cat])
    rng.shuffle(slots)

    mix_cats = [c for c in CATEGORIES if mixture.get(c, 0.0) > 0]
    mix_weights = [mixture[c] for c in mix_cats]
    post_key = _post_key(bank)

    records: list[tuple[str, EmotionCategory]] = []  # (post string, response cat)
    for cat in slots:
        post_cat = cat if rng.random() < empathy else rng.choices(mix_cats, mix_weights)[0]
        if not bank.post_templates.get(post_cat):
            post_cat = cat
        idx = rng.randrange(len(bank.post_templates[post_cat]))
        topic = rng.choice(bank.topics)
        records.append((bank.post_templates[post_cat][idx].format(topic=topic), cat))

    _ensure_two_categories_per_post(records, rng)

    pairs = []
    for post, cat in records:
        post_cat, idx = post_key[post]
        response = _response_for(bank, post_cat, idx, cat)
        pairs.append(DialoguePair(post=tokenize(post), response=tokenize(response),
                                  emotion=cat))
    return pairs, counts


def _ensure_two_categories_per_post(records: list[tuple[str, EmotionCategory]],
                                    rng: random.Random) -> None:
    """Repair pass: every distinct post must carry >=2 response categories.
    Swapping categories between examples keeps the histogram exact;
    singleton posts are merged into another post instead."""
    for _ in range(2 * len(records) + 4):
        groups: dict[str, list[int]] = {}
        for i, (post, _) in enumerate(records):
            groups.setdefault(post, []).append(i)
        offenders = [(post, idxs) for post, idxs in groups.items()
                     if len({records[i][1] for i in idxs}) < 2]
        if not offenders:
            return
        post, idxs = offenders[0]
        cat = records[idxs[0]][1]
        if len(idxs) == 1:
            # merge the singleton into the largest differently-labeled group
            candidates = sorted(
                ((p, g) for p, g in groups.items()
                 if p != post and {records[i][1] for i in g} != {cat}),
                key=lambda pg: (-len(pg[1]), pg[0]))
            if not candidates:
                raise ConfigError("cannot give every post two response categories")
            records[idxs[0]] = (candidates[0][0], cat)
            continue
        donor = None
        for j, (other_post, other_cat) in enumerate(records):
            if other_post == post or other_cat == cat:
                continue
            rest = [records[i][1] for i in groups[other_post] if i != j]
            if len(set(rest) | {cat}) >= 2:
                donor = j
                break
        if donor is None:
            raise ConfigError("cannot give every post two response categories")
        records[idxs[-1]] = (post, records[donor][1])
        records[donor] = (records[donor][0], cat)
    raise ConfigError("post/category repair did not converge")
