"""Synthetic grounding benchmark.

Scenes are grids of colored shapes. Proposal features are one-hot
category and color codes plus Gaussian noise, so appearance lives in the
feature vectors while geometry only enters through the location features
the model computes itself. Queries come from three templates:

    subject:  "<color> <category>"
    location: "<spatial> <category>"      spatial in left/right/top/bottom/middle
    context:  "<category> near <category2>"

Each query has exactly one proposal satisfying its template predicate,
and the referent's category always appears at least twice in the scene,
so the category alone never disambiguates. Spatial words are ordinary
vocabulary tokens; nothing feeds their geometry to the language side.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Box, Dataset, Proposal, Query, Scene

SHAPE_LEXICON = ["circle", "square", "triangle", "star", "hexagon", "diamond", "ring", "cross", "arrow", "heart"]
COLOR_LEXICON = ["red", "green", "blue", "yellow", "purple", "orange", "cyan", "magenta", "brown", "white"]
SPATIAL_WORDS = ["left", "right", "top", "bottom", "middle"]
NEAR_WORD = "near"
UNK_WORD = "unk"

CELL_PIXELS = 32.0

QUERY_TYPES = ("subject", "location", "context")


class SynthesisError(RuntimeError):
    """Raised when a satisfiable scene cannot be drawn within the retry bound."""


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_scenes: int = 500
    proposals_per_scene: int = 8
    n_categories: int = 4
    n_colors: int = 4
    grid: tuple = (4, 4)
    noise_sigma: float = 0.1
    query_mix: tuple = (0.4, 0.4, 0.2)
    queries_per_scene: int = 3
    eval_scenes: int | None = None

    def __post_init__(self):
        rows, cols = self.grid
        mix = self.query_mix
        if len(mix) != 3 or any(m < 0 for m in mix):
            raise ValueError("query_mix must be three nonnegative fractions")
        if abs(sum(mix) - 1.0) > 1e-9:
            raise ValueError(f"query_mix must sum to 1, got {sum(mix)}")
        if self.proposals_per_scene > rows * cols:
            raise ValueError("more proposals than grid cells")
        if self.proposals_per_scene < 2:
            raise ValueError("need at least 2 proposals per scene")
        if self.n_categories < 1 or self.n_colors < 1:
            raise ValueError("need at least one category and one color")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.n_scenes < 1 or self.queries_per_scene < 1:
            raise ValueError("need at least one scene and one query per scene")

    @property
    def n_eval_scenes(self):
        return self.eval_scenes if self.eval_scenes is not None else max(1, self.n_scenes // 5)


def category_names(n):
    return [SHAPE_LEXICON[i] if i < len(SHAPE_LEXICON) else f"shape{i}" for i in range(n)]


def color_names(n):
    return [COLOR_LEXICON[i] if i < len(COLOR_LEXICON) else f"color{i}" for i in range(n)]


def build_vocab(config: SynthConfig):
    cats = category_names(config.n_categories)
    cols = color_names(config.n_colors)
    vocab = cats + cols + SPATIAL_WORDS + [NEAR_WORD, UNK_WORD]
    attribute_vocab = cols + SPATIAL_WORDS
    return vocab, attribute_vocab, cats, cols


def parse_template_query(tokens, dataset: Dataset):
    """Invert the query templates against a dataset's vocabularies.

    Returns (subject_word, object_word, attribute_labels); anything that
    is not a known template parses to (None, None, frozenset()).
    """
    null = (None, None, frozenset())
    vocab = dataset.vocab
    if any(not (0 <= t < len(vocab)) for t in tokens):
        return null
    words = [vocab[t] for t in tokens]
    cats = set(dataset.categories)
    attrs = dataset.attribute_vocab
    colors = [a for a in attrs if a not in SPATIAL_WORDS]
    if len(words) == 3 and words[1] == NEAR_WORD and words[0] in cats and words[2] in cats:
        return tokens[0], tokens[2], frozenset()
    if len(words) == 2 and words[1] in cats and (words[0] in colors or words[0] in SPATIAL_WORDS):
        if words[0] in attrs:
            return tokens[1], None, frozenset({attrs.index(words[0])})
        return tokens[1], None, frozenset()
    return null


def query_type(query: Query, dataset: Dataset) -> str:
    """Classify a query by its template family; 'other' when unknown."""
    if query.object_word is not None:
        return "context"
    words = [dataset.vocab[t] for t in query.tokens if 0 <= t < len(dataset.vocab)]
    if any(w in SPATIAL_WORDS for w in words):
        return "location"
    if query.subject_word is not None:
        return "subject"
    return "other"


def _centers(boxes):
    return np.array([b.center for b in boxes])


def location_referent(boxes, members, word, width, height):
    """Index (into ``members``) of the proposal a spatial word picks out.

    left/right/top/bottom take the extreme center coordinate; middle takes
    the center nearest the image center. Returns None on a tie.
    """
    centers = _centers([boxes[j] for j in members])
    if word == "left":
        keys = centers[:, 0]
    elif word == "right":
        keys = -centers[:, 0]
    elif word == "top":
        keys = centers[:, 1]
    elif word == "bottom":
        keys = -centers[:, 1]
    elif word == "middle":
        keys = np.hypot(centers[:, 0] - width / 2.0, centers[:, 1] - height / 2.0)
    else:
        raise ValueError(f"unknown spatial word {word!r}")
    best = int(np.argmin(keys))
    if np.sum(keys == keys[best]) != 1:
        return None
    return best


def context_referent(boxes, members, others):
    """Index (into ``members``) of the member nearest to any of ``others``.

    'near' means minimal center-to-center distance. Returns None on a tie.
    """
    if not others:
        return None
    member_centers = _centers([boxes[j] for j in members])
    other_centers = _centers([boxes[j] for j in others])
    dists = np.array([np.min(np.hypot(*(other_centers - c).T)) for c in member_centers])
    best = int(np.argmin(dists))
    if np.sum(dists == dists[best]) != 1:
        return None
    return best


def _draw_layout(rng, config: SynthConfig):
    rows, cols = config.grid
    n = config.proposals_per_scene
    cells = rng.choice(rows * cols, size=n, replace=False)
    boxes = []
    for cell in cells:
        r, c = divmod(int(cell), cols)
        side = CELL_PIXELS * rng.uniform(0.45, 0.85)
        x0 = c * CELL_PIXELS + rng.uniform(0.0, CELL_PIXELS - side)
        y0 = r * CELL_PIXELS + rng.uniform(0.0, CELL_PIXELS - side)
        boxes.append(Box(x0, y0, x0 + side, y0 + side))
    cats = rng.integers(0, config.n_categories, size=n)
    colors = rng.integers(0, config.n_colors, size=n)
    return boxes, cats, colors


def _members_of(cats, cat):
    return [j for j in range(len(cats)) if cats[j] == cat]


def _make_query(rng, qtype, boxes, cats, colors, config, vocab, attribute_vocab, cat_names, col_names, width, height):
    """One query of the requested type, or None when the layout cannot
    support it unambiguously."""
    n = len(boxes)
    counts = np.bincount(cats, minlength=config.n_categories)
    duplicated = [c for c in range(config.n_categories) if counts[c] >= 2]
    if not duplicated:
        return None

    def tid(word):
        return vocab.index(word)

    if qtype == "subject":
        options = []
        for c in duplicated:
            members = _members_of(cats, c)
            for j in members:
                same = [k for k in members if colors[k] == colors[j]]
                if len(same) == 1:
                    options.append(j)
        if not options:
            return None
        ref = int(options[rng.integers(0, len(options))])
        color_word = col_names[colors[ref]]
        cat_word = cat_names[cats[ref]]
        tokens = [tid(color_word), tid(cat_word)]
        return Query(
            tokens=tokens,
            subject_word=tid(cat_word),
            object_word=None,
            attribute_labels=frozenset({attribute_vocab.index(color_word)}),
            gt_index=ref,
        )

    if qtype == "location":
        cat = int(duplicated[rng.integers(0, len(duplicated))])
        members = _members_of(cats, cat)
        word = SPATIAL_WORDS[rng.integers(0, len(SPATIAL_WORDS))]
        pick = location_referent(boxes, members, word, width, height)
        if pick is None:
            return None
        cat_word = cat_names[cat]
        tokens = [tid(word), tid(cat_word)]
        return Query(
            tokens=tokens,
            subject_word=tid(cat_word),
            object_word=None,
            attribute_labels=frozenset({attribute_vocab.index(word)}),
            gt_index=members[pick],
        )

    if qtype == "context":
        options = [c for c in duplicated if counts[c] < n]
        if not options:
            return None
        cat = int(options[rng.integers(0, len(options))])
        members = _members_of(cats, cat)
        other_cats = sorted({int(c) for c in cats if c != cat})
        other_cat = int(other_cats[rng.integers(0, len(other_cats))])
        others = _members_of(cats, other_cat)
        pick = context_referent(boxes, members, others)
        if pick is None:
            return None
        tokens = [tid(cat_names[cat]), tid(NEAR_WORD), tid(cat_names[other_cat])]
        return Query(
            tokens=tokens,
            subject_word=tid(cat_names[cat]),
            object_word=tid(cat_names[other_cat]),
            attribute_labels=frozenset(),
            gt_index=members[pick],
        )

    raise ValueError(f"unknown query type {qtype!r}")


def _one_hot_features(rng, cats, colors, config):
    n = len(cats)
    dim = config.n_categories + config.n_colors
    base = np.zeros((n, dim))
    base[np.arange(n), cats] = 1.0
    base[np.arange(n), config.n_categories + colors] = 1.0
    subject = base + rng.normal(0.0, config.noise_sigma, size=(n, dim))
    context = base + rng.normal(0.0, config.noise_sigma, size=(n, dim))
    return subject, context


def _generate_scene(config: SynthConfig, split: int, index: int, vocab, attribute_vocab, cat_names, col_names, retries=40):
    rows, cols = config.grid
    width, height = cols * CELL_PIXELS, rows * CELL_PIXELS
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, split, index]))
    mix = np.asarray(config.query_mix, dtype=np.float64)
    mix = mix / mix.sum()
    for _ in range(retries):
        boxes, cats, colors = _draw_layout(rng, config)
        counts = np.bincount(cats, minlength=config.n_categories)
        if not np.any(counts >= 2):
            continue
        queries = []
        ok = True
        for _ in range(config.queries_per_scene):
            query = None
            for _ in range(retries):
                qtype = QUERY_TYPES[rng.choice(3, p=mix)]
                query = _make_query(rng, qtype, boxes, cats, colors, config, vocab, attribute_vocab, cat_names, col_names, width, height)
                if query is not None:
                    break
            if query is None:
                ok = False
                break
            queries.append(query)
        if not ok:
            continue
        subject_feats, context_feats = _one_hot_features(rng, cats, colors, config)
        proposals = [
            Proposal(boxes[j], int(cats[j]), subject_feats[j], context_feats[j])
            for j in range(len(boxes))
        ]
        return Scene(width, height, proposals, queries)
    raise SynthesisError(f"could not draw a satisfiable scene after {retries} attempts (seed={config.seed}, index={index})")


def generate(config: SynthConfig):
    """Build (train, eval) datasets from the config; fully deterministic."""
    vocab, attribute_vocab, cat_names, col_names = build_vocab(config)
    dim = config.n_categories + config.n_colors

    def make_split(split_id, count):
        ds = Dataset(
            vocab=list(vocab),
            attribute_vocab=list(attribute_vocab),
            categories=list(cat_names),
            subject_dim=dim,
            context_dim=dim,
        )
        for i in range(count):
            ds.scenes.append(_generate_scene(config, split_id, i, vocab, attribute_vocab, cat_names, col_names))
        return ds

    return make_split(0, config.n_scenes), make_split(1, config.n_eval_scenes)


def toy_word_table(dataset: Dataset):
    """Orthogonal word vectors over the dataset vocabulary and categories."""
    from .entity import WordVectorTable

    words = [w for w in dataset.vocab if w != UNK_WORD] + [c for c in dataset.categories if c not in dataset.vocab]
    return WordVectorTable.orthogonal(words)


def satisfiers(scene: Scene, query: Query, dataset: Dataset):
    """Brute-force list of proposal indices satisfying a template query.

    Independent of the generator's construction; used to verify that the
    ground truth is the unique satisfier.
    """
    qtype = query_type(query, dataset)
    boxes = [p.box for p in scene.proposals]
    cats = [p.category_id for p in scene.proposals]
    if query.subject_word is None:
        return []
    subject_name = dataset.vocab[query.subject_word]
    if subject_name not in dataset.categories:
        return []
    subject_cat = dataset.categories.index(subject_name)
    members = [j for j in range(len(cats)) if cats[j] == subject_cat]
    if qtype == "location":
        word = next(w for w in (dataset.vocab[t] for t in query.tokens) if w in SPATIAL_WORDS)
        pick = location_referent(boxes, members, word, scene.width, scene.height)
        return [] if pick is None else [members[pick]]
    if qtype == "context":
        object_name = dataset.vocab[query.object_word]
        if object_name not in dataset.categories:
            return []
        object_cat = dataset.categories.index(object_name)
        others = [j for j in range(len(cats)) if cats[j] == object_cat]
        pick = context_referent(boxes, members, others)
        return [] if pick is None else [members[pick]]
    # subject template: the color attribute must single out one member,
    # but color only exists in the features, so recover it from the tokens
    color_word = dataset.vocab[query.tokens[0]]
    color_names_all = [a for a in dataset.attribute_vocab if a not in SPATIAL_WORDS]
    if color_word not in color_names_all:
        return []
    return [j for j in members if _feature_color(scene.proposals[j], dataset, len(dataset.categories)) == color_names_all.index(color_word)]


def _feature_color(proposal: Proposal, dataset: Dataset, n_categories: int):
    """Recover the color code from the one-hot block of the feature."""
    color_block = proposal.subject_feature[n_categories:]
    return int(np.argmax(color_block))
