"""Folksonomy data model: ingestion, indices, p-core filtering and splits.

A folksonomy is a set of (user, item, tag) assignments. A *post* is a
(user, item) pair together with all tags that user put on that item.
Entities are interned to dense integer ids at parse time; the string
dictionary travels with the corpus so snapshots are self-describing.
"""

from __future__ import annotations

import io
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

SNAPSHOT_MAGIC = "#folkrec-corpus v1"


class ParseError(ValueError):
    """Malformed input row. Carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ValidationError(ValueError):
    """A structural constraint on a corpus or split does not hold."""


class Triple(NamedTuple):
    user: int
    item: int
    tag: int


@dataclass(frozen=True)
class DatasetFormatConfig:
    """Column layout of a delimiter-separated tagging dump.

    Covers both HetRec-style (user, item, tag, ...) and BibSonomy
    tas-style (user, tag, item, ...) files via the column indices.
    """

    user_col: int = 0
    item_col: int = 1
    tag_col: int = 2
    delimiter: str = "\t"
    has_header: bool = False
    lowercase_tags: bool = True

    def __post_init__(self):
        cols = (self.user_col, self.item_col, self.tag_col)
        if len(set(cols)) != 3:
            raise ValueError(f"column indices must be pairwise distinct, got {cols}")
        if min(cols) < 0:
            raise ValueError(f"column indices must be non-negative, got {cols}")


class Vocabulary:
    """Bidirectional string <-> dense-id dictionary for users, items and tags."""

    def __init__(self):
        self.users: list[str] = []
        self.items: list[str] = []
        self.tags: list[str] = []
        self._user_ids: dict[str, int] = {}
        self._item_ids: dict[str, int] = {}
        self._tag_ids: dict[str, int] = {}

    def _intern(self, name: str, names: list[str], ids: dict[str, int], frozen: bool, kind: str) -> int:
        idx = ids.get(name)
        if idx is None:
            if frozen:
                raise ValidationError(f"unknown {kind} {name!r}")
            idx = len(names)
            names.append(name)
            ids[name] = idx
        return idx

    def intern_user(self, name: str, frozen: bool = False) -> int:
        return self._intern(name, self.users, self._user_ids, frozen, "user")

    def intern_item(self, name: str, frozen: bool = False) -> int:
        return self._intern(name, self.items, self._item_ids, frozen, "item")

    def intern_tag(self, name: str, frozen: bool = False) -> int:
        return self._intern(name, self.tags, self._tag_ids, frozen, "tag")

    def user_id(self, name: str) -> int | None:
        return self._user_ids.get(name)

    def item_id(self, name: str) -> int | None:
        return self._item_ids.get(name)

    def tag_id(self, name: str) -> int | None:
        return self._tag_ids.get(name)


@dataclass
class ParseResult:
    triples: list[Triple]
    vocab: Vocabulary
    collapsed_duplicates: int


def _open_lines(source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
        return
    if isinstance(source, bytes):
        yield from io.StringIO(source.decode("utf-8"))
        return
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        yield from io.StringIO(data)
        return
    yield from source  # already an iterable of lines


def parse_triples(source, cfg: DatasetFormatConfig | None = None, *,
                  vocab: Vocabulary | None = None, frozen: bool = False) -> ParseResult:
    """Parse a delimiter-separated tagging dump into interned triples.

    Exact duplicate rows collapse silently (a user tags an item with a
    given tag at most once); the number of collapsed rows is reported.
    With ``frozen=True`` an entity missing from ``vocab`` raises
    :class:`ValidationError` instead of being interned.
    """
    cfg = cfg or DatasetFormatConfig()
    vocab = vocab if vocab is not None else Vocabulary()
    need = max(cfg.user_col, cfg.item_col, cfg.tag_col) + 1
    triples: list[Triple] = []
    seen: set[Triple] = set()
    collapsed = 0
    for line_no, raw in enumerate(_open_lines(source), start=1):
        if cfg.has_header and line_no == 1:
            continue
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        fields = line.split(cfg.delimiter)
        if len(fields) < need:
            raise ParseError(
                f"expected at least {need} columns, got {len(fields)}", line_no)
        user = fields[cfg.user_col].strip()
        item = fields[cfg.item_col].strip()
        tag = fields[cfg.tag_col].strip()
        if not user or not item or not tag:
            raise ParseError("empty user/item/tag field", line_no)
        if cfg.lowercase_tags:
            tag = tag.lower()
        triple = Triple(
            vocab.intern_user(user, frozen),
            vocab.intern_item(item, frozen),
            vocab.intern_tag(tag, frozen),
        )
        if triple in seen:
            collapsed += 1
            continue
        seen.add(triple)
        triples.append(triple)
    return ParseResult(triples, vocab, collapsed)


def p_core(triples: Sequence[Triple], p: int) -> list[Triple]:
    """Maximal sub-folksonomy where every user, item and tag occurs in >= p posts.

    Computed by queue-based cascading deletion: any entity below the
    threshold is removed together with its triples, which may push other
    entities below threshold, until a fixpoint. Input order of the
    surviving triples is preserved; p=1 returns the input unchanged.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 1 or not triples:
        return list(triples)

    alive: set[Triple] = set(triples)
    post_tags: dict[tuple[int, int], set[int]] = defaultdict(set)
    user_posts: dict[int, set[int]] = defaultdict(set)   # user -> items posted on
    item_posts: dict[int, set[int]] = defaultdict(set)   # item -> users posting
    tag_posts: dict[int, set[tuple[int, int]]] = defaultdict(set)
    for u, i, t in alive:
        post_tags[(u, i)].add(t)
        user_posts[u].add(i)
        item_posts[i].add(u)
        tag_posts[t].add((u, i))

    queue: list[tuple[str, int]] = []
    queued: set[tuple[str, int]] = set()

    def enqueue(kind: str, entity: int):
        key = (kind, entity)
        if key not in queued:
            queued.add(key)
            queue.append(key)

    for u in user_posts:
        if len(user_posts[u]) < p:
            enqueue("user", u)
    for i in item_posts:
        if len(item_posts[i]) < p:
            enqueue("item", i)
    for t in tag_posts:
        if len(tag_posts[t]) < p:
            enqueue("tag", t)

    def drop_triple(u: int, i: int, t: int):
        alive.discard(Triple(u, i, t))
        tags = post_tags[(u, i)]
        tags.discard(t)
        posts = tag_posts[t]
        posts.discard((u, i))
        if len(posts) < p:
            enqueue("tag", t)
        if not tags:
            # the post vanished entirely
            user_posts[u].discard(i)
            item_posts[i].discard(u)
            if len(user_posts[u]) < p:
                enqueue("user", u)
            if len(item_posts[i]) < p:
                enqueue("item", i)

    while queue:
        kind, entity = queue.pop()
        if kind == "user":
            for i in list(user_posts[entity]):
                for t in list(post_tags[(entity, i)]):
                    drop_triple(entity, i, t)
        elif kind == "item":
            for u in list(item_posts[entity]):
                for t in list(post_tags[(u, entity)]):
                    drop_triple(u, entity, t)
        else:
            for (u, i) in list(tag_posts[entity]):
                drop_triple(u, i, entity)

    return [tr for tr in triples if tr in alive]


class Folksonomy:
    """Immutable triple store with the inverted indices used by the scorers.

    All indices are derived from ``triples`` at construction and must not
    be mutated afterwards; concurrent reads are safe.
    """

    def __init__(self, triples: Iterable[Triple]):
        deduped: list[Triple] = []
        seen: set[Triple] = set()
        for tr in triples:
            tr = Triple(*tr)
            if tr not in seen:
                seen.add(tr)
                deduped.append(tr)
        self.triples: tuple[Triple, ...] = tuple(deduped)
        self._triple_set = seen

        self.users_of_tag: dict[int, set[int]] = defaultdict(set)     # U(t)
        self.items_of_tag: dict[int, set[int]] = defaultdict(set)     # I(t)
        self.user_profile: dict[int, set[int]] = defaultdict(set)     # T(u)
        self.item_profile: dict[int, set[int]] = defaultdict(set)     # T(i)
        self.tag_item_freq: dict[tuple[int, int], int] = defaultdict(int)  # tf(t,i)
        self.posts: dict[tuple[int, int], set[int]] = defaultdict(set)     # T(u,i)
        self.items_of_user: dict[int, set[int]] = defaultdict(set)
        self.taggers: dict[tuple[int, int], list[int]] = defaultdict(list)  # (i,t) -> users, sorted

        for u, i, t in self.triples:
            self.users_of_tag[t].add(u)
            self.items_of_tag[t].add(i)
            self.user_profile[u].add(t)
            self.item_profile[i].add(t)
            self.tag_item_freq[(t, i)] += 1
            self.posts[(u, i)].add(t)
            self.items_of_user[u].add(i)
            self.taggers[(i, t)].append(u)
        for key in self.taggers:
            self.taggers[key].sort()

        # freeze: plain dicts so lookups of missing keys cannot insert
        self.users_of_tag = dict(self.users_of_tag)
        self.items_of_tag = dict(self.items_of_tag)
        self.user_profile = dict(self.user_profile)
        self.item_profile = dict(self.item_profile)
        self.tag_item_freq = dict(self.tag_item_freq)
        self.posts = dict(self.posts)
        self.items_of_user = dict(self.items_of_user)
        self.taggers = dict(self.taggers)

        self.users = frozenset(self.user_profile)
        self.items = frozenset(self.item_profile)
        self.tags = frozenset(self.users_of_tag)

    def __len__(self) -> int:
        return len(self.triples)

    @property
    def n_posts(self) -> int:
        return len(self.posts)

    def tf(self, tag: int, item: int) -> int:
        return self.tag_item_freq.get((tag, item), 0)

    def post_tags(self, user: int, item: int) -> set[int]:
        return self.posts.get((user, item), set())

    # id-space bounds, used to size factor matrices
    @property
    def user_bound(self) -> int:
        return max(self.users) + 1 if self.users else 0

    @property
    def item_bound(self) -> int:
        return max(self.items) + 1 if self.items else 0

    @property
    def tag_bound(self) -> int:
        return max(self.tags) + 1 if self.tags else 0

    def stats(self) -> dict[str, int]:
        return {
            "users": len(self.users),
            "items": len(self.items),
            "tags": len(self.tags),
            "posts": self.n_posts,
            "triples": len(self.triples),
        }


def build(triples: Iterable[Triple]) -> Folksonomy:
    """Build all inverted indices from a triple list."""
    return Folksonomy(triples)


@dataclass
class Split:
    """Train corpus plus held-out test posts.

    Every test (user, item) pair is absent from the train triples. For
    fixed-protocol splits every test user, item and tag is additionally
    contained in train (checked by :func:`load_fixed_split`).
    """

    train: Folksonomy
    test: list[tuple[int, int, frozenset[int]]]
    seed: int | None = None
    vocab: Vocabulary | None = field(default=None, repr=False)


def leave_post_out(f: Folksonomy, seed: int) -> Split:
    """Move one randomly chosen post per user into the test set.

    Deterministic for a fixed seed: users are visited in id order and a
    single item is drawn per user from their sorted post list.
    """
    rng = random.Random(seed)
    held: set[tuple[int, int]] = set()
    test: list[tuple[int, int, frozenset[int]]] = []
    for u in sorted(f.users):
        items = sorted(f.items_of_user[u])
        if not items:
            raise ValidationError(f"user {u} has no posts")
        i = items[rng.randrange(len(items))]
        held.add((u, i))
        test.append((u, i, frozenset(f.posts[(u, i)])))
    train_triples = [tr for tr in f.triples if (tr.user, tr.item) not in held]
    return Split(train=build(train_triples), test=test, seed=seed)


def fixed_split_from_corpus(train: Folksonomy, vocab: Vocabulary, test_source,
                            cfg: DatasetFormatConfig | None = None) -> Split:
    """Attach a raw test file to an already-built train corpus.

    The test file is parsed against the train dictionary in frozen mode,
    so any test user, item or tag absent from train raises
    :class:`ValidationError` naming the offending entity.
    """
    cfg = cfg or DatasetFormatConfig()
    test_parsed = parse_triples(test_source, cfg, vocab=vocab, frozen=True)
    by_post: dict[tuple[int, int], set[int]] = defaultdict(set)
    for u, i, t in test_parsed.triples:
        if (u, i) in train.posts:
            raise ValidationError(f"test post ({u}, {i}) also present in train")
        by_post[(u, i)].add(t)
    test = [(u, i, frozenset(tags)) for (u, i), tags in sorted(by_post.items())]
    return Split(train=train, test=test, seed=None, vocab=vocab)


def load_fixed_split(train_source, test_source, cfg: DatasetFormatConfig | None = None) -> Split:
    """Load a pre-defined train/test split from two raw files."""
    cfg = cfg or DatasetFormatConfig()
    train_parsed = parse_triples(train_source, cfg)
    train = build(train_parsed.triples)
    return fixed_split_from_corpus(train, train_parsed.vocab, test_source, cfg)


def snapshot_text(f: Folksonomy, vocab: Vocabulary) -> str:
    """Serialize the interned corpus plus its id dictionary, format v1.

    Line-oriented UTF-8 text; layout documented in README. Output is
    deterministic: dictionary rows in id order, triples sorted.
    """
    lines = [SNAPSHOT_MAGIC]
    lines.append(f"users {len(vocab.users)}")
    lines.append(f"items {len(vocab.items)}")
    lines.append(f"tags {len(vocab.tags)}")
    lines.append(f"triples {len(f.triples)}")
    for name in vocab.users:
        lines.append(f"U\t{name}")
    for name in vocab.items:
        lines.append(f"I\t{name}")
    for name in vocab.tags:
        lines.append(f"T\t{name}")
    for u, i, t in sorted(f.triples):
        lines.append(f"S\t{u}\t{i}\t{t}")
    return "\n".join(lines) + "\n"


def save_snapshot(f: Folksonomy, vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_text(snapshot_text(f, vocab), encoding="utf-8")


def load_snapshot(path: str | Path) -> tuple[Folksonomy, Vocabulary]:
    """Read a v1 corpus snapshot back into a Folksonomy and its dictionary."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != SNAPSHOT_MAGIC:
        raise ValidationError(f"{path}: not a folkrec corpus snapshot (v1)")
    counts = {}
    for row in lines[1:5]:
        key, _, value = row.partition(" ")
        counts[key] = int(value)
    vocab = Vocabulary()
    triples: list[Triple] = []
    for row in lines[5:]:
        kind, _, rest = row.partition("\t")
        if kind == "U":
            vocab.intern_user(rest)
        elif kind == "I":
            vocab.intern_item(rest)
        elif kind == "T":
            vocab.intern_tag(rest)
        elif kind == "S":
            u, i, t = rest.split("\t")
            triples.append(Triple(int(u), int(i), int(t)))
        else:
            raise ValidationError(f"{path}: unknown snapshot row kind {kind!r}")
    if (len(vocab.users) != counts.get("users") or len(vocab.items) != counts.get("items")
            or len(vocab.tags) != counts.get("tags") or len(triples) != counts.get("triples")):
        raise ValidationError(f"{path}: snapshot counts do not match body")
    return build(triples), vocab
