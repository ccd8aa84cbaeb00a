"""Consistency re-ranking of recommended tag lists.

The pairwise confidence measure (PCM) between two tags combines the
overlap ratio of their user lists and of their item lists. Candidates
get their score multiplied by (1 + PCM(reference -> candidate)) and the
list is re-sorted; the adapted variant keeps the original list unless the
re-ranked one overlaps the user/item tag profiles strictly better.

PCM values are computed in exact integer-ratio arithmetic and converted
to float once, so they are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import Folksonomy
from .ranking import RankedTags
from .validation import check_choice, check_folksonomy, check_positive_int

DIMENSION_CHOICES = ("item", "user", "both")
PROFILE_CHOICES = ("user", "item", "both")


@dataclass(frozen=True)
class PcmConfig:
    """Which association dimensions to mine and how to combine them.

    With ``dimensions='both'`` the two overlap ratios sum to at most 2;
    ``normalize`` halves the sum so the measure stays in [0, 1], which is
    what the half-score pruning bound assumes. Raw (unnormalized) mode is
    kept for study; pruning then uses a third-score bound instead.
    """

    dimensions: str = "both"
    normalize: bool = True
    refs: int = 1

    def __post_init__(self):
        check_choice("dimensions", self.dimensions, DIMENSION_CHOICES)
        check_positive_int("refs", self.refs)

    @property
    def max_multiplier(self) -> float:
        if self.dimensions == "both" and not self.normalize:
            return 3.0
        return 2.0

    @classmethod
    def from_mapping(cls, kv: Mapping[str, str]) -> "PcmConfig":
        out = cls()
        updates = {}
        if "pcm_dims" in kv:
            updates["dimensions"] = kv["pcm_dims"]
        if "pcm_normalize" in kv:
            updates["normalize"] = kv["pcm_normalize"].strip().lower() in ("1", "true", "yes", "on")
        if "refs" in kv:
            updates["refs"] = int(kv["refs"])
        return replace(out, **updates) if updates else out

    @classmethod
    def from_file(cls, path) -> "PcmConfig":
        from .config import read_kv
        return cls.from_mapping(read_kv(path))


def pcm(train: Folksonomy, t: int, t2: int, cfg: PcmConfig | None = None) -> float:
    """Confidence that tag t2 is used alongside tag t.

    Each ratio is |lists intersection| / |list of t|, defined as 0 when t
    never occurs. Exact rational arithmetic, rounded to float once.
    """
    cfg = cfg or PcmConfig()
    total = Fraction(0)
    if cfg.dimensions in ("user", "both"):
        users_t = train.users_of_tag.get(t)
        if users_t:
            users_t2 = train.users_of_tag.get(t2, ())
            total += Fraction(sum(1 for u in users_t if u in users_t2), len(users_t))
    if cfg.dimensions in ("item", "both"):
        items_t = train.items_of_tag.get(t)
        if items_t:
            items_t2 = train.items_of_tag.get(t2, ())
            total += Fraction(sum(1 for i in items_t if i in items_t2), len(items_t))
    if cfg.dimensions == "both" and cfg.normalize:
        total /= 2
    return float(total)


def prune(d: RankedTags, k: int, max_boost: float = 2.0) -> RankedTags:
    """Drop entries that cannot reach the top k after re-ranking.

    A tag scoring below score(d[k]) / max_boost cannot overtake the k-th
    tag even at the maximal multiplier, so it is discarded. Bypassed when
    the list is short or contains negative scores (factorization output).
    """
    check_positive_int("k", k)
    if len(d) <= k:
        return d
    if any(score < 0.0 for _, score in d):
        return d
    threshold = d[k - 1][1] / max_boost
    return RankedTags(tuple(e for e in d.entries if e[1] >= threshold))


def _reference_tags(d: RankedTags, cfg: PcmConfig) -> list[int]:
    return [t for t, _ in d.entries[:cfg.refs]]


def _multiplier(train: Folksonomy, refs: list[int], t: int, cfg: PcmConfig) -> float:
    total = 0.0
    for r in refs:
        total += pcm(train, r, t, cfg)
    return 1.0 + total / len(refs)


def rerank(train: Folksonomy, d: RankedTags, k: int, cfg: PcmConfig | None = None) -> RankedTags:
    """Rescore every tag by (1 + mean PCM from the reference tags) times
    its score, re-sort, and keep the best k."""
    cfg = cfg or PcmConfig()
    check_positive_int("k", k)
    if not d:
        raise ValueError("cannot re-rank an empty tag list")
    refs = _reference_tags(d, cfg)
    boosted = [(t, _multiplier(train, refs, t, cfg) * s) for t, s in d]
    return RankedTags.from_scores(boosted, limit=k)


def rerank_with_reference(train: Folksonomy, d: RankedTags, k: int,
                          cfg: PcmConfig | None = None, ref_position: int = 1) -> RankedTags:
    """Re-rank against the single reference at 1-based ``ref_position``."""
    cfg = cfg or PcmConfig()
    check_positive_int("k", k)
    check_positive_int("ref_position", ref_position)
    if ref_position > len(d):
        raise ValueError(f"ref_position {ref_position} exceeds list length {len(d)}")
    ref = d[ref_position - 1][0]
    boosted = [(t, (1.0 + pcm(train, ref, t, cfg)) * s) for t, s in d]
    return RankedTags.from_scores(boosted, limit=k)


def _overlap(tags: tuple[int, ...], user_prof: frozenset[int] | set[int],
             item_prof: frozenset[int] | set[int], which: str) -> int:
    n = 0
    if which in ("user", "both"):
        n += sum(1 for t in tags if t in user_prof)
    if which in ("item", "both"):
        n += sum(1 for t in tags if t in item_prof)
    return n


def contribution(before: RankedTags, after: RankedTags, k: int,
                 user_prof: set[int], item_prof: set[int], which: str = "both") -> int:
    """Profile-overlap change of the top k between two rankings."""
    check_choice("which", which, PROFILE_CHOICES)
    b = before.top(k).tags()
    a = after.top(k).tags()
    return _overlap(a, user_prof, item_prof, which) - _overlap(b, user_prof, item_prof, which)


@dataclass(frozen=True)
class RerankOutcome:
    """Final list plus whether re-ranking replaced the input order."""

    final: RankedTags
    applied: bool
    contribution: int


def adapted_rerank(train: Folksonomy, d: RankedTags, k: int, cfg: PcmConfig | None,
                   user_prof: set[int], item_prof: set[int], which: str = "both") -> RerankOutcome:
    """Re-rank, but keep the original top k unless the profile overlap
    strictly improves."""
    reranked = rerank(train, d, k, cfg)
    c = contribution(d, reranked, k, user_prof, item_prof, which)
    if c > 0:
        return RerankOutcome(final=reranked, applied=True, contribution=c)
    return RerankOutcome(final=d.top(k), applied=False, contribution=c)


def debug_rows(train: Folksonomy, d: RankedTags,
               cfg: PcmConfig | None = None) -> list[tuple[int, float, float, float]]:
    """(tag, raw score, mean reference PCM, boosted score) per candidate."""
    cfg = cfg or PcmConfig()
    if not d:
        return []
    refs = _reference_tags(d, cfg)
    rows = []
    for t, s in d:
        mult = _multiplier(train, refs, t, cfg)
        rows.append((t, s, mult - 1.0, mult * s))
    return rows


class FoldConsReranker(BaseEstimator):
    """Estimator wrapper: fit on the training corpus, transform rankings.

    ``profile`` selects which tag profiles gate the adapted variant; it is
    only consulted when ``adapted=True``.
    """

    def __init__(self, dimensions: str = "both", normalize: bool = True, refs: int = 1,
                 ref_position: int | None = None, adapted: bool = False,
                 profile: str = "both", prune_candidates: bool = True):
        self.dimensions = dimensions
        self.normalize = normalize
        self.refs = refs
        self.ref_position = ref_position
        self.adapted = adapted
        self.profile = profile
        self.prune_candidates = prune_candidates

    def pcm_config(self) -> PcmConfig:
        return PcmConfig(dimensions=self.dimensions, normalize=self.normalize, refs=self.refs)

    def fit(self, corpus: Folksonomy, y=None):
        check_choice("profile", self.profile, PROFILE_CHOICES)
        self.corpus_ = check_folksonomy(corpus)
        return self

    def rerank_post(self, d: RankedTags, k: int, user: int | None = None,
                    item: int | None = None) -> RerankOutcome:
        check_is_fitted(self)
        cfg = self.pcm_config()
        if not d:
            return RerankOutcome(final=RankedTags.empty(), applied=False, contribution=0)
        work = prune(d, k, cfg.max_multiplier) if self.prune_candidates else d
        if self.ref_position is not None:
            if self.ref_position > len(work):
                # no tag at that rank: nothing to re-rank against
                return RerankOutcome(final=d.top(k), applied=False, contribution=0)
            final = rerank_with_reference(self.corpus_, work, k, cfg, self.ref_position)
            return RerankOutcome(final=final, applied=True, contribution=0)
        if self.adapted:
            user_prof = self.corpus_.user_profile.get(user, set()) if user is not None else set()
            item_prof = self.corpus_.item_profile.get(item, set()) if item is not None else set()
            return adapted_rerank(self.corpus_, work, k, cfg, user_prof, item_prof, self.profile)
        final = rerank(self.corpus_, work, k, cfg)
        return RerankOutcome(final=final, applied=True, contribution=0)

    def transform(self, d: RankedTags, k: int, user: int | None = None,
                  item: int | None = None) -> RankedTags:
        return self.rerank_post(d, k, user=user, item=item).final
