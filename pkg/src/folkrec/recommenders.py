"""Tag scorers and their estimator wrappers.

Three recommenders share one surface: fit on a training Folksonomy, then
rank candidate tags for a (user, item) post.

* ``BaselineRecommender`` — item frequency plus the user's own usage count.
* ``StrecRecommender`` — network-aware: blends item tag frequency with a
  proximity-weighted count of the querying user's neighbors who used the
  tag on the item.
* ``PitfRecommender`` — pairwise-interaction factorization trained with
  ranking SGD on (observed tag, unobserved tag) pairs.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import Folksonomy
from .graph import ProximityMode, SocialGraph, build_dice_graph, proximities_from
from .ranking import RankedTags
from .validation import check_folksonomy, check_positive_int, check_unit_interval

MODEL_MAGIC = b"FRPITF01"


@dataclass(frozen=True)
class StrecConfig:
    """Blend weight and neighborhood reach of the network-aware scorer."""

    alpha: float = 0.05
    proximity_mode: ProximityMode = ProximityMode.direct()

    def __post_init__(self):
        check_unit_interval("alpha", self.alpha)

    @classmethod
    def from_mapping(cls, kv: Mapping[str, str]) -> "StrecConfig":
        alpha = float(kv.get("alpha", cls.alpha))
        kind = kv.get("proximity", "direct")
        depth = int(kv.get("path_depth", 2))
        mode = ProximityMode.direct() if kind == "direct" else ProximityMode.path(depth)
        return cls(alpha=alpha, proximity_mode=mode)

    @classmethod
    def from_file(cls, path) -> "StrecConfig":
        from .config import read_kv
        return cls.from_mapping(read_kv(path))


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the pairwise-ranking factorization trainer.

    One iteration draws as many SGD samples as there are training triples.
    """

    k: int = 64
    learning_rate: float = 0.05
    regularization: float = 5e-5
    iterations: int = 100
    init_stddev: float = 0.01
    seed: int = 0

    def __post_init__(self):
        check_positive_int("k", self.k)
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.regularization < 0:
            raise ValueError(f"regularization must be >= 0, got {self.regularization}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.init_stddev <= 0:
            raise ValueError(f"init_stddev must be > 0, got {self.init_stddev}")

    @classmethod
    def from_mapping(cls, kv: Mapping[str, str]) -> "TrainConfig":
        out = cls()
        casts = {"k": int, "learning_rate": float, "regularization": float,
                 "iterations": int, "init_stddev": float, "seed": int}
        updates = {key: cast(kv[key]) for key, cast in casts.items() if key in kv}
        return replace(out, **updates) if updates else out

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        from .config import read_kv
        return cls.from_mapping(read_kv(path))


@dataclass
class FactorModel:
    """Latent matrices: user, item, and one tag matrix per interaction side."""

    user_factors: np.ndarray       # (n_users, k)
    item_factors: np.ndarray       # (n_items, k)
    tag_factors_user: np.ndarray   # (n_tags, k)
    tag_factors_item: np.ndarray   # (n_tags, k)

    def __post_init__(self):
        k = self.user_factors.shape[1]
        for m in (self.item_factors, self.tag_factors_user, self.tag_factors_item):
            if m.shape[1] != k:
                raise ValueError("all factor matrices must share the same dimension")
        if self.tag_factors_user.shape[0] != self.tag_factors_item.shape[0]:
            raise ValueError("the two tag matrices must have the same number of rows")
        for m in (self.user_factors, self.item_factors, self.tag_factors_user, self.tag_factors_item):
            if not np.isfinite(m).all():
                raise ValueError("factor matrices contain non-finite values")

    @property
    def k(self) -> int:
        return self.user_factors.shape[1]

    @property
    def n_users(self) -> int:
        return self.user_factors.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_factors.shape[0]

    @property
    def n_tags(self) -> int:
        return self.tag_factors_user.shape[0]

    def to_bytes(self) -> bytes:
        """Versioned flat binary: magic, four uint64 dims, float64 matrices."""
        parts = [MODEL_MAGIC,
                 struct.pack("<4Q", self.n_users, self.n_items, self.n_tags, self.k)]
        for m in (self.user_factors, self.item_factors,
                  self.tag_factors_user, self.tag_factors_item):
            parts.append(np.ascontiguousarray(m, dtype=np.float64).tobytes())
        return b"".join(parts)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "FactorModel":
        with open(path, "rb") as fh:
            magic = fh.read(len(MODEL_MAGIC))
            if magic != MODEL_MAGIC:
                raise ValueError(f"{path}: not a folkrec factor model (v1)")
            n_users, n_items, n_tags, k = struct.unpack("<4Q", fh.read(32))
            def read(rows):
                buf = fh.read(rows * k * 8)
                if len(buf) != rows * k * 8:
                    raise ValueError(f"{path}: truncated factor model")
                return np.frombuffer(buf, dtype=np.float64).reshape(rows, k).copy()
            return cls(read(n_users), read(n_items), read(n_tags), read(n_tags))


def pitf_score(m: FactorModel, u: int, i: int, t: int) -> float:
    """Inner-product score of tag t for post (u, i); may be negative."""
    if not (0 <= u < m.n_users and 0 <= i < m.n_items and 0 <= t < m.n_tags):
        raise IndexError(f"(u={u}, i={i}, t={t}) outside model dimensions "
                         f"({m.n_users}, {m.n_items}, {m.n_tags})")
    return float(np.dot(m.user_factors[u], m.tag_factors_user[t])
                 + np.dot(m.item_factors[i], m.tag_factors_item[t]))


def _pair_score_delta(m: FactorModel, u: int, i: int, tp: int, tn: int) -> float:
    return (float(np.dot(m.user_factors[u], m.tag_factors_user[tp] - m.tag_factors_user[tn]))
            + float(np.dot(m.item_factors[i], m.tag_factors_item[tp] - m.tag_factors_item[tn])))


def _log_sigmoid(x: float) -> float:
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def _sigmoid_neg(x: float) -> float:
    """sigmoid(-x), overflow-safe."""
    if x >= 0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


def sample_objective(m: FactorModel, u: int, i: int, tp: int, tn: int, reg: float) -> float:
    """Per-sample training objective: log-sigmoid of the score difference
    between the observed and the unobserved tag, minus (reg/2) times the
    squared norms of the six parameter rows involved."""
    x = _pair_score_delta(m, u, i, tp, tn)
    penalty = (np.dot(m.user_factors[u], m.user_factors[u])
               + np.dot(m.item_factors[i], m.item_factors[i])
               + np.dot(m.tag_factors_user[tp], m.tag_factors_user[tp])
               + np.dot(m.tag_factors_user[tn], m.tag_factors_user[tn])
               + np.dot(m.tag_factors_item[tp], m.tag_factors_item[tp])
               + np.dot(m.tag_factors_item[tn], m.tag_factors_item[tn]))
    return float(_log_sigmoid(x) - 0.5 * reg * penalty)


def sample_gradients(m: FactorModel, u: int, i: int, tp: int, tn: int,
                     reg: float) -> dict[str, np.ndarray]:
    """Analytic gradients of :func:`sample_objective` for the six rows."""
    x = _pair_score_delta(m, u, i, tp, tn)
    delta = _sigmoid_neg(x)
    uf, itf = m.user_factors[u], m.item_factors[i]
    tup, tun = m.tag_factors_user[tp], m.tag_factors_user[tn]
    tip, tin = m.tag_factors_item[tp], m.tag_factors_item[tn]
    return {
        "user": delta * (tup - tun) - reg * uf,
        "item": delta * (tip - tin) - reg * itf,
        "tag_user_pos": delta * uf - reg * tup,
        "tag_user_neg": -delta * uf - reg * tun,
        "tag_item_pos": delta * itf - reg * tip,
        "tag_item_neg": -delta * itf - reg * tin,
    }


def pitf_train(train: Folksonomy, cfg: TrainConfig | None = None) -> FactorModel:
    """Train the factorization by stochastic pairwise-ranking ascent.

    Each step samples a post, one of its tags as the positive and a
    uniformly drawn unobserved tag as the negative, then ascends the
    log-sigmoid objective. Posts covering every tag yield no negative and
    are skipped. Deterministic for a fixed seed.
    """
    cfg = cfg or TrainConfig()
    check_folksonomy(train)
    if not train.triples:
        raise ValueError("cannot train on an empty folksonomy")
    rng = np.random.default_rng(cfg.seed)
    n_users, n_items, n_tags = train.user_bound, train.item_bound, train.tag_bound
    model = FactorModel(
        user_factors=rng.normal(0.0, cfg.init_stddev, (n_users, cfg.k)),
        item_factors=rng.normal(0.0, cfg.init_stddev, (n_items, cfg.k)),
        tag_factors_user=rng.normal(0.0, cfg.init_stddev, (n_tags, cfg.k)),
        tag_factors_item=rng.normal(0.0, cfg.init_stddev, (n_tags, cfg.k)),
    )
    post_list = sorted(train.posts)
    post_tags = [sorted(train.posts[p]) for p in post_list]
    lr, reg = cfg.learning_rate, cfg.regularization
    uf, itf = model.user_factors, model.item_factors
    tfu, tfi = model.tag_factors_user, model.tag_factors_item
    steps = cfg.iterations * len(train.triples)
    for _ in range(steps):
        pidx = int(rng.integers(len(post_list)))
        u, i = post_list[pidx]
        observed = post_tags[pidx]
        if len(observed) >= n_tags:
            continue
        tp = observed[int(rng.integers(len(observed)))]
        tn = int(rng.integers(n_tags))
        while tn in train.posts[(u, i)]:
            tn = int(rng.integers(n_tags))
        x = (float(np.dot(uf[u], tfu[tp] - tfu[tn]))
             + float(np.dot(itf[i], tfi[tp] - tfi[tn])))
        delta = _sigmoid_neg(x)
        u_row, i_row = uf[u].copy(), itf[i].copy()
        tup, tun = tfu[tp].copy(), tfu[tn].copy()
        tip, tin = tfi[tp].copy(), tfi[tn].copy()
        uf[u] += lr * (delta * (tup - tun) - reg * u_row)
        itf[i] += lr * (delta * (tip - tin) - reg * i_row)
        tfu[tp] += lr * (delta * u_row - reg * tup)
        tfu[tn] += lr * (-delta * u_row - reg * tun)
        tfi[tp] += lr * (delta * i_row - reg * tip)
        tfi[tn] += lr * (-delta * i_row - reg * tin)
    if not (np.isfinite(uf).all() and np.isfinite(itf).all()
            and np.isfinite(tfu).all() and np.isfinite(tfi).all()):
        raise FloatingPointError("training diverged: non-finite factors")
    return model


def strec_score(train: Folksonomy, g: SocialGraph, cfg: StrecConfig,
                u: int, i: int, t: int) -> float:
    """alpha * tf(t, i) + (1 - alpha) * social frequency of t for (u, i).

    The social frequency sums the proximity of every *other* user who
    tagged item i with t; unknown tags score 0.
    """
    prox = proximities_from(g, u, cfg.proximity_mode)
    return _strec_score_with_prox(train, prox, cfg.alpha, u, i, t)


def _strec_score_with_prox(train: Folksonomy, prox: dict[int, float],
                           alpha: float, u: int, i: int, t: int) -> float:
    tf = train.tf(t, i)
    sf = 0.0
    for v in train.taggers.get((i, t), ()):
        if v != u:
            sf += prox.get(v, 0.0)
    return alpha * tf + (1.0 - alpha) * sf


def baseline_score(train: Folksonomy, u: int, i: int, t: int) -> float:
    """tf(t, i) plus the number of items the user has used t on."""
    used_on = 0
    for j in train.items_of_user.get(u, ()):
        if t in train.posts[(u, j)]:
            used_on += 1
    return float(train.tf(t, i) + used_on)


class TagRecommender(BaseEstimator):
    """Base estimator: fit on a Folksonomy, rank tags for a post.

    Subclasses define the candidate universe and the per-tag score; the
    shared selector sorts by descending score with ascending-id ties, so
    ``top_k(n)`` is always a prefix of ``top_k(n + 1)``.
    """

    def fit(self, corpus: Folksonomy, y=None):
        raise NotImplementedError

    def _candidates(self, user: int, item: int) -> list[int]:
        raise NotImplementedError

    def _score(self, user: int, item: int, tag: int) -> float:
        raise NotImplementedError

    def score_one(self, user: int, item: int, tag: int) -> float:
        check_is_fitted(self)
        return self._score(user, item, tag)

    def top_k(self, user: int, item: int, n: int) -> RankedTags:
        check_is_fitted(self)
        check_positive_int("n", n)
        scored = [(t, self._score(user, item, t)) for t in self._candidates(user, item)]
        return RankedTags.from_scores(scored, limit=n)

    def knows_post(self, user: int, item: int) -> bool:
        raise NotImplementedError


def top_candidates(scorer: TagRecommender, user: int, item: int, n: int) -> RankedTags:
    """The n highest-scoring tags for (user, item) under the scorer."""
    return scorer.top_k(user, item, n)


class BaselineRecommender(TagRecommender):
    """Most-popular mix: item tag frequency plus the user's usage count."""

    def fit(self, corpus: Folksonomy, y=None):
        self.corpus_ = check_folksonomy(corpus)
        return self

    def _candidates(self, user: int, item: int) -> list[int]:
        c = self.corpus_
        cands = set(c.item_profile.get(item, ())) | set(c.user_profile.get(user, ()))
        return sorted(cands)

    def _score(self, user: int, item: int, tag: int) -> float:
        return baseline_score(self.corpus_, user, item, tag)

    def knows_post(self, user: int, item: int) -> bool:
        check_is_fitted(self)
        return user in self.corpus_.users and item in self.corpus_.items


class StrecRecommender(TagRecommender):
    """Network-aware scorer over the Dice user graph.

    Candidates are the tags already used on the item: any other tag has
    zero item frequency and no taggers of (item, tag), so it provably
    scores 0.
    """

    def __init__(self, alpha: float = 0.05, proximity: str = "direct",
                 path_depth: int = 2, min_proximity: float = 0.0):
        self.alpha = alpha
        self.proximity = proximity
        self.path_depth = path_depth
        self.min_proximity = min_proximity

    def _mode(self) -> ProximityMode:
        if self.proximity == "direct":
            return ProximityMode.direct()
        return ProximityMode.path(self.path_depth)

    def fit(self, corpus: Folksonomy, y=None):
        check_unit_interval("alpha", self.alpha)
        self.corpus_ = check_folksonomy(corpus)
        self.graph_ = build_dice_graph(corpus, self.min_proximity)
        return self

    def _candidates(self, user: int, item: int) -> list[int]:
        return sorted(self.corpus_.item_profile.get(item, ()))

    def _score(self, user: int, item: int, tag: int) -> float:
        prox = proximities_from(self.graph_, user, self._mode())
        return _strec_score_with_prox(self.corpus_, prox, self.alpha, user, item, tag)

    def top_k(self, user: int, item: int, n: int) -> RankedTags:
        # one proximity materialization per post, shared by all candidates
        check_is_fitted(self)
        check_positive_int("n", n)
        prox = proximities_from(self.graph_, user, self._mode())
        scored = [(t, _strec_score_with_prox(self.corpus_, prox, self.alpha, user, item, t))
                  for t in self._candidates(user, item)]
        return RankedTags.from_scores(scored, limit=n)

    def knows_post(self, user: int, item: int) -> bool:
        check_is_fitted(self)
        return user in self.corpus_.users and item in self.corpus_.items


class PitfRecommender(TagRecommender):
    """Factorization scorer; scores every tag of the training id space."""

    def __init__(self, k: int = 64, learning_rate: float = 0.05,
                 regularization: float = 5e-5, iterations: int = 100,
                 init_stddev: float = 0.01, seed: int = 0):
        self.k = k
        self.learning_rate = learning_rate
        self.regularization = regularization
        self.iterations = iterations
        self.init_stddev = init_stddev
        self.seed = seed

    def train_config(self) -> TrainConfig:
        return TrainConfig(k=self.k, learning_rate=self.learning_rate,
                           regularization=self.regularization, iterations=self.iterations,
                           init_stddev=self.init_stddev, seed=self.seed)

    def fit(self, corpus: Folksonomy, y=None):
        check_folksonomy(corpus)
        self.model_ = pitf_train(corpus, self.train_config())
        return self

    def with_model(self, model: FactorModel) -> "PitfRecommender":
        """Attach a pre-trained model instead of fitting."""
        self.model_ = model
        return self

    def _candidates(self, user: int, item: int) -> list[int]:
        return list(range(self.model_.n_tags))

    def _score(self, user: int, item: int, tag: int) -> float:
        return pitf_score(self.model_, user, item, tag)

    def top_k(self, user: int, item: int, n: int) -> RankedTags:
        check_is_fitted(self)
        check_positive_int("n", n)
        m = self.model_
        if not (0 <= user < m.n_users and 0 <= item < m.n_items):
            return RankedTags.empty()
        scores = m.tag_factors_user @ m.user_factors[user] + m.tag_factors_item @ m.item_factors[item]
        return RankedTags.from_scores(enumerate(scores.tolist()), limit=n)

    def knows_post(self, user: int, item: int) -> bool:
        check_is_fitted(self)
        return 0 <= user < self.model_.n_users and 0 <= item < self.model_.n_items
