"""Experimental protocol: F1@K sweeps, gains, and the ablation studies.

F1 is macro-averaged: one value per test post, then the mean over posts.
Evaluation is deterministic for a fixed (split, config, seed) and is
worker-count independent because the per-post reduction is ordered.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable

from .corpus import Split
from .foldcons import FoldConsReranker, PcmConfig
from .ranking import RankedTags
from .recommenders import (BaselineRecommender, PitfRecommender, StrecRecommender,
                           TagRecommender)

RECOMMENDER_CHOICES = ("baseline", "strec", "pitf")
RERANK_CHOICES = ("none", "foldcons", "adapted")
STUDY_REFERENCE_POSITIONS = (1, 2, 3, 4)
STUDY_REFERENCE_COUNTS = (1, 2, 3, 4)
STUDY_DIMENSIONS = ("item", "user", "both")
STUDY_K = 5


def f1_at_k(recommended: RankedTags, truth: frozenset[int] | set[int], k: int) -> float:
    """F1 of the top-k recommended tags against the post's true tag set.

    Precision uses min(k, list length) as denominator so short candidate
    lists are not charged for padding.
    """
    if not truth:
        raise ValueError("truth tag set must be non-empty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    top = recommended.top(k).tags()
    hits = sum(1 for t in top if t in truth)
    if hits == 0:
        return 0.0
    precision = hits / min(k, len(recommended))
    recall = hits / len(truth)
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalConfig:
    """Everything needed to reproduce one evaluation run."""

    k_min: int = 5
    k_max: int = 10
    pool: int | None = None          # candidates requested before re-ranking; None -> 5 * k_max
    seed: int = 0
    recommender: str = "baseline"
    recommender_params: dict = field(default_factory=dict)
    rerank: str = "none"
    pcm: PcmConfig = field(default_factory=PcmConfig)
    ref_position: int | None = None
    prune: bool = True
    profile: str | None = None       # None -> 'user' for strec, 'both' otherwise
    per_post: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.k_min < 1 or self.k_max < self.k_min:
            raise ValueError(f"invalid k range {self.k_min}..{self.k_max}")
        if self.recommender not in RECOMMENDER_CHOICES:
            raise ValueError(f"unknown recommender {self.recommender!r}")
        if self.rerank not in RERANK_CHOICES:
            raise ValueError(f"unknown rerank mode {self.rerank!r}")
        if self.pool is not None and self.pool < self.k_max:
            raise ValueError(
                f"candidate pool {self.pool} is smaller than k_max {self.k_max}")
        if self.ref_position is not None and self.ref_position < 1:
            raise ValueError(f"ref_position must be >= 1, got {self.ref_position}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    @property
    def k_values(self) -> tuple[int, ...]:
        return tuple(range(self.k_min, self.k_max + 1))

    @property
    def resolved_pool(self) -> int:
        return self.pool if self.pool is not None else 5 * self.k_max

    @property
    def resolved_profile(self) -> str:
        if self.profile is not None:
            return self.profile
        return "user" if self.recommender == "strec" else "both"

    def snapshot(self, include_workers: bool = True) -> dict:
        """Primitive key/value view for report headers and manifests.

        Worker count is operational, not semantic: report bodies omit it
        so outputs stay byte-identical across machines; manifests keep it.
        """
        out = {
            "k_min": self.k_min,
            "k_max": self.k_max,
            "pool": self.resolved_pool,
            "seed": self.seed,
            "recommender": self.recommender,
            "recommender_params": dict(sorted(self.recommender_params.items())),
            "rerank": self.rerank,
            "pcm_dims": self.pcm.dimensions,
            "pcm_normalize": self.pcm.normalize,
            "refs": self.pcm.refs,
            "ref_position": self.ref_position,
            "prune": self.prune,
            "profile": self.resolved_profile,
        }
        if include_workers:
            out["workers"] = self.workers
        return out


def build_recommender(cfg: EvalConfig) -> TagRecommender:
    params = dict(cfg.recommender_params)
    if cfg.recommender == "baseline":
        return BaselineRecommender(**params)
    if cfg.recommender == "strec":
        return StrecRecommender(**params)
    params.setdefault("seed", cfg.seed)
    return PitfRecommender(**params)


def _build_reranker(cfg: EvalConfig) -> FoldConsReranker | None:
    if cfg.rerank == "none" and cfg.ref_position is None:
        return None
    return FoldConsReranker(
        dimensions=cfg.pcm.dimensions,
        normalize=cfg.pcm.normalize,
        refs=cfg.pcm.refs,
        ref_position=cfg.ref_position,
        adapted=(cfg.rerank == "adapted"),
        profile=cfg.resolved_profile,
        prune_candidates=cfg.prune,
    )


@dataclass
class EvalReport:
    """Macro-averaged F1 per k plus the resolved configuration."""

    k_values: tuple[int, ...]
    mean_f1: dict[int, float]
    post_count: int
    unknown_posts: int
    seed: int
    config: dict
    per_post: list[dict] | None = None


def evaluate(split: Split, cfg: EvalConfig) -> EvalReport:
    """Score every test post: request candidates, optionally re-rank,
    measure F1 at each k.

    Posts whose user or item is unknown to the fitted recommender are
    scored with an empty recommendation (F1 = 0) and counted.
    """
    rec = build_recommender(cfg)
    rec.fit(split.train)
    rr = _build_reranker(cfg)
    if rr is not None:
        rr.fit(split.train)
    pool = cfg.resolved_pool
    ks = cfg.k_values

    def eval_one(indexed) -> dict:
        idx, (u, i, truth) = indexed
        known = rec.knows_post(u, i)
        base = rec.top_k(u, i, pool) if known else RankedTags.empty()
        results = {}
        for k in ks:
            if rr is not None and base:
                outcome = rr.rerank_post(base, k, user=u, item=i)
                final, applied = outcome.final, outcome.applied
            else:
                final, applied = base.top(k), False
            results[k] = {"tags": list(final.tags()),
                          "f1": f1_at_k(final, truth, k),
                          "applied": applied}
        return {"post": idx, "user": u, "item": i, "known": known,
                "truth": sorted(truth), "base": list(base.tags()),
                "results": results}

    indexed: Iterable = list(enumerate(split.test))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool_exec:
            records = list(pool_exec.map(eval_one, indexed))
    else:
        records = [eval_one(entry) for entry in indexed]

    n = len(records)
    mean_f1 = {k: (sum(r["results"][k]["f1"] for r in records) / n if n else 0.0)
               for k in ks}
    unknown = sum(1 for r in records if not r["known"])
    return EvalReport(
        k_values=ks,
        mean_f1=mean_f1,
        post_count=n,
        unknown_posts=unknown,
        seed=cfg.seed,
        config=cfg.snapshot(include_workers=False),
        per_post=records if cfg.per_post else None,
    )


def gain(base: EvalReport, improved: EvalReport, k: int) -> float | None:
    """Relative F1 improvement in percent; None marks an undefined ratio
    (zero base, positive improvement)."""
    if base.k_values != improved.k_values:
        raise ValueError("reports cover different k ranges")
    if base.post_count != improved.post_count:
        raise ValueError("reports cover different splits")
    if k not in base.mean_f1:
        raise ValueError(f"k={k} not in report")
    b, m = base.mean_f1[k], improved.mean_f1[k]
    if b == 0.0:
        return 0.0 if m == 0.0 else None
    return 100.0 * (m - b) / b


def evaluate_with_base(split: Split, cfg: EvalConfig) -> tuple[EvalReport, EvalReport | None]:
    """Evaluate cfg; when it re-ranks, also evaluate the plain base run."""
    report = evaluate(split, cfg)
    if cfg.rerank == "none" and cfg.ref_position is None:
        return report, None
    base_cfg = replace(cfg, rerank="none", ref_position=None)
    return evaluate(split, base_cfg), report


@dataclass
class StudyResult:
    """One ablation: F1 and gain at k=5 for each variant column."""

    kind: str
    labels: tuple[str, ...]
    base_f1: float
    variant_f1: dict[str, float]
    gains: dict[str, float | None]
    config: dict
    seed: int


def _study(split: Split, cfg: EvalConfig, kind: str,
           variants: list[tuple[str, EvalConfig]]) -> StudyResult:
    base_cfg = replace(cfg, rerank="none", ref_position=None,
                       k_min=STUDY_K, k_max=STUDY_K, per_post=False)
    base = evaluate(split, base_cfg)
    variant_f1: dict[str, float] = {}
    gains: dict[str, float | None] = {}
    for label, vcfg in variants:
        rep = evaluate(split, vcfg)
        variant_f1[label] = rep.mean_f1[STUDY_K]
        gains[label] = gain(base, rep, STUDY_K)
    return StudyResult(kind=kind, labels=tuple(label for label, _ in variants),
                       base_f1=base.mean_f1[STUDY_K], variant_f1=variant_f1,
                       gains=gains, config=cfg.snapshot(include_workers=False),
                       seed=cfg.seed)


def _study_base_cfg(cfg: EvalConfig) -> EvalConfig:
    mode = cfg.rerank if cfg.rerank != "none" else "foldcons"
    return replace(cfg, rerank=mode, k_min=STUDY_K, k_max=STUDY_K, per_post=False)


def run_reference_tag_study(split: Split, cfg: EvalConfig) -> StudyResult:
    """Gain at k=5 when the 1st, 2nd, 3rd or 4th tag is the reference."""
    common = _study_base_cfg(cfg)
    variants = [(f"ref{pos}", replace(common, ref_position=pos))
                for pos in STUDY_REFERENCE_POSITIONS]
    return _study(split, cfg, "reference", variants)


def run_multi_reference_study(split: Split, cfg: EvalConfig) -> StudyResult:
    """Gain at k=5 using the mean PCM of the first 1..4 tags."""
    common = _study_base_cfg(cfg)
    variants = [(f"m{m}", replace(common, ref_position=None, pcm=replace(cfg.pcm, refs=m)))
                for m in STUDY_REFERENCE_COUNTS]
    return _study(split, cfg, "multiref", variants)


def run_dimension_study(split: Split, cfg: EvalConfig) -> StudyResult:
    """Gain at k=5 mining the item lists, the user lists, or both."""
    common = _study_base_cfg(cfg)
    variants = [(dims, replace(common, ref_position=None, pcm=replace(cfg.pcm, dimensions=dims)))
                for dims in STUDY_DIMENSIONS]
    return _study(split, cfg, "dimension", variants)


# ---------------------------------------------------------------------------
# report emission

def _header_lines(config: dict, seed: int) -> list[str]:
    lines = ["# folkrec report v1", f"# seed = {seed}"]
    for key in sorted(config):
        lines.append(f"# {key} = {json.dumps(config[key], sort_keys=True)}")
    return lines


def _fmt_f1(x: float) -> str:
    return f"{x:.6f}"


def _fmt_gain(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.2f}"


def report_csv(report: EvalReport, base: EvalReport | None = None,
               label: str = "run", base_label: str = "base") -> str:
    """CSV body: one column per k, one row per run, plus a gain row."""
    lines = _header_lines(report.config, report.seed)
    ks = report.k_values
    lines.append("#tags," + ",".join(str(k) for k in ks))
    if base is not None:
        lines.append(base_label + "," + ",".join(_fmt_f1(base.mean_f1[k]) for k in ks))
        lines.append(label + "," + ",".join(_fmt_f1(report.mean_f1[k]) for k in ks))
        lines.append("gain_pct," + ",".join(_fmt_gain(gain(base, report, k)) for k in ks))
    else:
        lines.append(label + "," + ",".join(_fmt_f1(report.mean_f1[k]) for k in ks))
    lines.append(f"posts,{report.post_count}")
    lines.append(f"unknown_posts,{report.unknown_posts}")
    return "\n".join(lines) + "\n"


def _markdown_table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(header[c]), *(len(r[c]) for r in rows)) for c in range(len(header))]
    def fmt(cells):
        return "| " + " | ".join(c.ljust(widths[i]) for i, c in enumerate(cells)) + " |"
    out = [fmt(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out.extend(fmt(r) for r in rows)
    return out


def report_markdown(report: EvalReport, base: EvalReport | None = None,
                    label: str = "run", base_label: str = "base") -> str:
    lines = _header_lines(report.config, report.seed)
    ks = report.k_values
    header = ["#tags"] + [str(k) for k in ks]
    rows = []
    if base is not None:
        rows.append([base_label] + [_fmt_f1(base.mean_f1[k]) for k in ks])
        rows.append([label] + [_fmt_f1(report.mean_f1[k]) for k in ks])
        rows.append(["gain_pct"] + [_fmt_gain(gain(base, report, k)) for k in ks])
    else:
        rows.append([label] + [_fmt_f1(report.mean_f1[k]) for k in ks])
    lines.extend(_markdown_table(header, rows))
    lines.append("")
    lines.append(f"posts: {report.post_count}, unknown: {report.unknown_posts}")
    return "\n".join(lines) + "\n"


def study_csv(study: StudyResult) -> str:
    lines = _header_lines(study.config, study.seed)
    lines.append("study," + study.kind)
    lines.append("variant," + ",".join(study.labels))
    lines.append("f1," + ",".join(_fmt_f1(study.variant_f1[l]) for l in study.labels))
    lines.append("gain_pct," + ",".join(_fmt_gain(study.gains[l]) for l in study.labels))
    lines.append(f"base_f1,{_fmt_f1(study.base_f1)}")
    return "\n".join(lines) + "\n"


def study_markdown(study: StudyResult) -> str:
    lines = _header_lines(study.config, study.seed)
    header = ["variant"] + list(study.labels)
    rows = [["f1"] + [_fmt_f1(study.variant_f1[l]) for l in study.labels],
            ["gain_pct"] + [_fmt_gain(study.gains[l]) for l in study.labels]]
    lines.extend(_markdown_table(header, rows))
    lines.append("")
    lines.append(f"base f1 at k={STUDY_K}: {_fmt_f1(study.base_f1)}")
    return "\n".join(lines) + "\n"


def per_post_jsonl(report: EvalReport) -> str:
    """Line-delimited per-post records, preceded by one header record."""
    if report.per_post is None:
        raise ValueError("report was produced without per_post logging")
    lines = [json.dumps({"type": "header", "seed": report.seed, "config": report.config},
                        sort_keys=True)]
    for rec in report.per_post:
        row = dict(rec)
        row["type"] = "post"
        row["results"] = {str(k): v for k, v in rec["results"].items()}
        lines.append(json.dumps(row, sort_keys=True))
    return "\n".join(lines) + "\n"
