"""folkrec: tag recommendation for folksonomies with consistency re-ranking."""

from .corpus import (DatasetFormatConfig, Folksonomy, ParseError, Split, Triple,
                     ValidationError, Vocabulary, build, fixed_split_from_corpus,
                     leave_post_out, load_fixed_split, load_snapshot, p_core,
                     parse_triples, save_snapshot, snapshot_text)
from .evaluation import (EvalConfig, EvalReport, StudyResult, evaluate,
                         evaluate_with_base, f1_at_k, gain,
                         run_dimension_study, run_multi_reference_study,
                         run_reference_tag_study)
from .foldcons import (FoldConsReranker, PcmConfig, RerankOutcome, adapted_rerank,
                       contribution, pcm, prune, rerank, rerank_with_reference)
from .graph import (ProximityMode, SocialGraph, build_dice_graph, edge_list_text,
                    export_edges, proximities_from, proximity)
from .ranking import RankedTags, as_ranked_tags
from .recommenders import (BaselineRecommender, FactorModel, PitfRecommender,
                           StrecConfig, StrecRecommender, TagRecommender,
                           TrainConfig, baseline_score, pitf_score, pitf_train,
                           strec_score, top_candidates)

__version__ = "0.1.0"

__all__ = [
    "BaselineRecommender", "DatasetFormatConfig", "EvalConfig", "EvalReport",
    "FactorModel", "FoldConsReranker", "Folksonomy", "ParseError", "PcmConfig",
    "PitfRecommender", "ProximityMode", "RankedTags", "RerankOutcome",
    "SocialGraph", "Split", "StrecConfig", "StrecRecommender", "StudyResult",
    "TagRecommender", "TrainConfig", "Triple", "ValidationError", "Vocabulary",
    "adapted_rerank", "as_ranked_tags", "baseline_score", "build",
    "build_dice_graph", "contribution", "edge_list_text", "evaluate",
    "evaluate_with_base", "export_edges", "f1_at_k", "fixed_split_from_corpus",
    "gain", "leave_post_out", "load_fixed_split",
    "load_snapshot", "p_core", "parse_triples", "pcm", "pitf_score",
    "pitf_train", "proximities_from", "proximity", "prune", "rerank",
    "rerank_with_reference", "run_dimension_study", "run_multi_reference_study",
    "run_reference_tag_study", "save_snapshot", "snapshot_text", "strec_score",
    "top_candidates",
]
