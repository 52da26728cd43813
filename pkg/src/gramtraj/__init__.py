"""Training-trajectory analysis for minimal-pair grammaticality benchmarks."""

from .changepoint import (ChangePointResult, CostKind, Signal, binseg, cost_l2, cost_rbf,
                          cusum_detect, cusum_statistic, median_heuristic_bandwidth, pelt,
                          regime_classify, segmentation_detect)
from .errors import (ContractViolation, DomainError, GramTrajError, InsufficientDataError,
                     InvariantViolation, ValidationError)
from .ngram import (NGramModel, bigram_class_gap, bigram_hypothesis_test, sentence_nll_bigram,
                    tokenize, train)
from .spectral import (WeightMatrix, condition_number, cosine_similarity, effective_rank,
                       entry_stats, frobenius, qk_ratio, singular_values)
from .stats import kruskal_wallis, one_way_anova, pearson, spearman, two_sample_t
from .trajectory import (GapSeries, PairScore, SegmentMeans, TrajectoryCategory, build_gap_series,
                         categorize, class_accuracy, gap_at_checkpoint, pair_correct, perplexity,
                         segment_means)

__version__ = "0.1.0"
