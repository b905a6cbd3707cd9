"""Information-theoretic online memory selection."""

from .bayes import (
    DegradedConditioningError,
    GaussianPredictive,
    InvalidConfigError,
    PosteriorState,
    entropy_reduction,
    info_gain,
    init_posterior,
    learnability,
    mic,
    mic_leave_one_out,
    normalize_feature,
    one_hot,
    predictive,
    rank_one_add,
    rank_one_remove,
    rebuild,
    surprise,
)
from .memory import CapacityError, Memory, MemoryItem, make_item
from .selectors import RunningMoments, SelectorParams, make_selector
from .streams import Dataset, DatasetFormatError, StreamConfig, make_task_stream

__version__ = "0.1.0"
