"""Streaming credit-card fraud detection.

A self-contained pipeline: an in-process partitioned message log feeds a
mini-batch engine that augments each transaction with per-card history
features, scores it with an ensemble of a feedback-trained and several
delay-trained balanced random forests, and raises a daily top-N card alert
list. Ground-truth labels stay sealed in a vault until their revelation day.
"""

from .broker import Broker, BrokerError, Record, TopicLog, stable_hash64
from .config import ConfigError, RunConfig, load_config
from .features import AggregationSpec, AugmentedTransaction, FeatureError, aggregate, augment
from .generator import GeneratorConfig, GeneratorConfigError, generate, replay
from .learner import (
    BalancedRandomForest,
    CartTree,
    EnsembleConfig,
    EnsembleError,
    EnsembleScorer,
    FeedbackDelayedEnsemble,
    FraudStarvationError,
    TreeParams,
    train_balanced_forest,
    train_tree,
)
from .metrics import (
    CardPrecision,
    DegenerateMetricError,
    EarlierDetection,
    PairedTest,
    auc,
    card_precision,
    earlier_detection_rate,
    paired_improvement_test,
    timing_report,
)
from .preprocess import (
    MedianTable,
    PreprocessError,
    RiskDictionary,
    encode_transaction,
    fit_median_table,
    fit_risk_dictionary,
    refresh_risk_dictionary,
)
from .store import StoredRow, StoreError, TransactionStore, hour_bucket
from .streaming import (
    FULLY_OPERATIONAL,
    INITIALIZATION,
    PARTIAL_ENSEMBLE,
    AlertEntry,
    BatchStats,
    DayRecord,
    LabelLeakError,
    LabelVault,
    LinearCostModel,
    QueueOverflowError,
    RunReport,
    StreamConfig,
    StreamConfigError,
    StreamingEngine,
    TransactionScore,
    evaluate_run,
)
from .transactions import (
    DAY_SECONDS,
    FRAUD,
    GENUINE,
    HOUR_SECONDS,
    SchemaError,
    Transaction,
    TransactionSchema,
    read_dataset,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationSpec",
    "AlertEntry",
    "AugmentedTransaction",
    "BalancedRandomForest",
    "BatchStats",
    "Broker",
    "BrokerError",
    "CardPrecision",
    "CartTree",
    "ConfigError",
    "DAY_SECONDS",
    "DayRecord",
    "DegenerateMetricError",
    "EarlierDetection",
    "EnsembleConfig",
    "EnsembleError",
    "EnsembleScorer",
    "FRAUD",
    "FULLY_OPERATIONAL",
    "FeatureError",
    "FeedbackDelayedEnsemble",
    "FraudStarvationError",
    "GENUINE",
    "GeneratorConfig",
    "GeneratorConfigError",
    "HOUR_SECONDS",
    "INITIALIZATION",
    "LabelLeakError",
    "LabelVault",
    "LinearCostModel",
    "MedianTable",
    "PARTIAL_ENSEMBLE",
    "PairedTest",
    "PreprocessError",
    "QueueOverflowError",
    "Record",
    "RiskDictionary",
    "RunConfig",
    "RunReport",
    "SchemaError",
    "StoreError",
    "StoredRow",
    "StreamConfig",
    "StreamConfigError",
    "StreamingEngine",
    "TopicLog",
    "Transaction",
    "TransactionSchema",
    "TransactionScore",
    "TransactionStore",
    "TreeParams",
    "aggregate",
    "auc",
    "augment",
    "card_precision",
    "earlier_detection_rate",
    "encode_transaction",
    "evaluate_run",
    "fit_median_table",
    "fit_risk_dictionary",
    "generate",
    "hour_bucket",
    "load_config",
    "paired_improvement_test",
    "read_dataset",
    "refresh_risk_dictionary",
    "replay",
    "stable_hash64",
    "timing_report",
    "train_balanced_forest",
    "train_tree",
    "write_csv",
]
