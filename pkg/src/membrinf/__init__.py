"""Membership inference attacks against classical classifiers.

End-to-end black-box attack tooling: shadow-data generation against a
prediction API, attack-set construction from partitioned shadow models,
attack-model training and evaluation, federated insider attacks, and
API/model hardening transforms, plus a config-driven experiment CLI
(``membrinf``).
"""

__version__ = "0.1.0"

from .datakit import (  # noqa: F401
    CsvSchema,
    Dataset,
    FeatureStats,
    SplitPlan,
    add_uniform_noise,
    compute_feature_stats,
    disjoint_party_split,
    in_class_std,
    inter_party_in_class_distance,
    kfold_splits,
    kmeans,
    load_csv,
    synth_blobs,
    synth_purchases,
)
from .models import ClassifierModel, ModelKind, TrainConfig, fit  # noqa: F401
from .shadowgen import (  # noqa: F401
    ShadowGenConfig,
    TargetApi,
    Technique,
    build_shadow_dataset,
    model_api,
)
from .attack import (  # noqa: F401
    AttackModel,
    AttackTrainSet,
    Membership,
    build_attack_set,
    evaluate_attack,
    infer_membership,
    train_attack_model,
)
from .pipeline import PipelineConfig, run_attack_pipeline  # noqa: F401
from .federation import (  # noqa: F401
    Federation,
    InsiderView,
    build_federation,
    federated_predict,
    heterogeneity_sweep,
    insider_attack,
)
from .mitigation import (  # noqa: F401
    HardeningPolicy,
    harden_label_only,
    harden_noise,
    harden_topk,
    hardened_api,
    mitigation_report,
)
