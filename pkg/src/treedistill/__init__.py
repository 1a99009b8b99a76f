"""treedistill: boosted-tree distillation into self-explaining neural nets.

Train a GBDT teacher, distill it into grouped embedding networks, learn
an interpretation head from the teacher's structure-based attributions
(post hoc or jointly), and score how well the student's explanations
track the teacher's.
"""

from .attribution import (
    AttributionVector,
    attribute_ensemble,
    attribute_ensemble_many,
    attribute_group,
    attribute_tree,
    export_attributions,
    load_attributions,
)
from .data import (
    Dataset,
    SplitSpec,
    Task,
    binarize_label,
    load_csv,
    load_dataset,
    load_idx_binary_digit,
    save_dataset,
    split,
)
from .distill import (
    DistillConfig,
    Gbdt2nnModel,
    GroupDistillNet,
    GroupEmbeddingNet,
    TreeGroup,
    assemble,
    distill_gbdt2nn,
    fit_group_embedding,
    fit_group_structure,
    group_trees,
    load_student,
    online_update,
    save_student,
    student_predict,
    student_predict_many,
    student_predict_proba,
)
from .errors import ConfigError, DataError, NumericalError, TreedistillError
from .gbdt import (
    GbdtConfig,
    GbdtModel,
    Objective,
    Tree,
    TreeNode,
    fit_gbdt,
    group_used_features,
    leaf_index,
    leaf_prediction,
    load_gbdt,
    predict,
    predict_many,
    predict_proba,
    save_gbdt,
)
from .interpret import (
    InterpretMethod,
    InterpretationHead,
    JointConfig,
    MixedModel,
    concat_embeddings,
    distill_independent,
    distill_joint,
    explain,
    explain_many,
    fit_interpretation_head,
    fit_joint,
    load_mixed_model,
    online_update_mixed,
    predict_and_explain,
    save_mixed_model,
)
from .metrics import (
    MetricsReport,
    RankedFeatures,
    aggregate,
    agreement_report,
    auc,
    coverage_ck,
    mse,
    ndcg_at_k,
    topk,
)
from .nn import Activation, Loss, Mlp, Optimizer, TrainConfig, forward, gradient_check, train

__version__ = "0.1.0"
