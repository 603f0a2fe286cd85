"""Poisoning experiments for contrastive collaborative filtering at desk scale."""

from .attack import (
    AttackConfig,
    FrozenMap,
    MaliciousProfile,
    attack_loss,
    bandwagon_attack,
    blackbox_transfer,
    clear_attack,
    cw_rank_gradient,
    cw_rank_loss,
    draw_attack_deflation,
    greedy_discretize,
    outer_gradient,
    random_attack,
)
from .config import DEFAULTS, apply_overrides, load_config, resolve_config
from .data import (
    AttackBudget,
    InteractionDataset,
    attack_budget,
    load_dataset,
    load_interactions,
    popularity_ranking,
    save_dataset,
    select_target_items,
    split_dataset,
)
from .errors import NumericError
from .experiment import (
    AttackReport,
    AttackSpec,
    emit_report,
    evaluate_state,
    load_report,
    run_cell,
    run_experiment,
)
from .graph import PropagationGraph, build_graph, drop_edges, propagate, propagate_stacked
from .losses import (
    bpr_gradient,
    bpr_loss,
    infonce_gradient,
    infonce_loss,
    infonce_loss_decomposed,
    l2_normalize_rows,
)
from .metrics import hit_ratio_at_k, ndcg_at_k, recall_at_k
from .model import (
    ModelConfig,
    ModelState,
    TrainResult,
    final_embeddings,
    load_checkpoint,
    recommend_topk,
    save_checkpoint,
    train,
)
from .spectral import (
    BoundCheckInstance,
    DeflationState,
    SpectralReport,
    cl_bound_check,
    dispersion_gradient,
    dispersion_loss,
    dispersion_loss_direct,
    draw_deflation,
    jacobi_eigenvalues,
    rank1_deflate,
    sample_bound_instance,
    singular_values,
    smoothness_compare,
)
from .synthetic import make_synthetic
from .views import ViewPair, backprop_views, make_views

__version__ = "0.1.0"
