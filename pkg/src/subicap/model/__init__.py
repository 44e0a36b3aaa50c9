"""Region-conditioned caption model: geometry, transformer, training,
decoding, and the synthetic scene generator."""

from .decoding import (
    Hypothesis,
    beam_search,
    beam_step_decode,
    caption_regions,
    greedy_decode,
    greedy_step_decode,
    model_step_fn,
)
from .geometry import (
    Region,
    RegionSet,
    displacement,
    displacement_matrix,
    fused_attention,
    geometric_weights,
    positional_embed,
)
from .synthetic import (
    CLASS_NAMES,
    GRAMMAR_WORDS,
    RELATIONS,
    Scene,
    class_templates,
    load_scenes,
    nearest_template_accuracy,
    save_scenes,
    synthetic_regions,
)
from .training import AdamState, TrainConfig, fit, grad_check, next_token_accuracy, train_step
from .transformer import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    ModelConfig,
    decoder_forward,
    encoder_forward,
    frame_sequence,
    init_params,
    load_checkpoint,
    loss_and_grads,
    loss_only,
    num_params,
    paper_scale_config,
    param_shapes,
    save_checkpoint,
    sinusoid_positions,
)

__all__ = [
    "AdamState",
    "BOS_ID",
    "CLASS_NAMES",
    "EOS_ID",
    "GRAMMAR_WORDS",
    "Hypothesis",
    "ModelConfig",
    "PAD_ID",
    "Region",
    "RegionSet",
    "RELATIONS",
    "Scene",
    "TrainConfig",
    "beam_search",
    "beam_step_decode",
    "caption_regions",
    "class_templates",
    "decoder_forward",
    "displacement",
    "displacement_matrix",
    "encoder_forward",
    "fit",
    "frame_sequence",
    "fused_attention",
    "geometric_weights",
    "grad_check",
    "greedy_decode",
    "greedy_step_decode",
    "init_params",
    "load_checkpoint",
    "load_scenes",
    "loss_and_grads",
    "loss_only",
    "model_step_fn",
    "nearest_template_accuracy",
    "next_token_accuracy",
    "num_params",
    "paper_scale_config",
    "param_shapes",
    "positional_embed",
    "save_checkpoint",
    "save_scenes",
    "sinusoid_positions",
    "synthetic_regions",
    "train_step",
]
