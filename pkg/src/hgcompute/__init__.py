"""Epsilon-ball hypergraph computation for multi-scale feature pyramids."""
from .config import PRESETS, BackboneConfig, NeckConfig
from .hypergraph import (
    DegreePair,
    EpsilonBallParams,
    Hypergraph,
    build_epsilon_ball_hypergraph,
    degrees,
    graphconv_low_order,
    hyperconv,
    hyperconv_grad_theta,
    hyperconv_oracle,
    propagation_matrix,
)
from .distance import pairwise_sq_distances
from .tensor import ConvBlockParams, FeatureMatrix, TensorMap

__version__ = "0.1.0"
