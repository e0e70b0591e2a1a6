"""Confluent-trajectory centerline trees: codecs, TNMS, matching, metrics, synthesis and tracing."""
from .codec import (ConfluentTrajectorySet, TrajectoryTargets, cluster_by_divergence, decode_tree,
                    discretize, encode_targets, merge_cluster)
from .graph import (Branch, CenterlineNode, CenterlineTree, InvalidTreeError, PatchRegion, TreeBuilder,
                    ValidationReport, branch_decomposition, crop_to_patch, read_tree, trees_isomorphic,
                    validate_tree, write_tree)
from .matching import (Assignment, LossWeights, MatchWeights, PredictionSequence, assign, compute_losses,
                       cost_matrix, hungarian, loss_div, loss_end, loss_pos_rad, replicate_targets, total_loss)
from .metrics import MetricsReport, branch_metrics, evaluate, match_points, match_threshold, point_metrics
from .spatial import SpatialIndex
from .synth import CorruptionParams, SynthParams, corrupt_tree, generate_tree
from .tnms import TnmsConfig, runtime_scaling_probe, tnms
from .tracer import OracleConfig, OracleProposer, Proposer, TraceConfig, TraceResult, oracle_propose, trace

__version__ = "0.1.0"
