"""Geometry-first tabular classification with quantum-inspired similarity channels."""

__version__ = "0.1.0"

from .data import Dataset, Scaler, CorrelationModel, load_csv, stratified_split, fit_scaler, correlation
from .cgr import AnchorModel, CgrConfig, CgrFeatures, build_anchor_model, build_feature_matrix
from .medoid import MedoidSet, euclidean_medoid, fit_class_medoids
from .quantum import StateVector, GeomPair, compact_swap_test, prepare_compact_states
from .fusion import FusionParams, MetricsReport, fusion_infer, evaluate, calibrate_alpha, fbeta_sweep
from .optimizer import SearchRecord, coordinate_descent, score_config
from .delta import DeltaFeatures, build_deltas, standardize_deltas
from .vqc import VqcSpec, SpsaConfig, VqcModel, angle_map, build_circuit, forward_probs, spsa_train, kfold_train
from .artifacts import FusionArtifact, persist_top_r, score_record, load_fusion_artifact, load_vqc_artifact
