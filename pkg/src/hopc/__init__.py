"""Histogram of Oriented Principal Components for 3D pointcloud action recognition."""

from .config import ExperimentConfig
from .descriptor import (CellGrid, HolisticDescriptor, HopcDescriptor, holistic_descriptor,
                         hopc_point, project_and_quantize)
from .eigen import (Eigensystem, EigenRatios, ScatterMatrix, disambiguate_signs, eig3,
                    eigenratios, scatter)
from .errors import (ConfigError, DataError, HopcError, MalformedHeaderError, NumericalError,
                     TruncatedPayloadError, VersionMismatchError)
from .experiment import ExperimentReport, run_experiment
from .geom import (DirectionSet, Frame, PointCloudSequence, SupportVolume, accumulate_window,
                   icosahedron_axes, neighbor_threshold, neighbor_threshold_closed_form,
                   spherical_support)
from .io import (CameraIntrinsics, depth_to_cloud, load_codebook, load_descriptors, load_keypoints,
                 load_model, load_sequence, save_codebook, save_descriptors, save_keypoints,
                 save_model, save_sequence)
from .learn import (BowHistogram, ClassifierModel, Codebook, FoldPlan, bow_encode,
                    enumerate_folds, evaluate, hik, kmeans_codebook, svm_predict, svm_train)
from .stkp import (AlignedSupport, DetectorParams, Keypoint, LocalityParams, SurfaceDescriptor,
                   adaptive_spatial_scale, adaptive_temporal_scale, align_support, candidate_filter,
                   describe_keypoints, detect_stkp, quality, surface_descriptor)
from .synth import SynthScenario, action_suite, synth_generate

__version__ = "0.1.0"

__all__ = [
    "AlignedSupport",
    "BowHistogram",
    "CameraIntrinsics",
    "CellGrid",
    "ClassifierModel",
    "Codebook",
    "ConfigError",
    "DataError",
    "DetectorParams",
    "DirectionSet",
    "EigenRatios",
    "Eigensystem",
    "ExperimentConfig",
    "ExperimentReport",
    "FoldPlan",
    "Frame",
    "HolisticDescriptor",
    "HopcDescriptor",
    "HopcError",
    "Keypoint",
    "LocalityParams",
    "MalformedHeaderError",
    "NumericalError",
    "PointCloudSequence",
    "ScatterMatrix",
    "SupportVolume",
    "SurfaceDescriptor",
    "TruncatedPayloadError",
    "VersionMismatchError",
    "accumulate_window",
    "adaptive_spatial_scale",
    "adaptive_temporal_scale",
    "align_support",
    "bow_encode",
    "candidate_filter",
    "depth_to_cloud",
    "describe_keypoints",
    "detect_stkp",
    "disambiguate_signs",
    "eig3",
    "eigenratios",
    "enumerate_folds",
    "evaluate",
    "hik",
    "holistic_descriptor",
    "hopc_point",
    "icosahedron_axes",
    "kmeans_codebook",
    "load_codebook",
    "load_descriptors",
    "load_keypoints",
    "load_model",
    "load_sequence",
    "neighbor_threshold",
    "neighbor_threshold_closed_form",
    "project_and_quantize",
    "quality",
    "run_experiment",
    "save_codebook",
    "save_descriptors",
    "save_keypoints",
    "save_model",
    "save_sequence",
    "scatter",
    "spherical_support",
    "surface_descriptor",
    "svm_predict",
    "svm_train",
    "SynthScenario",
    "action_suite",
    "synth_generate",
]
