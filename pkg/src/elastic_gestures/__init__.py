"""Elastic kernel machines for isolated gesture recognition on motion capture data."""

from .downsample import (DownsamplePlan, adaptive_plan_greedy, adaptive_plan_optimal,
                         apply_plan, reconstruct_linear, resample_to_length, uniform_plan)
from .kernels import (CrossGram, GramMatrix, KernelParams, dtw_distance, dtw_rbf,
                      euclid_rbf_kernel, euclidean_sq, gram, gram_cross, normalize_kernel,
                      rdtw_kernel)
from .motion import (DescriptorSpec, MotionSequence, SkeletonTopology, compression_ratio,
                     extract_descriptor)
from .svm import BinaryDual, SvmModel, predict, train, train_binary

__version__ = "0.1.0"
