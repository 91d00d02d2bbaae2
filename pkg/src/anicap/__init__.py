"""Anisotropic capillary convex geometry and the capillary L_p-Minkowski solver."""

from .errors import (AnicapError, NonConvexNorm, DegeneratePoint,
                     InvalidContactAngle, PointOffCap, NotBoundaryPoint,
                     FormMismatch, ChartFailure, SingularMetric, NotAdmissible,
                     NotPositive, NotSymmetricNorm, ProjectionBreaksPositivity,
                     ConditionFailed, AdmissibilityLost, NoConvergence,
                     ConfigError)
from .norms import MinkowskiNorm, TranslatedNorm, DualJet, eval_norm, dual_norm, fd_oracle_jet
from .wulff import WulffShape, CapillaryCap, e_f_vector, build_cap
from .domain import CapGrid, MetricData, build_grid, assemble_metric

__version__ = "0.1.0"
