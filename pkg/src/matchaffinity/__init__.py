"""Affinity-matrix estimation for entropy-regularized matching markets.

Estimate marital-surplus affinity matrices from couple-level data in both
unipartite (same-population, symmetric coupling) and bipartite markets,
solve the underlying matching equilibrium, decompose the surplus into
orthogonal sorting indices, and validate everything against synthetic
markets generated from known parameters.
"""

from .data import (BIPARTITE, UNIPARTITE, EmpiricalCoupling, MarketSample,
                   ProfileArray, Standardization, assign_roles,
                   build_bipartite, build_sample, coupling_from,
                   destandardize, ingest, recompute_cross_moments,
                   resample_couples, symmetrize)
from .descriptives import (DescriptiveReport, HomogamyTable, correlations,
                           describe, homogamy_rates, sample_means)
from .equilibrium import (AffinityModel, EquilibriumMatching,
                          equilibrium_utilities, sinkhorn, social_gain,
                          solve, surplus_matrix)
from .estimation import (FitOptions, FitResult, NormalizedModel,
                         categorical_surplus_share, fit, fit_bipartite,
                         normalize, surplus_share, systematic_share_total)
from .estimator import AffinityEstimator
from .exceptions import (ConvergenceError, DataError, IdentificationError,
                         InferenceError, MatchAffinityError,
                         NormalizationError)
from .inference import (BootstrapResult, SymmetryTest, bootstrap,
                        parameter_names, test_symmetry)
from .saliency import (SaliencyDecomposition, decompose, decompose_bipartite,
                       reconstruct)
from .schema import CategoricalDef, IndividualProfile, TraitSchema
from .synthesis import (GaussianComponent, ScenarioSpec, TraitLaw, generate,
                        generate_frame, mixed_orientation_share,
                        pooled_market_preset, scenario_from_dict,
                        scenario_to_dict, scenario_truth)

__version__ = "0.1.0"

__all__ = [
    "AffinityEstimator",
    "AffinityModel",
    "BIPARTITE",
    "BootstrapResult",
    "CategoricalDef",
    "ConvergenceError",
    "DataError",
    "DescriptiveReport",
    "EmpiricalCoupling",
    "EquilibriumMatching",
    "FitOptions",
    "FitResult",
    "GaussianComponent",
    "HomogamyTable",
    "IdentificationError",
    "IndividualProfile",
    "InferenceError",
    "MarketSample",
    "MatchAffinityError",
    "NormalizationError",
    "NormalizedModel",
    "ProfileArray",
    "SaliencyDecomposition",
    "ScenarioSpec",
    "Standardization",
    "SymmetryTest",
    "TraitLaw",
    "TraitSchema",
    "UNIPARTITE",
    "assign_roles",
    "bootstrap",
    "build_bipartite",
    "build_sample",
    "categorical_surplus_share",
    "correlations",
    "coupling_from",
    "decompose",
    "decompose_bipartite",
    "describe",
    "destandardize",
    "equilibrium_utilities",
    "fit",
    "fit_bipartite",
    "generate",
    "generate_frame",
    "homogamy_rates",
    "ingest",
    "mixed_orientation_share",
    "normalize",
    "parameter_names",
    "pooled_market_preset",
    "recompute_cross_moments",
    "reconstruct",
    "resample_couples",
    "sample_means",
    "scenario_from_dict",
    "scenario_to_dict",
    "scenario_truth",
    "sinkhorn",
    "social_gain",
    "solve",
    "surplus_matrix",
    "surplus_share",
    "symmetrize",
    "systematic_share_total",
    "test_symmetry",
]
