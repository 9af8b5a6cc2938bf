"""Restricted black-box structure attacks on graph embedding models."""

from .attacker import (AttackContext, AttackRequest, AttackResult, Method, ScoredFlip, candidate_set,
                       degree_attack, gf_attack, random_attack, run_attack)
from .graph import (AttributedGraph, DegreeProfile, EdgeFlip, apply_flips, degree_profile,
                    largest_connected_component, load_dataset, load_graph)
from .losses import (AttackLossSpec, FilterFamily, SignalEnergy, deepwalk_score, rank_bound_check,
                     sgc_score, signal_energy)
from .spectral import (PerturbedSpectrum, SpectralDecomposition, decompose, perturb_eigenvalues,
                       spectral_tail_indices)

__version__ = "0.1.0"

__all__ = [
    "AttackContext", "AttackRequest", "AttackResult", "Method", "ScoredFlip", "candidate_set", "degree_attack",
    "gf_attack", "random_attack", "run_attack",
    "AttributedGraph", "DegreeProfile", "EdgeFlip", "apply_flips", "degree_profile",
    "largest_connected_component", "load_dataset", "load_graph",
    "AttackLossSpec", "FilterFamily", "SignalEnergy", "deepwalk_score", "rank_bound_check", "sgc_score",
    "signal_energy",
    "PerturbedSpectrum", "SpectralDecomposition", "decompose", "perturb_eigenvalues", "spectral_tail_indices",
]
