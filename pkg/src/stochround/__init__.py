"""Approximation algorithms for stochastic covering programs and 2-stage facility location."""

from .harness import EvalParams, TrialReport, evaluate, report_render
from .instances import (GeneratorConfig, ScenarioTreeCip, SuflInstance, counterexample_instance, generate_cip_tree,
                        generate_sufl, load_instance, save_instance)
from .lp import solve_cip, solve_sufl
from .oracles import oracle_cip, oracle_sufl

__version__ = "0.1.0"

__all__ = [
    "EvalParams", "TrialReport", "evaluate", "report_render", "GeneratorConfig", "ScenarioTreeCip", "SuflInstance",
    "counterexample_instance", "generate_cip_tree", "generate_sufl", "load_instance", "save_instance", "solve_cip",
    "solve_sufl", "oracle_cip", "oracle_sufl",
]
