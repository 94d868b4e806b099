"""Distractor-injection problem sets and step-wise selection probes.

The package builds arithmetic chain problems with controlled distractor
premises, prompts models (or scripted agents) through them step by
step, and measures which premise gets picked as a function of how far
the reasoning still is from the answer.
"""

from .errors import StepProbeError
from .model import (
    Absolute,
    AnyProblem,
    Chain,
    Distractor,
    NaturalDistractor,
    NaturalProblem,
    PersonRef,
    Premise,
    Problem,
    ReasoningTrace,
    Relative,
    StatedFact,
    analyzed_steps,
    apply_premise,
    distance_before_step,
    read_problems_jsonl,
    write_problems_jsonl,
)
from .solver import distance, minimal_solution, validate_problem
from .generator import GenSpec, generate_dataset, generate_problem
from .prompts import PromptBundle, build_prompt, load_shot_set
from .judge import StepChoice, judge_step_choice, parse_trace
from .agents import Policy, run_injected, run_to_completion
from .gateway import (
    AgentSource,
    CachingSource,
    Completion,
    DirectoryCache,
    HttpSource,
    ModelSettings,
    ReplaySource,
    RequestMeta,
)
from .runner import run_experiment

__version__ = "0.1.0"

__all__ = [
    "Absolute",
    "AgentSource",
    "AnyProblem",
    "CachingSource",
    "Chain",
    "Completion",
    "DirectoryCache",
    "Distractor",
    "GenSpec",
    "HttpSource",
    "ModelSettings",
    "NaturalDistractor",
    "NaturalProblem",
    "PersonRef",
    "Policy",
    "Premise",
    "Problem",
    "PromptBundle",
    "ReasoningTrace",
    "Relative",
    "ReplaySource",
    "RequestMeta",
    "StatedFact",
    "StepChoice",
    "StepProbeError",
    "analyzed_steps",
    "apply_premise",
    "build_prompt",
    "distance",
    "distance_before_step",
    "generate_dataset",
    "generate_problem",
    "judge_step_choice",
    "load_shot_set",
    "minimal_solution",
    "parse_trace",
    "read_problems_jsonl",
    "run_experiment",
    "run_injected",
    "run_to_completion",
    "validate_problem",
    "write_problems_jsonl",
    "__version__",
]
