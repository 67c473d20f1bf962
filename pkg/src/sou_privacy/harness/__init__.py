"""Experiment harness: synthetic corpus, pipeline stages, runner, reports and CLI."""
from .experiment import ExperimentConfig, RunReport, run_experiment
from .report import emit_report
from .synth import SynthConfig, generate_synthetic_corpus

__all__ = ["ExperimentConfig", "RunReport", "SynthConfig", "emit_report", "generate_synthetic_corpus", "run_experiment"]
