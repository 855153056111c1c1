from .config import ExperimentConfig
from .evaluate import EvalReport, evaluate_agent, run_episode, write_manifest
from .sweeps import run_heatmap, run_sweep, run_trace
