__all__ = (  # noqa: F405
    "VERSION",
    "VERSION_SHORT",
    # Print messages
    "echo",
    "info",
    "debug",
    "notice",
    "warning",
    "error",
    "start_group",
    "end_group",
    "group",
    # Call graph frontend
    "CallGraph",
    "GraphNode",
    "GraphEdge",
    "EdgeKind",
    "build_project_graph",
    "discover_projects",
    "extract_project",
    "emit_dot",
    "parse_dot",
    # Dataset
    "LabelVocab",
    "GraphSample",
    "Batch",
    "build_vocab",
    "featurize",
    "pad_batch",
    "read_manifest",
    "build_dataset",
    # Model
    "ModelConfig",
    "RunConfig",
    "Ablation",
    "LossName",
    "load_config",
    "CallGraphClassifier",
    "Checkpoint",
    "load_checkpoint",
    # Training and evaluation
    "Metrics",
    "train",
    "evaluate",
    "run_ablation",
    "run_sweep",
    # Synthetic corpus
    "SyntheticSpec",
    "generate_corpus",
    # Reports
    "Report",
    "ReportTemplate",
    # Signal handling class
    "CancellationHandler",
    # Command line
    "main",
)

from .call_graph import (  # noqa: F403
    CallGraph,
    EdgeKind,
    GraphEdge,
    GraphNode,
    build_project_graph,
    discover_projects,
    extract_project,
)
from .checkpoint import Checkpoint, load_checkpoint  # noqa: F403
from .cli import main  # noqa: F403
from .config import Ablation, LossName, ModelConfig, RunConfig, load_config  # noqa: F403
from .dot_format import emit_dot, parse_dot  # noqa: F403
from .graph_cache import build_dataset  # noqa: F403
from .graph_ingest import (  # noqa: F403
    Batch,
    GraphSample,
    LabelVocab,
    build_vocab,
    featurize,
    pad_batch,
    read_manifest,
)
from .metrics import Metrics  # noqa: F403
from .model import CallGraphClassifier  # noqa: F403
from .print_messages import *  # noqa: F403
from .report import Report, ReportTemplate  # noqa: F403
from .signal_handling import CancellationHandler  # noqa: F403
from .synthetic import SyntheticSpec, generate_corpus  # noqa: F403
from .training import evaluate, run_ablation, run_sweep, train  # noqa: F403
from .version import VERSION, VERSION_SHORT  # noqa: F403
