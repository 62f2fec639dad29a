"""
Constants used throughout callaudit.

These control message formatting, the DOT interchange schema, the label
vocabulary and a few numerical guards of the model.
"""

import os

# Marker used to format workflow-command style messages
COMMAND_MARKER: str = "::"

# Whether debug messages are printed (also switchable at runtime)
DEBUG_ENABLED: bool = os.environ.get("CALLAUDIT_DEBUG", "").lower() in ("1", "true", "yes", "on")

# Color written on external-call edges
EXTERNAL_EDGE_COLOR: str = "orange"

# Color Surya-style generators put on internal edges; read back as internal
SURYA_INTERNAL_EDGE_COLOR: str = "#1bc6a6"

# Label reserved for vocabulary index 0
OOV_LABEL: str = "<oov>"

# Relation order of the adjacency stack
RELATIONS: tuple[str, ...] = ("internal", "external")

# Node labels that mark a return-value check next to an external call
CHECK_LABELS: frozenset[str] = frozenset({"require_check", "if_check", "assert_check"})

# Graphs with more real nodes than this get a sampled edge-prediction pair set
MAX_PAIR_NODES: int = 128

# Bound applied to the edge-prediction exponent before exp()
EDGE_SCORE_CLAMP: float = 30.0

# Maximum size for a written Markdown report in bytes (1 MiB)
MAX_REPORT_SIZE: int = 1024 * 1024
