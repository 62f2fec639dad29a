"""
Version information for callaudit.

The package version follows semantic versioning. The on-disk formats written by
the package (checkpoints and featurized graph caches) carry their own integer
versions, bumped only when a reader of the previous layout would misread a file.
"""

_MAJOR = "0"
_MINOR = "1"
_PATCH = "0"
# Nightly builds use a ".dev$DATE" suffix.
_SUFFIX = ""

VERSION_SHORT = f"{_MAJOR}.{_MINOR}"
VERSION = f"{_MAJOR}.{_MINOR}.{_PATCH}{_SUFFIX}"

# Layout of the ZIP container written by `callaudit.checkpoint`.
CHECKPOINT_FORMAT_VERSION = 1

# Layout of the featurized sample container written by `callaudit.graph_cache`.
CACHE_FORMAT_VERSION = 1
