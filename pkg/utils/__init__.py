"""Utilities module for distopt: logging, run history and artifact files."""

from utils.logging_utils import RunLogger, configure_logging
from utils.file_utils import ArtifactWriter, load_dataset

__all__ = ["RunLogger", "configure_logging", "ArtifactWriter", "load_dataset"]
