"""Configuration module for distopt."""

from config.settings import (
    ExecutionKind,
    HessianMode,
    Settings,
    SolveStatus,
    get_settings,
    refresh_settings,
)

__all__ = [
    "ExecutionKind",
    "HessianMode",
    "Settings",
    "SolveStatus",
    "get_settings",
    "refresh_settings",
]
