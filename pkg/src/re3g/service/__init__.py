from .config import PipelineConfig, resolve_run_dir, write_config_echo
from .pipeline import Pipeline, Session, SessionStore, TurnRecord

__all__ = [
    "Pipeline",
    "PipelineConfig",
    "Session",
    "SessionStore",
    "TurnRecord",
    "resolve_run_dir",
    "write_config_echo",
]
