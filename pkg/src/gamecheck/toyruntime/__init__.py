from .templates import Engine, FAULT_VOCABULARY, TEMPLATE_NAMES, schema_for, initial_state
from .local import LocalRuntime, LocalSession
from .oracle import OracleError, oracle_simulate

__all__ = [
    "Engine",
    "FAULT_VOCABULARY",
    "TEMPLATE_NAMES",
    "schema_for",
    "initial_state",
    "LocalRuntime",
    "LocalSession",
    "OracleError",
    "oracle_simulate",
]
