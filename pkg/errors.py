"""Exception hierarchy shared by every scene-graph module.

Library code raises; only the CLI catches and maps to exit codes
(input errors -> 2, numeric failures -> 3).
"""

from typing import Any, Dict, Optional


class SceneGraphError(Exception):
    """Base class for all scene-graph errors"""

    exit_code = 2


class InvalidArgumentError(SceneGraphError, ValueError):
    pass


class DegenerateSegmentError(SceneGraphError):
    pass


class EmptyGraphError(SceneGraphError):
    pass


class GenerationError(SceneGraphError):
    pass


class DegenerateRoomError(SceneGraphError):
    pass


class ModelMismatchError(SceneGraphError):
    pass


class EmptyDatasetError(SceneGraphError):
    pass


class SchemaError(SceneGraphError):
    """Malformed artifact; `pointer` is a JSON pointer to the offending value"""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


class NumericFailure(SceneGraphError):
    """Non-finite loss or gradient during training"""

    exit_code = 3

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        super().__init__(f"{message} ({details})" if details else message)


class SingularSystemError(SceneGraphError):
    """Normal equations stayed singular after damping escalation"""

    exit_code = 3

    def __init__(self, message: str, condition: float, damping: float):
        self.condition = condition
        self.damping = damping
        super().__init__(f"{message} (cond={condition:.3e}, damping={damping:.1e})")
