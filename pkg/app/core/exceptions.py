"""
Error types shared by the numerical packages and the pipeline
"""


class ConvergenceError(ArithmeticError):
    """Iterative solver stopped at its iteration cap"""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DisconnectedGraphError(ValueError):
    """Affinity graph splits into pieces, reported by one stranded vertex"""

    def __init__(self, vertex, reason="has zero degree"):
        super().__init__(f"Vertex {vertex} {reason}")
        self.vertex = vertex


class NonFiniteError(FloatingPointError):
    """A tensor holds NaN or Inf"""

    def __init__(self, name):
        super().__init__(f"Non-finite values in {name}")
        self.name = name


class StaleCacheError(RuntimeError):
    pass


class CheckpointMismatchError(ValueError):
    """Checkpoint tensors do not fit the model built from the config"""

    def __init__(self, mismatches):
        lines = "\n".join(f"  {m}" for m in mismatches)
        super().__init__(f"Checkpoint is incompatible:\n{lines}")
        self.mismatches = list(mismatches)


class ConfigError(ValueError):

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class DatasetError(OSError):

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
