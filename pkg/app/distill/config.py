from dataclasses import dataclass


@dataclass
class DistillConfig:
    """Self-distillation hyperparameters"""
    student_temp: float = 0.1
    teacher_temp: float = 0.04
    warmup_teacher_temp: float = 0.04
    warmup_teacher_temp_epochs: int = 0
    center_momentum: float = 0.9
    momentum_start: float = 0.996
    momentum_end: float = 1.0
    n_local: int = 2

    def __post_init__(self):
        for name in ("teacher_temp", "warmup_teacher_temp"):
            value = getattr(self, name)
            if not 0 < value <= self.student_temp:
                raise ValueError(
                    f"{name} must lie in (0, student_temp], got {value}"
                )
        for name in ("center_momentum", "momentum_start", "momentum_end"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.n_local < 0:
            raise ValueError("n_local must be >= 0")
        if self.warmup_teacher_temp_epochs < 0:
            raise ValueError("warmup_teacher_temp_epochs must be >= 0")

    @property
    def pair_count(self):
        """M = 2 (m + 1) teacher/student view pairs"""
        return 2 * (self.n_local + 1)
