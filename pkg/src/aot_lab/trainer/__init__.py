from .optim import LrSchedule, OptimizerState, adamw_step, lr_at
from .runlog import RunLog
from .spec import ExperimentSpec, LanguageSpec

__all__ = ["ExperimentSpec", "LanguageSpec", "LrSchedule", "OptimizerState", "RunLog",
           "adamw_step", "lr_at"]
