"""extraplab: a numerical laboratory for gradient descent on linear recurrent
models and the solutions it selects among the many that fit short sequences."""

__version__ = "0.1.0"

from .model import LinearRNN
from .objective import GradTriple, MemorylessTeacher
from .training import InitSpec, OptimizerSpec, TrainRecord

__all__ = [
    "LinearRNN",
    "GradTriple",
    "MemorylessTeacher",
    "InitSpec",
    "OptimizerSpec",
    "TrainRecord",
    "__version__",
]
