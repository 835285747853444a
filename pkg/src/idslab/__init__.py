"""Streaming data selection with error-times-similarity acquisition scores.

Examples arrive one at a time from a finite pool; the engine accepts or
rejects each against a rolling percentile threshold while training a
linear-softmax readout on what it keeps, up to a fixed budget.
"""

from .harness import (
    IDSConfig,
    RunResult,
    SourceExhaustedError,
    auto_delta,
    run,
)
from .model import (
    LinearSoftmaxModel,
    cross_entropy,
    evaluate_accuracy,
    init_model,
    prediction_error,
)
from .scoring import (
    AcquisitionMethod,
    ClassPrototypes,
    MethodConfig,
    PrototypeSource,
    compute_prototypes,
)
from .stream import (
    Dataset,
    Example,
    PoolSource,
    SyntheticSourceSpec,
    load_embeddings,
    synth_build,
    write_embeddings,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionMethod",
    "ClassPrototypes",
    "Dataset",
    "Example",
    "IDSConfig",
    "LinearSoftmaxModel",
    "MethodConfig",
    "PoolSource",
    "PrototypeSource",
    "RunResult",
    "SourceExhaustedError",
    "SyntheticSourceSpec",
    "auto_delta",
    "compute_prototypes",
    "cross_entropy",
    "evaluate_accuracy",
    "init_model",
    "load_embeddings",
    "prediction_error",
    "run",
    "synth_build",
    "write_embeddings",
]
