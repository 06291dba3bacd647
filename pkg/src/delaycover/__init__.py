"""Set-oriented computation of invariant sets of delay differential equations.

The pipeline: reconstruct states from points in R^k (delay embedding),
integrate the DDE by the method of steps, observe the result back into
R^k, and drive a subdivision/selection scheme over box coverings of a
compact study region until the boxes approximate the relative global
attractor of the embedded map.
"""

__version__ = "0.1.0"

from .analysis import (
    containment,
    estimate_box_dimension,
    hausdorff,
    poincare_slice,
    simulate_embedded_orbit,
)
from .boxes import BoxCollection, BoxRegion
from .dde import (
    DdeSystem,
    HistorySegment,
    Trajectory,
    evaluate_history,
    integrate,
    read_trajectory_text,
    write_trajectory_text,
)
from .embedding import (
    BootstrapPayload,
    EmbeddingConfig,
    EmbeddingWarning,
    Observable,
    ObservableLayout,
    embed_bootstrap,
    embed_initial,
    phi,
    phi_batch,
    restrict,
    scalar_layout,
)
from .errors import (
    ConfigError,
    DelayCoverError,
    DiscardedPointError,
    EmptyCollectionError,
    EmptyInputError,
    InsufficientDataError,
    LayoutMismatchError,
    NonFiniteStateError,
    OutOfDomainError,
)
from .models import ModelPreset, PRESETS, arneodo, mackey_glass, preset, wright, wright_orbit
from .subdivision import (
    BootstrapStore,
    RunConfig,
    SelectionReport,
    StepRecord,
    run_subdivision,
    run_subdivision_map,
    synthetic_map,
)

__all__ = [name for name in dir() if not name.startswith("_")]
