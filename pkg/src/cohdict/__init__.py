"""Dictionary learning with bounded self-coherence.

Sparse coders (OMP, LARC), the coherence-penalized dictionary update,
K-SVD / INK-SVD baselines, frame metrics and desk-scale experiments.
"""

from cohdict.types import (
    DataMatrix,
    Dictionary,
    GramSummary,
    SparseCoding,
    TrainConfig,
    ValidationError,
)
from cohdict.matrix_io import MatrixFormatError, load_matrix, save_matrix
from cohdict.coherence import (
    erc_max_cardinality,
    etf_flat_value,
    gram_offdiag_histogram,
    gram_summary,
    mutual_coherence,
    singular_spectrum,
    welch_bound,
)
from cohdict.coding import (
    Cardinality,
    CodingError,
    Larc,
    ResidualCoherence,
    ResidualNorm,
    batch_code,
    larc,
    omp,
)
from cohdict.idl import (
    LbfgsParams,
    idl_dictionary_update,
    idl_gradient,
    idl_objective,
    lbfgs_minimize,
    renormalize_atoms,
)
from cohdict.baselines import (
    DecorrelationReport,
    inksvd_decorrelate,
    inksvd_decorrelate_pair,
    ksvd_atom_update,
    ksvd_replace,
)
from cohdict.trainer import (
    IDL,
    KSVDInkSVD,
    KSVDReplace,
    TrainHistory,
    init_dictionary,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Cardinality",
    "CodingError",
    "Larc",
    "DataMatrix",
    "DecorrelationReport",
    "Dictionary",
    "GramSummary",
    "IDL",
    "KSVDInkSVD",
    "KSVDReplace",
    "LbfgsParams",
    "MatrixFormatError",
    "ResidualCoherence",
    "ResidualNorm",
    "SparseCoding",
    "TrainConfig",
    "TrainHistory",
    "ValidationError",
    "batch_code",
    "erc_max_cardinality",
    "etf_flat_value",
    "gram_offdiag_histogram",
    "gram_summary",
    "idl_dictionary_update",
    "idl_gradient",
    "idl_objective",
    "init_dictionary",
    "inksvd_decorrelate",
    "inksvd_decorrelate_pair",
    "ksvd_atom_update",
    "ksvd_replace",
    "larc",
    "lbfgs_minimize",
    "load_matrix",
    "mutual_coherence",
    "omp",
    "renormalize_atoms",
    "save_matrix",
    "singular_spectrum",
    "train",
    "welch_bound",
]
