"""Quantum-incoherent channel classes, membership tests and distillation SDPs."""
__version__ = "0.1.0"

from .channels import (
    ChannelError,
    ChoiOperator,
    Instrument,
    KrausChannel,
    apply,
    as_choi,
    channels_equal,
    choi_from_kraus,
    compose,
    kraus_from_choi,
)
from .classes import (
    CLASS_TESTS,
    basis_state,
    is_cqip,
    is_incoherent_state,
    is_io,
    is_mio,
    is_ppt,
    is_qi_state,
    is_qip,
    probe_basis,
)
from .distillation import (
    DistillationProblem,
    asymptotic_rate,
    build_example_state,
    hierarchy_demo,
    max_fidelity_distillation,
    maximally_coherent,
    min_trace_distance_distillation,
    one_shot_rate,
    qi_relative_entropy_closed_form,
)
from .linalg import DensityOperator, HermitianOperator, LayoutError, SystemLayout
from .verdict import MembershipVerdict
