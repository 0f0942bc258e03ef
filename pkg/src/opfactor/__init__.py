"""Factorizations of matrices and block operators into nilpotent and
quasi-nilpotent factors, with finite-window certificates."""

from . import blockop, bundle, decompose, errors, families, linalg, mmio, nil, qn
from .blockop import (
    BlockOperator, BlockShape, PowerNormSequence, compose, gelfand_estimate, power_norms,
    triangular_qn_certificate, truncate, weighted_diag_qn_bound,
)
from .decompose import canonical_form, joint_canonical_form, triple_decomposition
from .nil import (
    check_nilpotent_product_necessity, common_nilpotent_sandwich, common_nilpotent_two_sided,
    factor_two_nilpotents, nil_decomposition, pad_for_balance,
)
from .qn import (
    common_factor_general, common_left_factor_compact, common_right_factor_compact,
    douglas_solve, factor_quasinilpotent, qq_star_factor, split_compact_domain,
    split_compact_range, two_sided_compact,
)

__version__ = "0.1.0"
