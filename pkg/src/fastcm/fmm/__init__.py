"""Multilevel fast multipole matvec engine."""

from fastcm.fmm.engine import (
    KINDS,
    LowFrequencyWarning,
    MlfmaEngine,
    MlfmaSystem,
    OperatorHandle,
    dense_operators,
)
from fastcm.fmm.pointtest import point_decomposition_error, point_test_rows, write_point_test_csv
from fastcm.fmm.signatures import FarFieldSignature, compute_signatures
from fastcm.fmm.sphere import (
    SphereQuadrature,
    anterp_signature,
    anterpolation_matrix,
    anterpolation_operator,
    interp_signature,
    interpolation_matrix,
    interpolation_operator,
    sphere_quadrature,
)
from fastcm.fmm.translators import (
    KERNELS,
    TranslatorTable,
    build_translator_table,
    translator,
    truncation_number,
)

__all__ = [
    "KERNELS",
    "KINDS",
    "FarFieldSignature",
    "LowFrequencyWarning",
    "MlfmaEngine",
    "MlfmaSystem",
    "OperatorHandle",
    "SphereQuadrature",
    "TranslatorTable",
    "anterp_signature",
    "anterpolation_matrix",
    "anterpolation_operator",
    "build_translator_table",
    "compute_signatures",
    "dense_operators",
    "interp_signature",
    "interpolation_matrix",
    "interpolation_operator",
    "point_decomposition_error",
    "point_test_rows",
    "sphere_quadrature",
    "translator",
    "truncation_number",
    "write_point_test_csv",
]
