from cbdlab.models.experiment import (
    SUITE_NAMES,
    ExperimentConfig,
    OperatorKind,
    SymbolKind,
    WeightKind,
    WeightSpec,
)
from cbdlab.models.reports import (
    CommutatorReport,
    CubeRecord,
    DominationReport,
    EquivalenceReport,
    InequalityCheck,
    LTildeReport,
    PowerInequalityReport,
    ReportEnvelope,
    SingleScaleRecord,
    SparsenessAudit,
    SuiteResult,
    WeightedNormReport,
    WeightReport,
)

__all__ = [
    "SUITE_NAMES",
    "CommutatorReport",
    "CubeRecord",
    "DominationReport",
    "EquivalenceReport",
    "ExperimentConfig",
    "InequalityCheck",
    "LTildeReport",
    "OperatorKind",
    "PowerInequalityReport",
    "ReportEnvelope",
    "SingleScaleRecord",
    "SparsenessAudit",
    "SuiteResult",
    "SymbolKind",
    "WeightKind",
    "WeightReport",
    "WeightSpec",
    "WeightedNormReport",
]
