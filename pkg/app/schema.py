from typing import Optional, TypedDict


class RejectTD(TypedDict):
    row_id: str
    reason: str


class MetricRowTD(TypedDict):
    model: str
    cohort: str
    training_error: Optional[float]
    test_error: Optional[float]
    qwk: float
    accuracy: float
    balanced_accuracy: float
    macro_f1: float
    log_loss: Optional[float]
    mse: Optional[float]
    error_metric: str


class HeatmapCellTD(TypedDict):
    p_tab: float
    p_text: float
    cohort: str
    metric: str
    value: float


class StrataRowTD(TypedDict):
    bracket: str
    n: int
    both_intact: Optional[float]
    no_tabular: Optional[float]
    no_text: Optional[float]
