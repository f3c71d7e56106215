import logging
from typing import Optional

from dynamics.models import IntegratorConfig, NetworkState, RunRecord
from dynamics.services import solve
from formulation.models import ProblemInstance

logger = logging.getLogger(__name__)


def l2_baseline_solve(
    inst: ProblemInstance,
    config: Optional[IntegratorConfig] = None,
    init: Optional[NetworkState] = None,
    record: bool = False,
) -> RunRecord:
    """
    非鲁棒对照: 相同约束与动力学, 损失换为 ½u² (梯度中 tanh(γu) 换为 u)
    """
    baseline = inst if inst.loss == "l2" else inst.with_loss("l2")
    return solve(baseline, config, init=init, record=record)
