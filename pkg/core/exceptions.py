from typing import Optional


class LocalizationError(Exception):
    """工具包内所有可预期错误的基类"""


class InvalidDeploymentError(LocalizationError, ValueError):
    """部署几何不满足不变量"""


class MeasurementRejectedError(LocalizationError, ValueError):
    """生成的时间戳 t_i ≤ 0, 违反时间约束前提"""

    def __init__(self, sensor_index: int, timestamp: float):
        self.sensor_index = sensor_index
        self.timestamp = timestamp
        super().__init__(
            f"timestamp of sensor {sensor_index} is {timestamp!r} (must be > 0)"
        )


class SolverFault(LocalizationError, RuntimeError):
    """动力学右端出现非有限值"""

    def __init__(self, block: str, index: int, time: Optional[float] = None):
        self.block = block
        self.index = index
        self.time = time
        where = f" at t={time:.6g}" if time is not None else ""
        super().__init__(f"non-finite derivative in {block}[{index}]{where}")


class DegenerateGeometryError(LocalizationError, ValueError):
    """几何退化 (例如 Fisher 信息矩阵奇异)"""


class EmptyFeasibleGridError(LocalizationError, ValueError):
    """网格上没有满足约束的点"""


class ConfigError(LocalizationError, ValueError):
    """配置文件无法解析或包含非法字段"""


class IntegrationError(LocalizationError, RuntimeError):
    """ODE 求解器未能推进到目标时刻 (步长过小等)"""

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        where = f" at t={time:.6g}" if time is not None else ""
        super().__init__(f"integration failed{where}: {message}")
