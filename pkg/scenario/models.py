from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.config import settings


ScenarioKind = Literal["deterministic-perimeter", "random-square"]


class ScenarioSpec(BaseModel):
    """
    实验场景 (配置文件 [scenario] 段)

    nlos 为 1-based (传感器编号, ω) 列表; preset 与 nlos 二选一。
    """
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    kind: ScenarioKind = "deterministic-perimeter"
    region_side: float = Field(default_factory=lambda: settings.region_side)
    L: int = 8
    source: Union[List[float], Literal["random"]] = Field(default_factory=lambda: [2.0, 3.0])
    nlos_pattern: List[Tuple[int, float]] = Field(default_factory=list, alias="nlos")
    preset: Optional[str] = None
    preset_omega: float = 5.0
    trials: int = Field(default_factory=lambda: settings.trials)
    seed: int = 0
    redraw_nlos: bool = False
    onset_time: float = Field(default_factory=lambda: settings.onset_time)
    propagation_speed: float = Field(default_factory=lambda: settings.propagation_speed)

    @field_validator("region_side", "propagation_speed")
    @classmethod
    def _positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("onset_time", "preset_omega")
    @classmethod
    def _nonnegative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("must be >= 0")
        return value

    @field_validator("trials")
    @classmethod
    def _trials(cls, value: int) -> int:
        if value < 0:
            raise ValueError("trials must be >= 0")
        return value

    @model_validator(mode="after")
    def _check_geometry(self) -> "ScenarioSpec":
        if self.source != "random" and len(self.source) not in (2, 3):
            raise ValueError("source must be 'random' or a 2-/3-element position")
        if self.L < self.k + 1:
            raise ValueError(f"L must be >= k+1 = {self.k + 1}")
        if self.kind == "deterministic-perimeter":
            if self.source == "random":
                raise ValueError("deterministic-perimeter needs a fixed source position")
            if self.k != 2:
                raise ValueError("deterministic-perimeter is a 2-D layout")
        if self.preset is not None and self.nlos_pattern:
            raise ValueError("give either 'preset' or 'nlos', not both")
        for index, omega in self.nlos_pattern:
            if not 1 <= index <= self.L:
                raise ValueError(f"NLOS sensor index {index} out of range 1..{self.L}")
            if omega < 0:
                raise ValueError(f"NLOS upper bound for sensor {index} must be >= 0")
        if self.preset is not None:
            # 延迟导入, 避免循环依赖
            from scenario.services import preset_pattern
            preset_pattern(self.preset, self.L, self.preset_omega)
        return self

    @property
    def k(self) -> int:
        return 2 if self.source == "random" else len(self.source)
