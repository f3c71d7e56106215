from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class KktReport:
    """
    KKT 残差报告

    Attributes:
        stationarity_inf_norm: ‖∇_z L_ρ(z, ν)‖∞
        projection_residual_inf_norm: max_i |[μ_i + α g_i(z)]⁺ − μ_i|
        primal_equality_inf_norm: ‖h(z)‖∞
        licq_min_singular_value: ∇_z h(z) 的最小奇异值
        active_inequality_count: |{i : g_i(z) ≥ −ε_act}|
    """
    stationarity_inf_norm: float
    projection_residual_inf_norm: float
    primal_equality_inf_norm: float
    licq_min_singular_value: float
    active_inequality_count: int

    @property
    def inf_norm(self) -> float:
        """三类残差中的最大值"""
        return max(
            self.stationarity_inf_norm,
            self.projection_residual_inf_norm,
            self.primal_equality_inf_norm,
        )

    def to_dict(self) -> dict:
        return asdict(self)
