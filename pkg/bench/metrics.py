from typing import Sequence

import numpy as np


def rmse(errors: Sequence[float]) -> float:
    """RMSE = √(1/n Σ e²); 空输入返回 nan"""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean(e * e)))


def empirical_cdf(errors: Sequence[float]) -> np.ndarray:
    """
    经验 CDF, 返回 (n, 2) 数组 [误差, 累计比例], 最后一行为 (最大误差, 1.0)
    """
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        return np.empty((0, 2))
    fraction = np.arange(1, e.size + 1) / e.size
    return np.column_stack((e, fraction))


def cdf_at(errors: Sequence[float], levels: Sequence[float]) -> np.ndarray:
    """在给定误差水平上求经验 CDF: #{e ≤ level} / n"""
    e = np.sort(np.asarray(errors, dtype=float))
    levels = np.asarray(levels, dtype=float)
    if e.size == 0:
        return np.zeros_like(levels)
    return np.searchsorted(e, levels, side="right") / e.size
