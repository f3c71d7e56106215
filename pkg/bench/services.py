import json
import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from bench.baseline import l2_baseline_solve
from bench.crlb import crlb_los
from bench.metrics import empirical_cdf, rmse
from bench.models import (
    BenchmarkResult,
    ExperimentConfig,
    SweepSpec,
    TrialOutcome,
    TrialTask,
)
from core.config import settings
from core.exceptions import ConfigError, DegenerateGeometryError, MeasurementRejectedError
from core.performance_monitor import ConcurrencyLimiter, log_memory, measure_time, monitor
from core.utils import numbered_columns, trial_rng, write_csv
from dynamics.models import RunRecord
from dynamics.services import solve, write_trace
from formulation.models import ProblemInstance
from measurement.models import Deployment
from measurement.services import generate_measurements
from scenario.services import base_pattern, build_for_trial, noise_for_trial

logger = logging.getLogger(__name__)

# 试验内各随机流的键
GEOMETRY_STREAM, NLOS_STREAM, NOISE_STREAM = 0, 1, 2


# ========== 单次试验 ==========

def prepare_trial(task: TrialTask) -> Tuple[Deployment, ProblemInstance, bool]:
    """
    构造一次试验的部署与问题实例

    随机流只由 (seed, trial_index) 决定, 同一试验在不同扫描点共享
    几何与标准化噪声 (公共随机数), 与 worker 数量无关。

    Returns:
        (deployment, instance, is_los)
    """
    spec = task.scenario
    deployment = build_for_trial(spec, trial_rng(spec.seed, task.trial_index, GEOMETRY_STREAM))
    noise = noise_for_trial(
        spec, task.sigma, trial_rng(spec.seed, task.trial_index, NLOS_STREAM), task.omega_override
    )
    measurements = generate_measurements(
        deployment, noise, trial_rng(spec.seed, task.trial_index, NOISE_STREAM)
    )
    inst = ProblemInstance.from_deployment(
        deployment, measurements, gamma=task.solver.gamma, rho=task.solver.rho
    )
    return deployment, inst, noise.is_los


def _rejected(task: TrialTask, error: Exception, solver: str) -> RunRecord:
    return RunRecord(status="faulted", steps=0, wall_time=0.0, fault=str(error),
                     trial_index=task.trial_index, solver=solver)


def run_trial(task: TrialTask) -> TrialOutcome:
    """一次配对试验: ℓ1-PNN 与 (可选) ℓ2 对照在同一测量上求解"""
    try:
        deployment, inst, is_los = prepare_trial(task)
    except MeasurementRejectedError as e:
        logger.warning(f"⚠️ Trial {task.trial_index} rejected: {e}")
        baseline = _rejected(task, e, "l2-pnn") if task.solver.baseline else None
        return TrialOutcome(task.trial_index, _rejected(task, e, "l1-pnn"), baseline, None)

    integrator = task.solver.integrator()
    tag = {"trial_index": task.trial_index, "truth": deployment.source_position, "deployment": deployment}

    record = replace(solve(inst, integrator, record=task.record_trajectory), **tag)
    baseline = None
    if task.solver.baseline:
        baseline = replace(l2_baseline_solve(inst, integrator), **tag)

    bound = None
    if is_los and task.sigma > 0:
        try:
            bound = crlb_los(deployment, task.sigma)
        except DegenerateGeometryError as e:
            logger.warning(f"⚠️ Trial {task.trial_index}: {e}")

    return TrialOutcome(task.trial_index, record, baseline, bound)


# ========== 汇总 ==========

def _summarize(records: List[RunRecord]) -> Tuple[float, np.ndarray, int]:
    errors = [r.error for r in records if r.converged]
    return rmse(errors), empirical_cdf(errors), sum(not r.converged for r in records)


def aggregate_point(config: ExperimentConfig, param: Optional[str], value: Optional[float],
                    sigma: float, outcomes: List[TrialOutcome]) -> BenchmarkResult:
    outcomes = sorted(outcomes, key=lambda o: o.trial_index)
    records = [o.record for o in outcomes]
    baseline_records = [o.baseline for o in outcomes if o.baseline is not None]

    point_rmse, cdf, faults = _summarize(records)
    base_rmse, base_cdf, base_faults = _summarize(baseline_records)

    bounds = np.array([o.crlb for o in outcomes if o.crlb is not None])
    crlb = float(np.sqrt(np.mean(bounds ** 2))) if bounds.size else None

    flagged = bool(records) and faults > settings.max_fault_fraction * len(records)
    label = f"{param}={value}" if param else f"sigma={sigma}"
    if flagged:
        logger.warning(f"⚠️ {label}: {faults}/{len(records)} trials faulted")
    logger.info(
        f"✅ {label}: rmse={point_rmse:.4f} baseline={base_rmse:.4f} "
        f"crlb={crlb if crlb is None else round(crlb, 4)} faults={faults}"
    )

    return BenchmarkResult(
        scenario=config.scenario,
        param=param,
        value=value,
        sigma=sigma,
        records=records,
        baseline_records=baseline_records,
        rmse=point_rmse,
        baseline_rmse=base_rmse,
        cdf_grid=cdf,
        baseline_cdf_grid=base_cdf,
        crlb=crlb,
        fault_count=faults,
        baseline_fault_count=base_faults,
        flagged=flagged,
    )


def _sweep_points(config: ExperimentConfig, sweep: Optional[SweepSpec]) -> List[Tuple[Optional[str], Optional[float], float, Optional[float]]]:
    """(param, value, sigma, omega_override)"""
    if sweep is None:
        return [(None, None, config.noise.sigma, None)]
    if sweep.param == "sigma":
        return [("sigma", v, v, None) for v in sweep.values]
    if not base_pattern(config.scenario):
        raise ConfigError("sweeping b needs at least one NLOS sensor in the scenario pattern")
    return [("b", v, config.noise.sigma, v) for v in sweep.values]


async def run_trials(tasks: List[TrialTask], workers: int) -> List[TrialOutcome]:
    """
    并发执行试验 (workers > 1 时使用进程池), 结果按 trial_index 排序

    子进程里 @timer 的样本留在子进程, 这里把返回记录的 wall_time
    补记到本进程的 pnn_solve 指标。
    """
    loop = asyncio.get_running_loop()
    limiter = ConcurrencyLimiter(workers, "Trials")
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None

    async def run_one(task: TrialTask) -> TrialOutcome:
        async with limiter.acquire():
            return await loop.run_in_executor(executor, run_trial, task)

    try:
        outcomes = await asyncio.gather(*[run_one(t) for t in tasks])
    finally:
        if executor is not None:
            executor.shutdown()
    if executor is not None:
        for outcome in outcomes:
            for record in (outcome.record, outcome.baseline):
                if record is not None and record.wall_time > 0:
                    monitor.record("pnn_solve", record.wall_time, status="success", worker="process")
    logger.debug(f"Trials limiter: {limiter.get_stats()}")
    return sorted(outcomes, key=lambda o: o.trial_index)


async def run_benchmark_async(
    config: ExperimentConfig,
    sweep: Optional[SweepSpec] = None,
    workers: Optional[int] = None,
) -> List[BenchmarkResult]:
    """
    对每个扫描点运行 scenario.trials 次 Monte-Carlo 试验并汇总

    Returns:
        每个扫描点一个 BenchmarkResult
    """
    workers = workers or config.solver.workers
    results = []
    for param, value, sigma, omega in _sweep_points(config, sweep):
        tasks = [
            TrialTask(scenario=config.scenario, solver=config.solver, sigma=sigma,
                      omega_override=omega, trial_index=i)
            for i in range(config.scenario.trials)
        ]
        label = f"{param}={value}" if param else "run"
        with measure_time(f"benchmark_point[{label}]") as watch:
            outcomes = await run_trials(tasks, workers)
        results.append(aggregate_point(config, param, value, sigma, outcomes))
        logger.info(f"✅ {label}: {len(tasks)} trials, {watch.elapsed / max(len(tasks), 1):.3f}s per trial")
        log_memory(f"after {label}")
    return results


def run_benchmark(
    config: ExperimentConfig,
    sweep: Optional[SweepSpec] = None,
    workers: Optional[int] = None,
) -> List[BenchmarkResult]:
    """同步入口"""
    return asyncio.run(run_benchmark_async(config, sweep, workers))


# ========== CSV 输出 ==========

def _record_row(result: BenchmarkResult, record: RunRecord) -> Dict:
    k = result.scenario.k
    row = {
        "param": result.param or "",
        "value": result.value if result.value is not None else result.sigma,
        "trial_index": record.trial_index,
        "solver": record.solver,
        "status": record.status,
    }
    estimate = record.estimate if record.estimate is not None else np.full(k, np.nan)
    truth = record.truth if record.truth is not None else np.full(k, np.nan)
    row.update(zip(numbered_columns("x_hat", k), estimate))
    row["t0_hat"] = record.onset_estimate if record.onset_estimate is not None else np.nan
    row.update(zip(numbered_columns("x_true", k), truth))
    row["error"] = record.error if record.error is not None else np.nan
    row["steps"] = record.steps
    kkt = record.kkt.to_dict() if record.kkt is not None else {}
    for name in ("stationarity_inf_norm", "projection_residual_inf_norm", "primal_equality_inf_norm",
                 "licq_min_singular_value", "active_inequality_count"):
        row[name] = kkt.get(name, np.nan)
    row["deployment"] = json.dumps(record.deployment.to_dict()) if record.deployment is not None else ""
    row["fault"] = record.fault or ""
    return row


def records_frame(results: List[BenchmarkResult]) -> pd.DataFrame:
    """每次试验每个求解器一行 (不含墙钟时间, 保证可逐字节复现)"""
    rows = [
        _record_row(result, record)
        for result in results
        for record in (*result.records, *result.baseline_records)
    ]
    return pd.DataFrame(rows)


def timings_frame(results: List[BenchmarkResult]) -> pd.DataFrame:
    rows = [
        {
            "param": result.param or "",
            "value": result.value if result.value is not None else result.sigma,
            "trial_index": record.trial_index,
            "solver": record.solver,
            "wall_time": record.wall_time,
        }
        for result in results
        for record in (*result.records, *result.baseline_records)
    ]
    return pd.DataFrame(rows, columns=["param", "value", "trial_index", "solver", "wall_time"])


def summary_frame(results: List[BenchmarkResult]) -> pd.DataFrame:
    rows = [
        {
            "param": result.param or "",
            "value": result.value if result.value is not None else result.sigma,
            "rmse": result.rmse,
            "baseline_rmse": result.baseline_rmse,
            "crlb": result.crlb if result.crlb is not None else np.nan,
            "fault_count": result.fault_count,
            "baseline_fault_count": result.baseline_fault_count,
            "trials": len(result.records),
            "flagged": result.flagged,
        }
        for result in results
    ]
    return pd.DataFrame(rows)


def cdf_frame(results: List[BenchmarkResult]) -> pd.DataFrame:
    rows = []
    for result in results:
        value = result.value if result.value is not None else result.sigma
        for solver, grid in (("l1-pnn", result.cdf_grid), ("l2-pnn", result.baseline_cdf_grid)):
            rows.extend(
                {"param": result.param or "", "value": value, "solver": solver,
                 "error": float(e), "fraction": float(f)}
                for e, f in grid
            )
    return pd.DataFrame(rows, columns=["param", "value", "solver", "error", "fraction"])


def write_outputs(results: List[BenchmarkResult], out_dir: Union[str, Path]) -> Dict[str, Path]:
    """records.csv, summary.csv, cdf.csv (确定性) 以及 timings.csv"""
    out = Path(out_dir)
    return {
        "records": write_csv(records_frame(results), out / "records.csv"),
        "summary": write_csv(summary_frame(results), out / "summary.csv"),
        "cdf": write_csv(cdf_frame(results), out / "cdf.csv"),
        "timings": write_csv(timings_frame(results), out / "timings.csv"),
    }


def trace_trial(config: ExperimentConfig, trial_index: int, out_dir: Union[str, Path]) -> Path:
    """重跑第 trial_index 次试验并导出收敛轨迹 trace_<i>.csv"""
    task = TrialTask(scenario=config.scenario, solver=config.solver, sigma=config.noise.sigma,
                     omega_override=None, trial_index=trial_index, record_trajectory=True)
    _, inst, _ = prepare_trial(task)
    record = solve(inst, config.solver.integrator(), record=True)
    if not record.converged:
        logger.warning(f"⚠️ Trial {trial_index} faulted: {record.fault}")
    return write_trace(record, inst, Path(out_dir) / f"trace_{trial_index}.csv")
