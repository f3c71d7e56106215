import logging
from typing import Dict, List

from fastapi import APIRouter, HTTPException

from bench.config_file import parse_config
from bench.models import BenchmarkRequest, LocalizeRequest, LocalizeResponse
from bench.services import run_benchmark_async, summary_frame
from core.exceptions import LocalizationError
from dynamics.models import IntegratorConfig
from dynamics.services import solve
from formulation.models import ProblemInstance
from measurement.models import MeasurementSet

logger = logging.getLogger(__name__)

router = APIRouter(tags=["NLOS 鲁棒 TDOA 定位"])


def _integrator(request: LocalizeRequest) -> IntegratorConfig:
    fields = {"method": request.method, "tau": request.tau, "horizon": request.horizon, "settle": request.settle}
    overrides = {k: v for k, v in fields.items() if v is not None}
    return IntegratorConfig(**overrides)


@router.post("/localize", response_model=LocalizeResponse)
async def localize(request: LocalizeRequest):
    try:
        measurements = MeasurementSet.from_timestamps(request.timestamps)
        inst = ProblemInstance.build(
            measurements,
            request.sensor_positions,
            request.propagation_speed,
            gamma=request.gamma,
            rho=request.rho,
        )
        record = solve(inst, _integrator(request), record=False)
        logger.info(f"✅ Localized {inst.L} sensors: status={record.status}")

        return LocalizeResponse(
            status=record.status,
            x=record.estimate.tolist() if record.estimate is not None else None,
            t0=record.onset_estimate,
            steps=record.steps,
            time=record.final_state.time if record.final_state is not None else None,
            kkt=record.kkt.to_dict() if record.kkt is not None else None,
            fault=record.fault,
        )

    except (LocalizationError, ValueError) as e:
        logger.warning(f"⚠️ Rejected localize request: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.exception(f"❌ Error in localize: {str(e)}")
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/benchmark")
async def benchmark(request: BenchmarkRequest) -> List[Dict]:
    try:
        config = parse_config({
            "scenario": request.scenario,
            "noise": request.noise,
            "solver": request.solver,
        })
        results = await run_benchmark_async(config, request.sweep)
        frame = summary_frame(results).astype(object)
        return frame.where(frame.notna(), None).to_dict(orient="records")

    except (LocalizationError, ValueError) as e:
        logger.warning(f"⚠️ Rejected benchmark request: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.exception(f"❌ Error in benchmark: {str(e)}")
        raise HTTPException(status_code=500, detail=str(e))
