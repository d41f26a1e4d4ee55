import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from config import settings
from models.scenario import ScenarioError
from services.run_service import parse_values, run_service
from services.scenario_service import scenario_service
from simulation.errors import SimulationError

logger = logging.getLogger(__name__)

app = FastAPI(
    title="UWB Swarm Tracker",
    description="Simulação determinística de localização UWB descentralizada: sincronização, TDMA, ranging e EKF",
    version="1.0.0"
)


class ValidateRequest(BaseModel):
    scenario: Dict[str, Any]


class RunRequest(BaseModel):
    scenario: Optional[Dict[str, Any]] = None
    name: Optional[str] = None
    seed: int = settings.DEFAULT_SEED
    duration_us: Optional[int] = None


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy"}


@app.get("/api/scenarios")
async def list_scenarios():
    """Listar cenários incluídos"""
    return {"scenarios": scenario_service.list_scenarios()}


@app.post("/api/scenarios/validate")
async def validate_scenario(request: ValidateRequest):
    """Validar um cenário sem executá-lo"""
    try:
        scenario = scenario_service.parse(request.scenario)
    except ScenarioError as e:
        raise HTTPException(status_code=422, detail=e.to_dict())
    return {"valid": True, "scenario": scenario.to_json_dict()}


@app.post("/api/runs")
def run_scenario(request: RunRequest):
    """Executar um cenário (síncrono) e devolver as métricas"""
    try:
        if request.scenario is not None:
            scenario = scenario_service.parse(request.scenario)
        elif request.name is not None:
            scenario = scenario_service.load_scenario(f"{request.name}.json")
        else:
            raise ScenarioError([("scenario", "informe 'scenario' ou 'name'")])
        result = run_service.run(scenario, request.seed, request.duration_us)
        return result.metrics.model_dump(mode='json')
    except ScenarioError as e:
        raise HTTPException(status_code=422, detail=e.to_dict())
    except Exception as e:
        logger.error(f"Falha na execução: {e}")
        raise HTTPException(status_code=500, detail=str(e))


# ========================================
# 🖥️ LINHA DE COMANDO
# ========================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwb-swarm", description="UWB Swarm Tracker")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    commands = parser.add_subparsers(dest="command")

    run = commands.add_parser("run", help="executar um cenário")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    run.add_argument("--out", default=settings.OUTPUT_DIR)

    replay = commands.add_parser("replay", help="recalcular métricas de um log de eventos")
    replay.add_argument("--log", required=True)
    replay.add_argument("--out")
    replay.add_argument("--verify", action="store_true", help="reexecutar e comparar o log byte a byte")

    metrics = commands.add_parser("metrics", help="imprimir as métricas de uma execução")
    metrics.add_argument("--dir", required=True)

    sweep = commands.add_parser("sweep", help="varredura de um parâmetro")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", required=True)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--jobs", type=int, default=settings.SWEEP_JOBS)
    sweep.add_argument("--out")

    serve = commands.add_parser("serve", help="servir a API HTTP")
    serve.add_argument("--host", default=settings.HOST)
    serve.add_argument("--port", type=int, default=settings.PORT)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "run":
            scenario = scenario_service.load_scenario(args.config)
            result = run_service.run_to_dir(scenario, args.seed, args.out)
            print(json.dumps(result.metrics.model_dump(mode='json'), indent=2))
        elif args.command == "replay":
            metrics = run_service.replay(args.log, args.out, verify=args.verify)
            print(json.dumps(metrics.model_dump(mode='json'), indent=2))
        elif args.command == "metrics":
            metrics = run_service.load_metrics(args.dir)
            print(json.dumps(metrics.model_dump(mode='json'), indent=2))
        elif args.command == "sweep":
            scenario = scenario_service.load_scenario(args.config)
            results = run_service.sweep(scenario, args.param, parse_values(args.values), args.seed, args.jobs)
            output = json.dumps(results, indent=2)
            if args.out:
                with open(args.out, "w", encoding="utf-8") as handle:
                    handle.write(output)
            print(output)
        else:
            host = getattr(args, "host", settings.HOST)
            port = getattr(args, "port", settings.PORT)
            uvicorn.run("main:app", host=host, port=port, reload=settings.DEBUG)
    except ScenarioError as e:
        print(f"cenário inválido: {e}", file=sys.stderr)
        return 2
    except (SimulationError, OSError, RuntimeError) as e:
        print(f"erro: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
