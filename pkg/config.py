import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent

class Settings:
    # Diretórios
    SCENARIO_DIR = os.getenv("SCENARIO_DIR", str(BASE_DIR / "data" / "scenarios"))
    OUTPUT_DIR = os.getenv("OUTPUT_DIR", "runs")

    # Simulação
    DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", 0))
    SWEEP_JOBS = int(os.getenv("SWEEP_JOBS", 1))

    # Logging
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

    # Server
    HOST = os.getenv("HOST", "0.0.0.0")
    PORT = int(os.getenv("PORT", 8000))
    DEBUG = os.getenv("DEBUG", "False").lower() == "true"

settings = Settings()
