"""
Configuration management for the joint latent-age model toolkit.
Loads environment variables and provides centralized configuration access.
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    """Centralized configuration management."""

    # Project paths
    BASE_DIR = Path(__file__).parent
    OUTPUT_DIR_OVERRIDE = os.getenv("JOINT_OUTPUT_DIR")
    OUTPUT_DIR = Path(OUTPUT_DIR_OVERRIDE or str(BASE_DIR / "outputs"))

    # Logging
    LOG_LEVEL = os.getenv("JOINT_LOG_LEVEL", "INFO").upper()
    LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

    # Parallelism (personalization fans out over patients)
    N_THREADS = int(os.getenv("JOINT_THREADS", "1"))

    # SAEM defaults (desk scale; `fit --schedule full` uses SaemConfig.full_preset())
    SAEM_ITERATIONS = int(os.getenv("JOINT_SAEM_ITERATIONS", "20000"))
    SAEM_RM_ITERATIONS = int(os.getenv("JOINT_SAEM_RM_ITERATIONS", "4000"))
    SAEM_SEED = int(os.getenv("JOINT_SAEM_SEED", "0"))
    VARIANCE_FLOOR = float(os.getenv("JOINT_VARIANCE_FLOOR", "1e-9"))
    FEASIBILITY_MARGIN = float(os.getenv("JOINT_FEASIBILITY_MARGIN", "0.01"))

    # Data
    RAW_SCALE_MAX = float(os.getenv("JOINT_RAW_SCALE_MAX", "48"))

    # Prediction protocol
    PREDICTION_HORIZONS = os.getenv("JOINT_PREDICTION_HORIZONS", "1.0,1.5")
    PERSONALIZE_K_VISITS = int(os.getenv("JOINT_PERSONALIZE_K_VISITS", "2"))
    IBS_GRID_POINTS = int(os.getenv("JOINT_IBS_GRID_POINTS", "30"))

    @classmethod
    def validate(cls) -> list[str]:
        """Validate configuration and return list of problems."""
        problems = []

        if cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            problems.append(f"JOINT_LOG_LEVEL: unknown level {cls.LOG_LEVEL}")
        if cls.N_THREADS < 1:
            problems.append("JOINT_THREADS must be >= 1")
        if cls.SAEM_RM_ITERATIONS >= cls.SAEM_ITERATIONS:
            problems.append("JOINT_SAEM_RM_ITERATIONS must be smaller than JOINT_SAEM_ITERATIONS")
        if cls.VARIANCE_FLOOR <= 0:
            problems.append("JOINT_VARIANCE_FLOOR must be > 0")
        if cls.FEASIBILITY_MARGIN <= 0:
            problems.append("JOINT_FEASIBILITY_MARGIN must be > 0")
        if cls.RAW_SCALE_MAX <= 0:
            problems.append("JOINT_RAW_SCALE_MAX must be > 0")
        if cls.PERSONALIZE_K_VISITS < 1:
            problems.append("JOINT_PERSONALIZE_K_VISITS must be >= 1")
        if cls.IBS_GRID_POINTS < 2:
            problems.append("JOINT_IBS_GRID_POINTS must be >= 2")
        try:
            cls.get_horizons()
        except ValueError:
            problems.append(f"JOINT_PREDICTION_HORIZONS: cannot parse {cls.PREDICTION_HORIZONS!r}")

        return problems

    @classmethod
    def get_horizons(cls) -> list[float]:
        """Parse the comma separated prediction horizons (years)."""
        return [float(h) for h in cls.PREDICTION_HORIZONS.split(",") if h.strip()]

    @classmethod
    def get_saem_defaults(cls) -> dict:
        """Get SAEM schedule defaults."""
        return {
            "n_iterations": cls.SAEM_ITERATIONS,
            "n_rm_iterations": cls.SAEM_RM_ITERATIONS,
            "seed": cls.SAEM_SEED,
            "variance_floor": cls.VARIANCE_FLOOR,
            "feasibility_margin": cls.FEASIBILITY_MARGIN,
        }

    @classmethod
    def get_prediction_config(cls) -> dict:
        """Get prediction protocol configuration."""
        return {
            "horizons": cls.get_horizons(),
            "k_visits": cls.PERSONALIZE_K_VISITS,
            "ibs_grid_points": cls.IBS_GRID_POINTS,
            "raw_scale_max": cls.RAW_SCALE_MAX,
            "n_threads": cls.N_THREADS,
        }

    @classmethod
    def resolve_output_path(cls, path) -> Path:
        """Relative CLI output paths land under JOINT_OUTPUT_DIR when it is set."""
        path = Path(path)
        if path.is_absolute() or not cls.OUTPUT_DIR_OVERRIDE:
            return path
        return Path(cls.OUTPUT_DIR_OVERRIDE) / path

    @classmethod
    def ensure_output_dir(cls) -> Path:
        """Create the output directory on first use."""
        cls.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
        return cls.OUTPUT_DIR


# Singleton instance
config = Config()
