from pathlib import Path
from pydantic import ConfigDict
from pydantic_settings import BaseSettings

env_file = Path(__file__).parent.parent.parent.parent / ".env"

class Settings(BaseSettings):
    fgs_deterministic: bool = False
    threads: int = 0
    nfft_oversampling: float = 2.0
    nfft_chunk_size: int = 8192
    debug_checks: bool = False
    dense_budget: int = 12000
    lanczos_tol: float = 1e-12
    cg_tol: float = 1e-4
    cg_max_iter: int = 1000
    kmeans_restarts: int = 10
    reports_dir: Path = Path("reports")
    log_level: str = "INFO"

    model_config = ConfigDict(extra='ignore', env_file=env_file if env_file.exists() else None, env_file_encoding = "utf-8")

    def effective_threads(self) -> int:
        """
        Number of worker threads the numerical kernels may use.

        Returns:
            int: 1 in deterministic mode, otherwise the configured count (-1 lets scipy.fft use all cores).
        """
        if self.fgs_deterministic:
            return 1
        return self.threads if self.threads > 0 else -1

settings = Settings()
