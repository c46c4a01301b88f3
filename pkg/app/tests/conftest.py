import numpy as np
import pytest
from fastapi.testclient import TestClient
from typer.testing import CliRunner

from main import app
from src.conf.config import settings
from src.entity.models import PointCloud
from src.repository.datasets import gen_blobs, gen_spiral
from src.schemas.schemas import KernelSpec


@pytest.fixture(scope="module")
def client():
    yield TestClient(app)


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def small_spiral() -> PointCloud:
    return gen_spiral(classes=5, per_class=60, seed=3)


@pytest.fixture(scope="module")
def spiral_2000() -> PointCloud:
    return gen_spiral(classes=5, per_class=400, seed=0)


@pytest.fixture(scope="module")
def gaussian() -> KernelSpec:
    return KernelSpec(sigma=3.5)


@pytest.fixture(scope="module")
def two_blobs() -> PointCloud:
    return gen_blobs(np.array([[-2.0, 0.0], [2.0, 0.0]]), per_class=60, scale=0.4, seed=5)


@pytest.fixture(scope="function")
def workdir(tmp_path, monkeypatch):
    monkeypatch.setattr("src.conf.config.settings.reports_dir", tmp_path / "reports")
    monkeypatch.setattr("src.conf.config.settings.threads", settings.threads)
    monkeypatch.setattr("src.conf.config.settings.fgs_deterministic", settings.fgs_deterministic)
    return tmp_path
