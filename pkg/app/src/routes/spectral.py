import logging

import uvicorn
from fastapi import APIRouter, HTTPException

from src.entity.models import PointCloud
from src.exceptions.exceptions import GraphToolkitError, http_status_for
from src.schemas.schemas import EigsRequest, Report
from src.services.pipelines import run_eigs

logger = logging.getLogger(uvicorn.logging.__name__)
router = APIRouter(prefix="/spectral", tags=["spectral"])


@router.post("/eigs", response_model=Report)
def compute_eigs(body: EigsRequest) -> Report:
    """
    Leading eigenpairs of the normalized adjacency matrix of the posted point cloud.

    Args:
        body: points, kernel, fast summation parameters, method and k.
    Returns:
        Report with eigenvalues, solver diagnostics and, when requested, errors against a dense reference.
    Raises:
        HTTPException: 400 invalid parameters, 413 dense reference over budget, 422 numerical failure.
    """
    try:
        cloud = PointCloud(body.points, body.labels, provenance="request")
        report, _ = run_eigs(cloud, body.kernel, body.params, body.method, body.k, body.L, body.M, body.seed,
                             body.with_reference, parameters=body.model_dump(mode="json", exclude={"points", "labels"}))
    except (GraphToolkitError, ValueError) as error:
        logger.error(f"eigs failed: {error}")
        raise HTTPException(status_code=http_status_for(error), detail=str(error))
    return report
