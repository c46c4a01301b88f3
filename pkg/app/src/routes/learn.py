import logging

import numpy as np
import uvicorn
from fastapi import APIRouter, HTTPException, status

from src.entity.models import PointCloud
from src.exceptions.exceptions import RETURN_MSG, GraphToolkitError, http_status_for
from src.schemas.schemas import KRRRequest, KRRResponse, Report, SSLKernelRequest
from src.services.learn import krr_fit, krr_predict
from src.services.pipelines import run_ssl_kernel

logger = logging.getLogger(uvicorn.logging.__name__)
router = APIRouter(prefix="/learn", tags=["learn"])


def _raise_http(error: Exception, operation: str):
    logger.error(f"{operation} failed: {error}")
    raise HTTPException(status_code=http_status_for(error), detail=str(error))


@router.post("/ssl-kernel", response_model=Report)
def ssl_kernel(body: SSLKernelRequest) -> Report:
    """
    Kernel semi-supervised classification of labeled points: `samples_per_class` labels per class are kept as
    training data and the rest are predicted by CG on (I + beta L_s) u = f.

    Raises:
        HTTPException: 400 when labels are missing or parameters are invalid, 422 on CG breakdown.
    """
    if body.labels is None:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=RETURN_MSG.labels_missing)
    try:
        cloud = PointCloud(body.points, body.labels, provenance="request")
        report, _ = run_ssl_kernel(cloud, body.kernel, body.params, body.samples_per_class, body.beta, body.cg,
                                   body.seed, parameters=body.model_dump(mode="json", exclude={"points", "labels"}))
    except (GraphToolkitError, ValueError) as error:
        _raise_http(error, "ssl-kernel")
    return report


@router.post("/krr", response_model=KRRResponse)
def kernel_ridge_regression(body: KRRRequest) -> KRRResponse:
    """
    Fits (K + beta I) alpha = values on the training points and evaluates the fitted function at the query points.
    """
    if len(body.values) != len(body.train_points):
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=RETURN_MSG.values_per_point)
    try:
        model = krr_fit(np.asarray(body.train_points, dtype=float), body.kernel, body.beta,
                        np.asarray(body.values, dtype=float), body.cg, body.params, body.exact)
        predictions = krr_predict(model, np.asarray(body.query_points, dtype=float))
    except (GraphToolkitError, ValueError) as error:
        _raise_http(error, "krr")
    return KRRResponse(predictions=predictions.tolist(), iterations=model.solve.iterations,
                       converged=model.solve.converged)
