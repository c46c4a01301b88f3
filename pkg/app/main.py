from datetime import datetime
import traceback
import uvicorn
import logging

import numpy as np
from fastapi import FastAPI, HTTPException
from contextlib import asynccontextmanager

import uvicorn.logging

from fastapi.middleware.cors import CORSMiddleware
from src.conf.config import settings
from src.exceptions.exceptions import RETURN_MSG
from src.routes import images, learn, spectral
from src.schemas.schemas import FastsumParams, KernelSpec
from src.services.fastsum import direct_apply, fastsum_setup


logger = logging.getLogger(uvicorn.logging.__name__)

HEALTH_NODES = np.array([[0.0, 0.0], [1.0, 0.5]])
HEALTH_TOLERANCE = 1e-6
HEALTH_PARAMS = FastsumParams(N=64, m=7, p=7, eps_b=0.125)


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("Kernel graph toolkit starting")
    logger.info(f"threads={settings.effective_threads()} deterministic={settings.fgs_deterministic} "
                f"dense_budget={settings.dense_budget}")
    yield
    logger.info("Kernel graph toolkit stopped")


app = FastAPI(lifespan=lifespan, title="kernelgraph")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(spectral.router, prefix='/api')
app.include_router(learn.router, prefix='/api')
app.include_router(images.router, prefix='/api')


@app.get("/")
def read_root():
    return {"message": "Kernel graph toolkit"}


@app.get('/api/healthcheck')
def healthchecker() -> dict:
    """
    Self-check: a two-node fast summation product must match the direct sum.
    """
    function_name = traceback.extract_stack(None, 2)[1][2]
    try:
        kernel = KernelSpec(sigma=1.0)
        x = np.array([1.0, -2.0])
        plan = fastsum_setup(HEALTH_NODES, kernel, HEALTH_PARAMS)
        error = float(np.max(np.abs(plan.apply(x) - direct_apply(HEALTH_NODES, kernel, x))))
    except Exception as e:
        logger.error(f'\n500:\t{datetime.now()}\t{RETURN_MSG.unhealthy}: {e}\t{function_name}')
        raise HTTPException(status_code=500, detail=RETURN_MSG.unhealthy)
    if not error <= HEALTH_TOLERANCE:
        logger.error(f'\n500:\t{datetime.now()}\t{RETURN_MSG.unhealthy}: error {error:.3e}\t{function_name}')
        raise HTTPException(status_code=500, detail=RETURN_MSG.unhealthy)
    logger.info(f'\n000:\t{datetime.now()}\t{RETURN_MSG.healthy}\t{function_name}')
    return {'message': RETURN_MSG.healthy, 'fastsum_error': error}


if __name__ == '__main__':
    uvicorn.run("main:app", host='0.0.0.0', port=8000, reload=True)
