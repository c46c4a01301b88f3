import io
import logging

import uvicorn
from fastapi import APIRouter, File, Form, HTTPException, UploadFile, status
from fastapi.responses import StreamingResponse

from src.entity.models import KernelFamily
from src.exceptions.exceptions import FormatError, GraphToolkitError, http_status_for
from src.repository.images import image_repository, segment_palette
from src.schemas.schemas import FastsumParams, KernelSpec
from src.services.pipelines import run_segment

logger = logging.getLogger(uvicorn.logging.__name__)
router = APIRouter(prefix="/images", tags=["images"])


@router.post("/segment", response_class=StreamingResponse)
async def segment_image(file: UploadFile = File(description="8-bit RGB PNG or binary PPM"),
                        k: int = Form(default=4, ge=2, le=10, description="Number of segments"),
                        sigma: float = Form(default=90.0, gt=0, description="Gaussian kernel width in color units"),
                        N: int = Form(default=16, ge=2, description="Fast summation bandwidth"),
                        m: int = Form(default=2, ge=1, description="NFFT window cut-off"),
                        p: int = Form(default=2, ge=1, le=8, description="Boundary regularization smoothness"),
                        eps_b: float = Form(default=0.125, ge=0, lt=0.5, description="Boundary region width"),
                        seed: int = Form(default=0)):
    """
    Segments an uploaded image by spectral clustering of its pixel colors.

    Returns:
        PNG stream with every segment painted in its mean color. The X-Eigenvalues header lists the eigenvalues.
    Raises:
        HTTPException: 415 unsupported or malformed image, 400 invalid parameters, 422 numerical failure.
    """
    data = await file.read()
    try:
        pixels = image_repository.read_image(data)
        height, width = pixels.shape[:2]
        params = FastsumParams(N=N, m=m, p=p, eps_b=eps_b)
        report, labels, _ = run_segment(pixels, KernelSpec(family=KernelFamily.gaussian, sigma=sigma), params, k, seed)
    except (GraphToolkitError, ValueError) as error:
        logger.error(f"segment failed: {error}")
        status_code = status.HTTP_415_UNSUPPORTED_MEDIA_TYPE if isinstance(error, FormatError) else http_status_for(error)
        raise HTTPException(status_code=status_code, detail=str(error))
    palette = segment_palette(pixels.reshape(-1, 3).astype(float), labels, k)
    content = image_repository.encode_png(image_repository.labels_to_pixels(labels, width, height, palette))
    headers = {"X-Eigenvalues": ",".join(f"{value:.10g}" for value in report.eigenvalues)}
    return StreamingResponse(content=io.BytesIO(content), media_type="image/png", headers=headers)
