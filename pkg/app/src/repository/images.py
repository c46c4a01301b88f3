import io
import re
from pathlib import Path

import numpy as np
import png

from src.entity.models import PointCloud
from src.exceptions.exceptions import RETURN_MSG, FormatError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PPM_HEADER = re.compile(rb"\AP6(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")

DEFAULT_PALETTE = np.array([
    [31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189],
    [140, 86, 75], [227, 119, 194], [127, 127, 127], [188, 189, 34], [23, 190, 207],
], dtype=np.uint8)


class ImageRepository:
    """
    8-bit RGB images as PNG (pypng) or binary PPM (P6), pixels in row-major order.
    """

    def read_image(self, source: Path | str | bytes) -> np.ndarray:
        """
        Decode an image.

        Args:
            source: file path or raw file content.
        Returns:
            np.ndarray: (height, width, 3) uint8 pixels.
        Raises:
            FormatError: not an 8-bit PNG or P6 PPM.
        """
        data = source if isinstance(source, bytes) else Path(source).read_bytes()
        if data.startswith(PNG_SIGNATURE):
            try:
                width, height, rows, info = png.Reader(bytes=data).asRGBA8()
                pixels = np.vstack([np.frombuffer(bytes(row), dtype=np.uint8) for row in rows])
            except png.Error as error:
                raise FormatError(RETURN_MSG.image_format.format(detail=str(error))) from error
            return pixels.reshape(height, width, 4)[:, :, :3].copy()
        if data.startswith(b"P6"):
            header = PPM_HEADER.match(data)
            if header is None:
                raise FormatError(RETURN_MSG.image_format.format(detail="malformed PPM header"))
            width, height, maxval = (int(value) for value in header.groups())
            if maxval != 255:
                raise FormatError(RETURN_MSG.image_format.format(detail=f"PPM maxval {maxval}, expected 255"))
            expected = width * height * 3
            if len(data) - header.end() < expected:
                raise FormatError(RETURN_MSG.image_format.format(
                    detail=RETURN_MSG.ppm_truncated.format(actual=len(data) - header.end(), expected=expected)))
            body = np.frombuffer(data, dtype=np.uint8, offset=header.end(), count=expected)
            return body.reshape(height, width, 3).copy()
        raise FormatError(RETURN_MSG.image_format.format(detail="expected PNG or binary PPM (P6)"))

    def write_image(self, pixels: np.ndarray, path: Path | str) -> Path:
        """Write (height, width, 3) or (height, width) uint8 pixels; the format follows the suffix."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        suffix = path.suffix.lower()
        if suffix == ".png":
            path.write_bytes(self.encode_png(pixels))
        elif suffix == ".ppm":
            rgb = pixels if pixels.ndim == 3 else np.repeat(pixels[:, :, None], 3, axis=2)
            height, width = rgb.shape[:2]
            path.write_bytes(b"P6\n%d %d\n255\n" % (width, height) + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())
        else:
            raise FormatError(RETURN_MSG.image_format.format(detail=f"suffix '{path.suffix}'"))
        return path

    def encode_png(self, pixels: np.ndarray) -> bytes:
        pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
        height, width = pixels.shape[:2]
        greyscale = pixels.ndim == 2
        writer = png.Writer(width=width, height=height, greyscale=greyscale, bitdepth=8)
        output = io.BytesIO()
        writer.write(output, pixels.reshape(height, -1).tolist())
        return output.getvalue()

    def image_to_nodes(self, source: Path | str | bytes) -> PointCloud:
        """One node per pixel with its RGB values (0..255) as coordinates."""
        pixels = self.read_image(source)
        height, width = pixels.shape[:2]
        provenance = f"{source if not isinstance(source, bytes) else 'upload'} ({width}x{height})"
        return PointCloud(pixels.reshape(-1, 3).astype(float), provenance=provenance)

    def labels_to_pixels(self, labels: np.ndarray, width: int, height: int,
                         palette: np.ndarray | None = None) -> np.ndarray:
        labels = np.asarray(labels)
        if labels.size != width * height:
            raise FormatError(RETURN_MSG.labels_image_size.format(expected=width * height, actual=labels.size))
        palette = DEFAULT_PALETTE if palette is None else np.asarray(palette, dtype=np.uint8)
        return palette[np.mod(labels, palette.shape[0])].reshape(height, width, 3)

    def labels_to_image(self, labels: np.ndarray, width: int, height: int, palette: np.ndarray | None,
                        path: Path | str) -> Path:
        return self.write_image(self.labels_to_pixels(labels, width, height, palette), path)

    def difference_image(self, labels: np.ndarray, other: np.ndarray, width: int, height: int,
                         path: Path | str) -> Path:
        """Black where two labelings agree, white where they differ."""
        differ = np.asarray(labels) != np.asarray(other)
        if differ.size != width * height:
            raise FormatError(RETURN_MSG.labels_image_size.format(expected=width * height, actual=differ.size))
        return self.write_image((differ * 255).astype(np.uint8).reshape(height, width), path)


def segment_palette(nodes: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Mean color of every segment, for rendering a segmentation in its own colors."""
    palette = np.zeros((k, 3))
    for label in range(k):
        members = labels == label
        if np.any(members):
            palette[label] = nodes[members].mean(axis=0)
    return np.clip(np.rint(palette), 0, 255).astype(np.uint8)


image_repository = ImageRepository()
