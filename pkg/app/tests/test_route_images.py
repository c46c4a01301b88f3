import numpy as np

from src.repository.images import image_repository


def two_tone_png():
    pixels = np.full((8, 10, 3), [40, 60, 80], dtype=np.uint8)
    pixels[:, 5:] = [120, 100, 90]
    return image_repository.encode_png(pixels)


def test_segment(client):
    files = {"file": ("two_tone.png", two_tone_png(), "image/png")}
    response = client.post("api/images/segment", files=files, data={"k": "2"})
    assert response.status_code == 200, response.text
    assert response.headers["content-type"] == "image/png"
    eigenvalues = [float(value) for value in response.headers["x-eigenvalues"].split(",")]
    assert len(eigenvalues) == 2
    assert abs(eigenvalues[0] - 1.0) < 1e-3
    segmented = image_repository.read_image(response.content)
    assert segmented.shape == (8, 10, 3)
    np.testing.assert_array_equal(segmented[0, 0], [40, 60, 80])
    np.testing.assert_array_equal(segmented[7, 9], [120, 100, 90])


def test_segment_unsupported_format(client):
    files = {"file": ("picture.gif", b"GIF89a....", "image/gif")}
    response = client.post("api/images/segment", files=files)
    assert response.status_code == 415, response.text


def test_segment_invalid_k(client):
    files = {"file": ("two_tone.png", two_tone_png(), "image/png")}
    response = client.post("api/images/segment", files=files, data={"k": "1"})
    assert response.status_code == 422, response.text


def test_segment_truncated_ppm(client):
    files = {"file": ("cut.ppm", b"P6\n8 8\n255\n" + bytes(30), "image/x-portable-pixmap")}
    response = client.post("api/images/segment", files=files, data={"k": "2"})
    assert response.status_code == 415, response.text
