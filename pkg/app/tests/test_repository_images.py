import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.exceptions.exceptions import FormatError
from src.repository.images import image_repository, segment_palette

PIXELS = np.array([[[255, 0, 0], [0, 255, 0]],
                   [[0, 0, 255], [10, 20, 30]]], dtype=np.uint8)


class TestImageRepository(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def test_png(self):
        path = image_repository.write_image(PIXELS, self.root / "small.png")
        np.testing.assert_array_equal(image_repository.read_image(path), PIXELS)
        np.testing.assert_array_equal(image_repository.read_image(path.read_bytes()), PIXELS)

    def test_ppm(self):
        path = image_repository.write_image(PIXELS, self.root / "small.ppm")
        self.assertTrue(path.read_bytes().startswith(b"P6\n2 2\n255\n"))
        np.testing.assert_array_equal(image_repository.read_image(path), PIXELS)

    def test_ppm_with_comment(self):
        data = b"P6\n# made by hand\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6])
        np.testing.assert_array_equal(image_repository.read_image(data), [[[1, 2, 3], [4, 5, 6]]])

    def test_nodes_row_major(self):
        cloud = image_repository.image_to_nodes(image_repository.encode_png(PIXELS))
        self.assertEqual(cloud.coordinates.shape, (4, 3))
        np.testing.assert_array_equal(cloud.coordinates[1], [0.0, 255.0, 0.0])
        np.testing.assert_array_equal(cloud.coordinates[3], [10.0, 20.0, 30.0])

    def test_unknown_format(self):
        with self.assertRaises(FormatError):
            image_repository.read_image(b"GIF89a")
        with self.assertRaises(FormatError):
            image_repository.read_image(b"P6\n2 2\n65535\n" + bytes(24))
        with self.assertRaises(FormatError):
            image_repository.write_image(PIXELS, self.root / "small.bmp")

    def test_truncated_ppm(self):
        with self.assertRaises(FormatError) as context:
            image_repository.read_image(b"P6\n4 4\n255\n" + bytes(10))
        self.assertIn("10 bytes", str(context.exception))

    def test_labels_to_image(self):
        palette = np.array([[0, 0, 0], [255, 255, 255]])
        path = image_repository.labels_to_image(np.array([0, 1, 1, 0]), 2, 2, palette, self.root / "labels.png")
        pixels = image_repository.read_image(path)
        np.testing.assert_array_equal(pixels[0, 0], [0, 0, 0])
        np.testing.assert_array_equal(pixels[0, 1], [255, 255, 255])

    def test_label_count_mismatch(self):
        with self.assertRaises(FormatError):
            image_repository.labels_to_pixels(np.zeros(3, dtype=int), 2, 2)

    def test_difference_image(self):
        same = image_repository.difference_image(np.array([0, 1, 2, 3]), np.array([0, 1, 2, 3]), 2, 2,
                                                 self.root / "same.png")
        self.assertEqual(image_repository.read_image(same).max(), 0)
        changed = image_repository.difference_image(np.array([0, 1, 2, 3]), np.array([0, 1, 2, 0]), 2, 2,
                                                    self.root / "changed.png")
        pixels = image_repository.read_image(changed)
        np.testing.assert_array_equal(pixels[1, 1], [255, 255, 255])
        self.assertEqual(pixels[0].max(), 0)

    def test_segment_palette(self):
        nodes = np.array([[0.0, 0.0, 0.0], [10.0, 10.0, 10.0], [200.0, 100.0, 50.0]])
        palette = segment_palette(nodes, np.array([0, 0, 1]), 3)
        np.testing.assert_array_equal(palette, [[5, 5, 5], [200, 100, 50], [0, 0, 0]])
        self.assertEqual(palette.dtype, np.uint8)


if __name__ == '__main__':
    unittest.main()
