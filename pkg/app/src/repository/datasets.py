import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from src.entity.models import PointCloud
from src.exceptions.exceptions import RETURN_MSG, ParameterError


def gen_spiral(classes: int = 5, per_class: int = 400, h: float = 10.0, r: float = 2.0, seed: int = 0,
               jitter: float | None = None) -> PointCloud:
    """
    Interleaved 3-D spirals.

    Class c gets points (t r cos(theta), t r sin(theta), h t) with theta = 2 pi (t + c/C), t uniform in (0, 1],
    plus Gaussian jitter of standard deviation 0.1 r unless given.

    Args:
        classes: number of spiral arms.
        per_class: points per arm.
        h: height.
        r: radius.
        seed: RNG seed.
        jitter: noise standard deviation.
    Returns:
        PointCloud: classes * per_class labeled points.
    """
    if classes < 1 or per_class < 1:
        raise ParameterError(RETURN_MSG.dataset_sizes)
    rng = np.random.default_rng(seed)
    jitter = 0.1 * r if jitter is None else jitter
    blocks, labels = [], []
    for c in range(classes):
        t = 1.0 - rng.random(per_class)
        theta = 2.0 * np.pi * (t + c / classes)
        arm = np.column_stack([t * r * np.cos(theta), t * r * np.sin(theta), h * t])
        blocks.append(arm + rng.normal(0.0, jitter, arm.shape))
        labels.append(np.full(per_class, c))
    return PointCloud(np.vstack(blocks), np.concatenate(labels), provenance=f"spiral(seed={seed})")


def gen_crescent_fullmoon(n: int, r1: float = 5.0, r2: float = 5.0, r3: float = 8.0, seed: int = 0) -> PointCloud:
    """
    Full moon (disk of radius r1 at the origin, class 0) above a crescent (lower half annulus r2..r3, class 1),
    in a 1-to-3 ratio.
    """
    if n < 4:
        raise ParameterError(RETURN_MSG.crescent_size)
    rng = np.random.default_rng(seed)
    n_moon = n // 4
    n_crescent = n - n_moon
    radius = r1 * np.sqrt(rng.random(n_moon))
    angle = 2.0 * np.pi * rng.random(n_moon)
    moon = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    radius = np.sqrt(r2 ** 2 + (r3 ** 2 - r2 ** 2) * rng.random(n_crescent))
    angle = np.pi + np.pi * rng.random(n_crescent)
    crescent = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    labels = np.concatenate([np.zeros(n_moon, dtype=int), np.ones(n_crescent, dtype=int)])
    return PointCloud(np.vstack([moon, crescent]), labels, provenance=f"crescent-fullmoon(seed={seed})")


def gen_blobs(centers: np.ndarray, per_class: int, scale: float, seed: int = 0) -> PointCloud:
    """Isotropic Gaussian clouds around the given centers, labeled by center."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    rng = np.random.default_rng(seed)
    points = np.vstack([rng.normal(center, scale, (per_class, centers.shape[1])) for center in centers])
    labels = np.repeat(np.arange(centers.shape[0]), per_class)
    return PointCloud(points, labels, provenance=f"blobs(seed={seed})")


def relabel_nearest_centers(cloud: PointCloud, centers: int | np.ndarray = 5, seed: int = 0) -> PointCloud:
    """
    Replace labels by the index of the nearest center.

    An integer picks that many centers from the cloud by seeded k-means++; an array gives them explicitly.
    """
    if np.ndim(centers) == 0:
        chosen, _ = kmeans_plusplus(cloud.coordinates, n_clusters=int(centers), random_state=seed)
    else:
        chosen = np.atleast_2d(np.asarray(centers, dtype=float))
    labels = np.argmin(cdist(cloud.coordinates, chosen), axis=1)
    return PointCloud(cloud.coordinates, labels,
                      provenance=f"{cloud.provenance}+nearest({len(chosen)}, seed={seed})")


def helix_centers(classes: int = 5, radius: float = 5.0, height: float = 8.0) -> np.ndarray:
    """Centers at angles 2 pi c/C on a helix around the z axis, heights evenly spaced in [-height/2, height/2]."""
    angle = 2.0 * np.pi * np.arange(classes) / classes
    z = height * (np.linspace(-0.5, 0.5, classes) if classes > 1 else np.zeros(1))
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle), z])


def gen_spiral_clusters(classes: int = 5, per_class: int = 2000, radius: float = 5.0, height: float = 8.0,
                        spread: float = 1.0, seed: int = 0) -> PointCloud:
    """
    Normal clouds of standard deviation `spread` around helix centers, each point labeled by its nearest center.

    Args:
        classes: number of centers.
        per_class: points drawn around each center.
        radius: helix radius.
        height: helix height; the cloud is centered at the origin.
        spread: per-coordinate standard deviation.
        seed: RNG seed.
    Returns:
        PointCloud: classes * per_class points with nearest-center labels.
    """
    if classes < 1 or per_class < 1:
        raise ParameterError(RETURN_MSG.dataset_sizes)
    centers = helix_centers(classes, radius, height)
    cloud = gen_blobs(centers, per_class, spread, seed)
    labeled = relabel_nearest_centers(cloud, centers)
    return PointCloud(labeled.coordinates, labeled.labels, provenance=f"spiral-clusters(seed={seed})")
