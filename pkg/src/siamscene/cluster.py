"""From pairwise shot distances to scene boundaries.

Distances become similarities through a Gaussian kernel whose bandwidth
comes from Silverman's rule on the distance sample. Spectral clustering
uses the symmetric normalised Laplacian, a cyclic Jacobi eigensolver, the
eigengap for the cluster count, and seeded k-means++ on the row-normalised
spectral embedding. Boundaries go wherever neighbouring shots disagree.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .siamese import FeatureMatrix, SiameseModel, embed
from .timeline import SceneSegmentation, labels_to_segmentation

BANDWIDTH_FLOOR = 1e-6
MAX_SWEEPS = 50


class EigenError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SpectralConfig:
    k: int | None = None  # None selects by eigengap
    k_max: int | None = None  # None means ceil(n / 5)
    kmeans_restarts: int = 10
    seed: int = 0
    eig_tol: float = 1e-12

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError("k must be at least 1")
        if self.k_max is not None and self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.kmeans_restarts < 1:
            raise ValueError("need at least one k-means restart")


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("similarity matrix must be square")
        if not np.allclose(v, v.T, rtol=0, atol=1e-12):
            raise ValueError("similarity matrix is not symmetric")
        if np.any(v <= 0) or np.any(v > 1) or np.any(np.diag(v) != 1.0):
            raise ValueError("similarities must lie in (0, 1] with a unit diagonal")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def kde_bandwidth(distances, floor: float = BANDWIDTH_FLOOR) -> float:
    """Silverman's rule of thumb, ``1.06 * min(std, IQR / 1.34) * m ** (-1/5)``.

    Falls back to the standard deviation when the IQR is zero, and to
    ``floor`` (with a warning) when the sample has no spread at all.
    """
    x = np.asarray(distances, dtype=np.float64).ravel()
    m = x.size
    if m < 2:
        raise ValueError("need at least two distances")
    std = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    bw = 1.06 * spread * m ** -0.2
    if not bw > 0:
        warnings.warn("distance sample has no spread; using the bandwidth floor",
                      RuntimeWarning, stacklevel=2)
        return floor
    return bw


def gaussian_kernel(distances, sigma: float) -> SimilarityMatrix:
    """``exp(-d^2 / (2 sigma^2))`` with the diagonal pinned to 1.

    Values that would underflow to zero are raised to the smallest normal
    double so every entry stays strictly positive.
    """
    d = np.asarray(distances, dtype=np.float64)
    if not sigma > 0:
        raise ValueError("bandwidth must be positive")
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    if d.size and np.abs(d - d.T).max() > 1e-12 * max(1.0, float(np.abs(d).max())):
        raise ValueError("distance matrix is not symmetric")
    d = 0.5 * (d + d.T)
    w = np.exp(-(d * d) / (2.0 * sigma * sigma))
    np.maximum(w, np.finfo(np.float64).tiny, out=w)
    np.fill_diagonal(w, 1.0)
    return SimilarityMatrix(w)


def normalized_laplacian(sim: SimilarityMatrix | np.ndarray) -> np.ndarray:
    """``I - D^-1/2 W D^-1/2``, symmetrised exactly.

    Also takes a bare non-negative matrix with positive row sums.
    """
    w = sim.values if isinstance(sim, SimilarityMatrix) else np.asarray(sim, dtype=np.float64)
    deg = w.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError("every shot needs a positive degree")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(w.shape[0]) - inv_sqrt[:, None] * w * inv_sqrt[None, :]
    return 0.5 * (lap + lap.T)


def symmetric_eigh(a, tol: float = 1e-12,
                   max_sweeps: int = MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    ``tol`` is relative to the Frobenius norm of ``a``: sweeps stop once the
    off-diagonal mass falls below ``tol * ||a||_F``. Eigenvalues come back
    ascending; each eigenvector is signed so its largest entry is positive.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        return np.zeros(a.shape[0]), np.eye(a.shape[0])
    if np.abs(a - a.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    diag, vecs, sweeps = _kernels.jacobi_eigh(a, tol * scale, max_sweeps)
    if sweeps < 0:
        raise EigenError(f"Jacobi did not converge in {max_sweeps} sweeps")
    order = np.argsort(diag, kind="stable")
    vals = diag[order]
    vecs = vecs[:, order]
    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.where(vecs[lead, np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    return vals, vecs * signs


def choose_k(eigenvalues, k_max: int, k_min: int = 2) -> int:
    """Eigengap heuristic: the ``k`` in ``[k_min, k_max]`` maximising
    ``lambda_{k+1} - lambda_k``; ties go to the smaller ``k``."""
    ev = np.asarray(eigenvalues, dtype=np.float64)
    if ev.size < k_min + 1:
        raise ValueError(f"need at least {k_min + 1} eigenvalues")
    hi = min(k_max, ev.size - 1)
    if hi < k_min:
        return k_min
    gaps = ev[k_min:hi + 1] - ev[k_min - 1:hi]
    return k_min + int(np.argmax(gaps))


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            rest = np.setdiff1d(np.arange(n), chosen)
            pick = int(rng.choice(rest))
        chosen.append(pick)
        d2 = np.minimum(d2, np.sum((x - x[pick]) ** 2, axis=1))
    return x[chosen].copy()


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = 300) -> tuple[np.ndarray, float]:
    """One Lloyd run from a k-means++ start; returns labels and WCSS."""
    x = np.asarray(x, dtype=np.float64)
    centers = _kmeanspp(x, k, rng)
    labels = None
    for _ in range(max_iter):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            own = d2[np.arange(len(x)), labels]
            movable = counts[labels] > 1
            far = int(np.argmax(np.where(movable, own, -np.inf)))
            counts[labels[far]] -= 1
            labels[far] = c
            counts[c] = 1
        for c in range(k):
            centers[c] = x[labels == c].mean(axis=0)
    wcss = float(np.sum((x - centers[labels]) ** 2))
    return labels, wcss


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Rename labels in order of first appearance."""
    mapping: dict[int, int] = {}
    return np.array([mapping.setdefault(int(v), len(mapping)) for v in labels])


@dataclass(frozen=True, eq=False)
class SpectralResult:
    labels: np.ndarray
    k: int
    eigenvalues: np.ndarray
    wcss: float


def spectral_cluster(sim: SimilarityMatrix, cfg: SpectralConfig = SpectralConfig()) -> SpectralResult:
    """Cluster shots on the ``k`` smallest Laplacian eigenvectors.

    With ``cfg.k`` unset the eigengap picks ``k`` from ``1..k_max`` so that a
    uniform similarity matrix yields a single cluster.
    """
    n = sim.n
    vals, vecs = symmetric_eigh(normalized_laplacian(sim), cfg.eig_tol)
    if cfg.k is not None:
        if cfg.k > n:
            raise ValueError(f"k={cfg.k} exceeds {n} shots")
        k = cfg.k
    elif n == 1:
        k = 1
    else:
        k_max = cfg.k_max if cfg.k_max is not None else math.ceil(n / 5)
        k = choose_k(vals, k_max, k_min=1)
    if k == 1:
        return SpectralResult(np.zeros(n, dtype=np.int64), 1, vals, 0.0)

    emb = vecs[:, :k].copy()
    norms = np.linalg.norm(emb, axis=1)
    nz = norms > 0
    emb[nz] /= norms[nz, None]

    rng = np.random.default_rng(cfg.seed)
    best_labels, best_wcss = None, np.inf
    for _ in range(cfg.kmeans_restarts):
        labels, wcss = kmeans(emb, k, rng)
        if wcss < best_wcss:
            best_labels, best_wcss = labels, wcss
    return SpectralResult(_canonical(best_labels), k, vals, best_wcss)


@dataclass(frozen=True, eq=False)
class SegmentResult:
    segmentation: SceneSegmentation
    similarity: SimilarityMatrix
    sigma: float
    sigma_source: str
    spectral: SpectralResult
    distances: np.ndarray = field(repr=False)

    def manifest(self) -> dict:
        return {
            "n_shots": self.similarity.n,
            "sigma": self.sigma,
            "sigma_source": self.sigma_source,
            "k": self.spectral.k,
            "eigenvalues": [float(v) for v in self.spectral.eigenvalues],
            "boundaries": list(self.segmentation.boundaries),
            "wcss": self.spectral.wcss,
        }


def upper_triangle(d: np.ndarray) -> np.ndarray:
    return d[np.triu_indices(d.shape[0], 1)]


def segment_distances(distances: np.ndarray, cfg: SpectralConfig = SpectralConfig(),
                      sigma: float | None = None) -> SegmentResult:
    """Kernel, spectral clustering and boundary placement on a distance matrix."""
    n = distances.shape[0]
    if n < 1:
        raise ValueError("no shots")
    if sigma is None:
        sample = upper_triangle(distances)
        if sample.size >= 2:
            sigma, source = kde_bandwidth(sample), "silverman"
        else:
            sigma, source = 1.0, "default"
    else:
        source = "override"
    sim = gaussian_kernel(distances, sigma)
    spectral = spectral_cluster(sim, cfg)
    seg = labels_to_segmentation(spectral.labels)
    return SegmentResult(seg, sim, float(sigma), source, spectral, distances)


def segment(features: FeatureMatrix, model: SiameseModel,
            cfg: SpectralConfig = SpectralConfig(), sigma: float | None = None) -> SegmentResult:
    """Full pipeline for one video: embed, pair distances, kernel, clusters, scenes."""
    out = embed(model, features)
    return segment_distances(_kernels.pairwise_distances(out), cfg, sigma)


def similarity_csv(sim: SimilarityMatrix) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in sim.values)


def similarity_pgm(sim: SimilarityMatrix) -> bytes:
    """8-bit binary PGM; white is similarity 1."""
    pixels = np.rint(sim.values * 255.0).astype(np.uint8)
    return f"P5\n{sim.n} {sim.n}\n255\n".encode("ascii") + pixels.tobytes()
