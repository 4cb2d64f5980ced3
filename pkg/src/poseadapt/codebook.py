"""Discrete SO(3) hypothesis sets and softmax rotation distributions.

A codebook holds N_r rotation matrices (quasi-uniform over SO(3): Fibonacci
sphere viewpoints x uniform in-plane angles) plus optional unit embedding
vectors. On top of it: the softmax distribution over embedding dot products,
argmax decoding, nearest-rotation snapping, and the rotation-consistency
negative log-likelihood with its analytic gradient.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigurationError, DataError
from .geometry import is_rotation

_MAGIC = b"RCBK"
_VERSION = 1

UNIT_TOL = 1e-9


def rotation_about_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a (normalized) 3D axis."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    k = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def fibonacci_sphere(n: int) -> np.ndarray:
    """n quasi-uniform unit vectors on S^2 (golden-angle lattice).

    A single point is placed on the +z axis so that a one-viewpoint codebook
    decodes to the identity.
    """
    if n < 1:
        raise ConfigurationError(f"need at least one viewpoint, got {n}")
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    rad = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    theta = golden * i
    return np.stack([rad * np.cos(theta), rad * np.sin(theta), z], axis=1)


def _viewpoint_rotation(v: np.ndarray) -> np.ndarray:
    """Rotation whose third row is v: maps the viewpoint direction onto +z."""
    if v[2] > 1.0 - 1e-12:
        return np.eye(3)
    if v[2] < -1.0 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    u = np.array([-v[1], v[0], 0.0])
    u /= np.linalg.norm(u)
    w = np.cross(v, u)
    return np.stack([u, w, v])


def geodesic_distance(r1, r2) -> float:
    """Angle in radians between two rotations: arccos((trace(r1^T r2) - 1)/2)."""
    tr = float(np.trace(np.asarray(r1).T @ np.asarray(r2)))
    return float(np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)))


def geodesic_distances(rotation, rotations) -> np.ndarray:
    """Geodesic distance from one rotation to a stack of rotations (N, 3, 3)."""
    rotation = np.asarray(rotation, dtype=np.float64)
    rotations = np.asarray(rotations, dtype=np.float64)
    tr = np.einsum("ij,nij->n", rotation, rotations)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


def rotation_features(rotations, dim: int | None = None, seed: int = 0) -> np.ndarray:
    """Deterministic unit-norm feature vectors for rotations.

    Flattens each 3x3 matrix and L2-normalizes; when dim is given the 9-dim
    features are first lifted with a fixed seeded Gaussian projection. Serves
    as the embedding stand-in wherever a learned encoder would provide one.
    """
    rotations = np.asarray(rotations, dtype=np.float64)
    flat = rotations.reshape(-1, 9)
    if dim is not None and dim != 9:
        proj = np.random.default_rng(seed).standard_normal((9, dim)) / np.sqrt(dim)
        flat = flat @ proj
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    return flat / norms


class RotationCodebook:
    """Immutable set of N_r rotations with optional unit embeddings."""

    def __init__(self, rotations, embeddings=None, validate: bool = True):
        rotations = np.ascontiguousarray(rotations, dtype=np.float64)
        if rotations.ndim != 3 or rotations.shape[1:] != (3, 3) or len(rotations) < 1:
            raise ConfigurationError(
                f"rotations must be (N, 3, 3) with N >= 1, got {rotations.shape}"
            )
        if validate:
            eye_err = np.abs(
                np.einsum("nij,nik->njk", rotations, rotations) - np.eye(3)
            ).max()
            det_err = np.abs(np.linalg.det(rotations) - 1.0).max()
            if eye_err > 1e-9 or det_err > 1e-9:
                raise ConfigurationError("codebook rotations must be in SO(3)")
        if embeddings is not None:
            embeddings = np.ascontiguousarray(embeddings, dtype=np.float64)
            if embeddings.ndim != 2 or len(embeddings) != len(rotations):
                raise ConfigurationError("embeddings must be (N, C)")
            if validate:
                norm_err = np.abs(np.linalg.norm(embeddings, axis=1) - 1.0).max()
                if norm_err > UNIT_TOL:
                    raise ConfigurationError("embeddings must be unit-norm")
            embeddings.flags.writeable = False
        rotations.flags.writeable = False
        self.rotations = rotations
        self.embeddings = embeddings

    def __len__(self):
        return len(self.rotations)

    def snap(self, rotation) -> int:
        """Index of the geodesically nearest codebook rotation."""
        return int(np.argmin(geodesic_distances(rotation, self.rotations)))

    def save(self, path):
        """Write the versioned binary codebook file (bit-exact round trip)."""
        emb = self.embeddings
        c = 0 if emb is None else emb.shape[1]
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<IQQ", _VERSION, len(self), c))
            f.write(self.rotations.astype("<f8").tobytes())
            if emb is not None:
                f.write(emb.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "RotationCodebook":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != _MAGIC:
                raise DataError(f"not a codebook file (magic {magic!r})")
            version, n, c = struct.unpack("<IQQ", f.read(20))
            if version != _VERSION:
                raise DataError(f"unsupported codebook version {version}")
            rot = np.frombuffer(f.read(n * 72), dtype="<f8").reshape(n, 3, 3)
            emb = None
            if c:
                emb = np.frombuffer(f.read(n * c * 8), dtype="<f8").reshape(n, c)
        return cls(rot, emb, validate=False)


def build_codebook(
    n_viewpoints: int,
    n_inplane: int,
    embed_dim: int | None = None,
    embed_seed: int = 0,
    with_embeddings: bool = True,
) -> RotationCodebook:
    """Codebook of n_viewpoints x n_inplane rotations.

    Viewpoints come from the Fibonacci-sphere lattice and each is combined
    with uniformly spaced in-plane angles in [0, 2pi). Deterministic given
    the arguments; (1, 1) yields the identity rotation.
    """
    if n_viewpoints < 1 or n_inplane < 1:
        raise ConfigurationError("viewpoint and in-plane counts must be >= 1")
    views = fibonacci_sphere(n_viewpoints)
    angles = 2.0 * np.pi * np.arange(n_inplane) / n_inplane
    cos, sin = np.cos(angles), np.sin(angles)
    inplane = np.zeros((n_inplane, 3, 3))
    inplane[:, 0, 0] = cos
    inplane[:, 0, 1] = -sin
    inplane[:, 1, 0] = sin
    inplane[:, 1, 1] = cos
    inplane[:, 2, 2] = 1.0

    frames = np.stack([_viewpoint_rotation(v) for v in views])
    rotations = np.einsum("aij,vjk->vaik", inplane, frames).reshape(-1, 3, 3)
    embeddings = None
    if with_embeddings:
        embeddings = rotation_features(rotations, dim=embed_dim, seed=embed_seed)
    return RotationCodebook(rotations, embeddings, validate=False)


class RotationDistribution:
    """Probabilities over the codebook entries (sums to 1 within 1e-9)."""

    def __init__(self, probs, validate: bool = True):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or len(probs) < 1:
            raise ConfigurationError("probs must be a nonempty vector")
        if validate:
            if probs.min() < 0 or abs(probs.sum() - 1.0) > 1e-9:
                raise ConfigurationError("probs must be nonnegative and sum to 1")
        self.probs = probs

    def __len__(self):
        return len(self.probs)


def _scaled_scores(query_emb, codebook: RotationCodebook, temperature: float):
    if codebook.embeddings is None:
        raise ConfigurationError("codebook has no embeddings")
    if not temperature > 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")
    query_emb = np.asarray(query_emb, dtype=np.float64)
    return codebook.embeddings @ query_emb / temperature


def rotation_distribution(
    query_emb, codebook: RotationCodebook, temperature: float = 1.0
) -> RotationDistribution:
    """Softmax distribution over the codebook from embedding dot products.

    Computed with max-subtraction so arbitrary embedding magnitudes stay
    overflow-safe.
    """
    s = _scaled_scores(query_emb, codebook, temperature)
    s -= s.max()
    e = np.exp(s)
    return RotationDistribution(e / e.sum(), validate=False)


def decode_argmax(dist: RotationDistribution, codebook: RotationCodebook) -> np.ndarray:
    """Codebook rotation at the first index attaining the maximum probability."""
    if len(dist) != len(codebook):
        raise ConfigurationError(
            f"distribution size {len(dist)} != codebook size {len(codebook)}"
        )
    return codebook.rotations[int(np.argmax(dist.probs))]


def rotation_nll(
    query_emb,
    target_rotation,
    codebook: RotationCodebook,
    temperature: float = 0.1,
    return_grad: bool = False,
):
    """Negative log-likelihood of a target rotation under the softmax model.

    The continuous target is snapped to its geodesically nearest codebook
    entry before lookup; the value is computed via log-sum-exp. With
    return_grad=True also returns d(nll)/d(query_emb) =
    (sum_j p_j emb_j - emb_k) / temperature.
    """
    k = codebook.snap(target_rotation)
    s = _scaled_scores(query_emb, codebook, temperature)
    m = s.max()
    log_z = m + np.log(np.exp(s - m).sum())
    nll = float(log_z - s[k])
    if not return_grad:
        return nll
    p = np.exp(s - log_z)
    grad = (p @ codebook.embeddings - codebook.embeddings[k]) / temperature
    return nll, grad


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via a uniform unit quaternion."""
    u1, u2, u3 = rng.random(3)
    q = np.array(
        [
            np.sqrt(1.0 - u1) * np.sin(2.0 * np.pi * u2),
            np.sqrt(1.0 - u1) * np.cos(2.0 * np.pi * u2),
            np.sqrt(u1) * np.sin(2.0 * np.pi * u3),
            np.sqrt(u1) * np.cos(2.0 * np.pi * u3),
        ]
    )
    x, y, z, w = q
    r = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
    assert is_rotation(r, tol=1e-7)
    return r
