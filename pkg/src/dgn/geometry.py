"""Canonical 3-d polytopes and the affine transform families used to test them.

All five regular polytopes are built from exact golden-ratio/unit-coordinate
constructions, centred at the origin, with edges recovered as the
minimum-distance vertex pairs. Transforms act on coordinates as
``x -> gamma * A @ x + q`` and come in three families:

* ``orthogonal``            gamma = 1, A a composition of three axis
                            rotations with N(0, 1) angles, q ~ N(0, I).
* ``orthogonal_dilation``   additionally gamma ~ N(1, 1), resampled while
                            |gamma| < 0.1 to avoid collapsing the graph.
* ``non_orthogonal``        additionally A = Q @ (I + eps * N) with N iid
                            standard normal; eps is calibrated so the mean
                            Frobenius defect E[||A^T A - I||_F] hits a target
                            mu.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FAMILIES",
    "POLYTOPE_KINDS",
    "AffineTransform",
    "Polytope",
    "TransformClass",
    "apply_transform",
    "calibrate_epsilon",
    "make_polytope",
    "random_orthogonal",
    "sample_transform",
]

POLYTOPE_KINDS = ("simplex", "cube", "octahedron", "dodecahedron", "icosahedron")
FAMILIES = ("orthogonal", "orthogonal_dilation", "non_orthogonal")

_PHI = (1.0 + np.sqrt(5.0)) / 2.0

# (num_vertices, num_undirected_edges) per kind
POLYTOPE_COUNTS = {
    "simplex": (4, 6),
    "cube": (8, 12),
    "octahedron": (6, 12),
    "dodecahedron": (20, 30),
    "icosahedron": (12, 30),
}


@dataclass(frozen=True)
class Polytope:
    kind: str
    vertices: np.ndarray  # (n, 3)
    edges: np.ndarray  # (m, 2) undirected, each pair sorted, lexicographic order


@dataclass(frozen=True)
class AffineTransform:
    """Coordinate map x -> gamma * A @ x + q."""

    gamma: float
    A: np.ndarray  # (3, 3)
    q: np.ndarray  # (3,)


@dataclass(frozen=True)
class TransformClass:
    family: str
    mu: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown transform family {self.family!r}; choose from {FAMILIES}")
        if self.family == "non_orthogonal" and self.mu <= 0:
            raise ValueError("non_orthogonal transforms need mu > 0")
        if self.family != "non_orthogonal" and self.mu != 0.0:
            raise ValueError(f"mu is only meaningful for non_orthogonal, got mu={self.mu}")


def _cyclic(v):
    x, y, z = v
    return [(x, y, z), (z, x, y), (y, z, x)]


def _vertices(kind):
    if kind == "simplex":
        # regular tetrahedron inscribed in the cube
        return np.array([(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)], dtype=np.float64)
    if kind == "cube":
        return np.array(
            [(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64
        )
    if kind == "octahedron":
        return np.array(
            [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)],
            dtype=np.float64,
        )
    if kind == "icosahedron":
        verts = []
        for s1 in (-1, 1):
            for s2 in (-1, 1):
                verts.extend(_cyclic((0.0, s1 * 1.0, s2 * _PHI)))
        return np.array(verts, dtype=np.float64)
    if kind == "dodecahedron":
        verts = [(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)]
        for s1 in (-1, 1):
            for s2 in (-1, 1):
                verts.extend(_cyclic((0.0, s1 / _PHI, s2 * _PHI)))
        return np.array(verts, dtype=np.float64)
    raise ValueError(f"unknown polytope kind {kind!r}; choose from {POLYTOPE_KINDS}")


def _min_distance_edges(vertices):
    diff = vertices[:, None, :] - vertices[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    iu = np.triu_indices(len(vertices), k=1)
    pairwise = dist[iu]
    shortest = pairwise.min()
    keep = pairwise <= shortest * (1.0 + 1e-9)
    return np.stack([iu[0][keep], iu[1][keep]], axis=1).astype(np.int64)


def make_polytope(kind):
    """Canonical-pose polytope centred at the origin with equal edge lengths."""
    vertices = _vertices(kind)
    edges = _min_distance_edges(vertices)
    return Polytope(kind=kind, vertices=vertices, edges=edges)


def _axis_rotation(axis, theta):
    c, s = np.cos(theta), np.sin(theta)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def random_orthogonal(rng):
    """Rotation Rx(t1) @ Ry(t2) @ Rz(t3) with angles drawn from N(0, 1)."""
    t1, t2, t3 = rng.standard_normal(3)
    return _axis_rotation(0, t1) @ _axis_rotation(1, t2) @ _axis_rotation(2, t3)


def _sample_gamma(rng):
    # unit-mean, unit-std dilation; reject near-zero scales
    while True:
        gamma = rng.normal(1.0, 1.0)
        if abs(gamma) >= 0.1:
            return gamma


# eps per mu, calibrated once per process with a fixed internal seed so every
# caller (and every worker process) agrees on the sampling law.
_EPSILON_CACHE: dict[float, float] = {}
_CALIBRATION_SEED = 170_581


def calibrate_epsilon(mu_target, rng, draws=200_000, rel_tol=0.01):
    """Perturbation scale eps with E[||(I+eps*N)^T (I+eps*N) - I||_F] ~= mu_target.

    Bisection over a monotone bracket with common random numbers; the
    returned eps reproduces mu_target within ``rel_tol`` on the calibration
    sample (at least 1e5 draws).
    """
    if mu_target <= 0:
        raise ValueError(f"mu_target must be positive, got {mu_target}")
    draws = max(int(draws), 100_000)
    noise = rng.standard_normal((draws, 3, 3))
    sym = noise + noise.transpose(0, 2, 1)
    gram = noise.transpose(0, 2, 1) @ noise

    def defect(eps):
        # ||(I+eN)^T (I+eN) - I||_F = ||e*(N+N^T) + e^2*(N^T N)||_F
        m = eps * sym + eps * eps * gram
        return float(np.sqrt((m**2).sum(axis=(1, 2))).mean())

    lo, hi = 0.0, 1.0
    while defect(hi) < mu_target:
        hi *= 2.0
        if hi > 64.0:
            raise RuntimeError(f"failed to bracket mu_target={mu_target}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if defect(mid) < mu_target:
            lo = mid
        else:
            hi = mid
    eps = 0.5 * (lo + hi)
    achieved = defect(eps)
    if abs(achieved - mu_target) > rel_tol * mu_target:
        raise RuntimeError(
            f"calibration missed mu_target={mu_target}: achieved {achieved:.6f}"
        )
    return eps


def epsilon_for(mu):
    """Cached calibrated eps for a non-orthogonality target."""
    key = float(mu)
    if key not in _EPSILON_CACHE:
        _EPSILON_CACHE[key] = calibrate_epsilon(
            key, np.random.default_rng(_CALIBRATION_SEED)
        )
    return _EPSILON_CACHE[key]


def sample_transform(tclass, rng):
    """Draw one transform from the given family.

    Draw order is fixed (rotation angles, shift, then dilation, then the
    non-orthogonal perturbation) so a seeded rng yields a stable stream.
    """
    if not isinstance(tclass, TransformClass):
        raise TypeError(f"expected a TransformClass, got {type(tclass).__name__}")
    A = random_orthogonal(rng)
    q = rng.standard_normal(3)
    gamma = 1.0
    if tclass.family in ("orthogonal_dilation", "non_orthogonal"):
        gamma = _sample_gamma(rng)
    if tclass.family == "non_orthogonal":
        eps = epsilon_for(tclass.mu)
        A = A @ (np.eye(3) + eps * rng.standard_normal((3, 3)))
    return AffineTransform(gamma=float(gamma), A=A, q=q)


def apply_transform(t, coords):
    """Map every coordinate row by x -> gamma * A @ x + q."""
    coords = np.asarray(coords, dtype=np.float64)
    return t.gamma * coords @ t.A.T + t.q
