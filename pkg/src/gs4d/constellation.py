"""Labeled multidimensional constellations.

A constellation is an ``M x N`` array of real coordinates. The binary label
of a point is the big-endian ``m``-bit expansion of its row index, so bit
position 0 is the most significant bit.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    AllZeroConstellation,
    InvalidConstellation,
    SeedOnAxis,
    WrongDimension,
)

DISTINCT_TOL = 1e-9


def label_bits(n_points, n_bits=None):
    """Return the ``(M, m)`` 0/1 matrix of big-endian row labels."""
    if n_bits is None:
        n_bits = int(n_points).bit_length() - 1
    shifts = np.arange(n_bits - 1, -1, -1)
    return ((np.arange(n_points)[:, None] >> shifts) & 1).astype(np.int8)


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class LabeledConstellation:
    """``M`` points in ``N`` real dimensions; row ``i`` carries label ``i``."""

    points: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise InvalidConstellation("points must be a 2-D array")
        n_points, n_dims = pts.shape
        if n_points < 2 or not _is_power_of_two(n_points):
            raise InvalidConstellation(f"M={n_points} is not a power of two >= 2")
        if n_dims < 2 or n_dims % 2:
            raise InvalidConstellation(f"N={n_dims} must be even")
        if not np.all(np.isfinite(pts)):
            raise InvalidConstellation("non-finite coordinate")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def n_dims(self):
        return self.points.shape[1]

    @property
    def bits(self):
        return self.n_points.bit_length() - 1

    @property
    def mean_energy(self):
        return float(np.mean(np.sum(self.points**2, axis=1)))

    def complex_points(self):
        """Points as ``(M, N/2)`` complex symbols (dims 2c, 2c+1 -> I, Q)."""
        return self.points[:, 0::2] + 1j * self.points[:, 1::2]

    def min_distance(self):
        tree = cKDTree(self.points)
        d, _ = tree.query(self.points, k=2)
        return float(d[:, 1].min())

    def check_distinct(self):
        scale = np.sqrt(self.mean_energy / (self.n_dims / 2))
        if scale == 0 or self.min_distance() / scale <= DISTINCT_TOL:
            raise InvalidConstellation(f"{self.name}: points are not pairwise distinct")
        return self

    def relabeled(self, order, name=None):
        """Constellation whose row ``i`` is row ``order[i]`` of this one."""
        return LabeledConstellation(self.points[np.asarray(order)], name or self.name)


def normalize_power(c):
    """Scale ``c`` so that ``E[||X||^2] = N/2`` (unit power per complex dimension)."""
    energy = c.mean_energy
    if energy == 0.0:
        raise AllZeroConstellation(f"{c.name}: every point is the origin")
    scale = np.sqrt((c.n_dims / 2) / energy)
    if scale == 1.0:
        return c
    return LabeledConstellation(c.points * scale, c.name)


@dataclass(frozen=True)
class BitIndexSets:
    """``sets[k][b]``: sorted row indices whose bit ``k`` (0 = MSB) equals ``b``."""

    sets: tuple

    def __getitem__(self, kb):
        k, b = kb
        return self.sets[k][b]

    @property
    def n_bits(self):
        return len(self.sets)


def bit_index_sets(c):
    bits = label_bits(c.n_points, c.bits)
    sets = tuple(
        tuple(np.flatnonzero(bits[:, k] == b) for b in (0, 1)) for k in range(c.bits)
    )
    return BitIndexSets(sets)


@dataclass(frozen=True)
class OrthantSeed:
    """First-orthant seed points of an orthant-symmetric constellation."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] % 2:
            raise InvalidConstellation("seed must be (S, N) with N even")
        if not _is_power_of_two(pts.shape[0]):
            raise InvalidConstellation(f"seed count {pts.shape[0]} is not a power of two")
        if np.any(pts < 0):
            raise InvalidConstellation("seed coordinates must be >= 0")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_dims(self):
        return self.points.shape[1]

    @property
    def seed_bits(self):
        return self.points.shape[0].bit_length() - 1


def sign_patterns(n_dims):
    """``(2^N, N)`` array of +-1; row ``s`` has -1 where bit ``j`` of ``s`` (MSB = dim 0) is 1."""
    return 1 - 2 * label_bits(2**n_dims, n_dims).astype(float)


def orthant_expand(seed, name="OS"):
    """Reflect the seed into all ``2^N`` orthants.

    Label = ``N`` sign bits (0 = positive, MSB = dim 0) followed by the seed
    index bits. The result is not power-normalized.
    """
    if np.any(seed.points == 0):
        raise SeedOnAxis("seed coordinate equal to 0 would duplicate points")
    signs = sign_patterns(seed.n_dims)
    pts = (signs[:, None, :] * seed.points[None, :, :]).reshape(-1, seed.n_dims)
    return LabeledConstellation(pts, name)


def orthant_seed_of(c):
    """Inverse of :func:`orthant_expand` for OS-structured constellations."""
    n_seed = c.n_points >> c.n_dims
    return OrthantSeed(c.points[:n_seed])


def is_orthant_symmetric(c, tol=1e-12):
    """True if flipping sign bit ``j`` reflects every point in dimension ``j``."""
    if c.bits < c.n_dims:
        return False
    scale = np.sqrt(c.n_dims / 2)
    idx = np.arange(c.n_points)
    for j in range(c.n_dims):
        mask = 1 << (c.bits - 1 - j)
        refl = c.points.copy()
        refl[:, j] *= -1
        if not np.allclose(c.points[idx ^ mask], refl, rtol=0, atol=tol * scale):
            return False
    return bool(np.all(c.points[: c.n_points >> c.n_dims] > 0))


def sign_symmetries(c, tol=1e-12):
    """Label XOR masks realizing coordinate sign flips.

    Returns the list of masks ``mu`` (including 0) for which some sign
    pattern ``s`` satisfies ``X[i ^ mu] == s * X[i]`` for all rows.
    """
    scale = np.sqrt(max(c.mean_energy, 1e-300) / (c.n_dims / 2))
    atol = tol * scale
    idx = np.arange(c.n_points)
    tree = cKDTree(c.points)
    masks = [0]
    for s in sign_patterns(c.n_dims)[1:]:
        dist, j = tree.query(s * c.points[0])
        if dist > atol or j == 0:
            continue
        if j not in masks and np.allclose(c.points[idx ^ j], s * c.points, rtol=0, atol=atol):
            masks.append(int(j))
    return masks


def orbit_representatives(n_points, masks):
    """Smallest row of every orbit under XOR with ``masks``."""
    masks = np.asarray(masks)
    idx = np.arange(n_points)
    reps = np.min(idx[:, None] ^ masks[None, :], axis=1)
    return np.unique(reps)


@dataclass(frozen=True)
class ModulationMoments:
    mu2: float
    kurt_excess: float
    cross4: float
    per_dim_kurt: tuple = field(default=(), compare=False)


def moments(c):
    """Fourth-order moments of a dual-polarization format under uniform input."""
    if c.n_dims != 4:
        raise WrongDimension(f"moments need N=4, got N={c.n_dims}")
    p = np.abs(c.complex_points()) ** 2
    m2 = p.mean(axis=0)
    m4 = (p**2).mean(axis=0)
    if np.any(m2 == 0):
        raise AllZeroConstellation(f"{c.name}: a polarization carries no power")
    kurt = m4 / m2**2 - 2.0
    cross = np.mean(p[:, 0] * p[:, 1]) / (m2[0] * m2[1]) - 1.0
    return ModulationMoments(
        mu2=float(m2.mean()),
        kurt_excess=float(kurt.mean()),
        cross4=float(cross),
        per_dim_kurt=tuple(float(k) for k in kurt),
    )


def cartesian_product(a, b, name):
    """Product of two constellations; label = label(a) || label(b)."""
    pa = np.repeat(a.points, b.n_points, axis=0)
    pb = np.tile(b.points, (a.n_points, 1))
    return LabeledConstellation(np.hstack([pa, pb]), name)


def all_sign_flips(points):
    """Every sign-flipped copy of ``points`` as one stacked array."""
    n_dims = points.shape[1]
    return np.vstack([s * points for s in sign_patterns(n_dims)])
