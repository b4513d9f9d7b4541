"""Orthonormal motion-basis algebra.

A MotionBasis holds M orthonormal direction vectors in a d-dimensional
latent space. Motion latents are linear combinations of the directions;
anything orthogonal to their span is treated as identity content. All
operations are pure and the basis is immutable after construction.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DimError, RankError
from .io import read_container, write_container

BASIS_MAGIC = b"MBAS"
ORTHO_TOL = 1e-9


class MotionBasis:
    """M orthonormal rows spanning the motion subspace of R^d."""

    def __init__(self, vectors: np.ndarray):
        vectors = np.array(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise DimError(f"basis must be a matrix, got shape {vectors.shape}")
        count, dims = vectors.shape
        if count > dims:
            raise DimError(f"more directions ({count}) than dimensions ({dims})")
        gram = vectors @ vectors.T
        err = np.max(np.abs(gram - np.eye(count)))
        if err > ORTHO_TOL:
            raise DimError(f"rows are not orthonormal (max Gram error {err:.3e})")
        vectors.setflags(write=False)
        self.vectors = vectors

    @property
    def dims(self) -> int:
        return self.vectors.shape[1]

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    def __eq__(self, other):
        return isinstance(other, MotionBasis) and np.array_equal(self.vectors, other.vectors)


def orthonormalize(raw: np.ndarray) -> MotionBasis:
    """Build a basis from linearly independent rows.

    Modified Gram-Schmidt with one re-orthogonalization pass; deterministic
    for a given input. Raises RankError naming the first dependent row.
    """
    raw = np.array(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise DimError(f"expected a matrix of rows, got shape {raw.shape}")
    count, dims = raw.shape
    if count > dims:
        raise DimError(f"more rows ({count}) than dimensions ({dims})")
    q = raw.copy()
    for i in range(count):
        for _ in range(2):  # second pass scrubs accumulated round-off
            for j in range(i):
                q[i] -= (q[i] @ q[j]) * q[j]
        norm = np.linalg.norm(q[i])
        if norm < 1e-12:
            raise RankError(f"row {i} is linearly dependent on earlier rows")
        q[i] /= norm
    return MotionBasis(q)


def compose(coeffs: np.ndarray, basis: MotionBasis) -> np.ndarray:
    """Sum of coefficient-weighted directions: a motion latent in span(V)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (basis.count,):
        raise DimError(f"coefficients shape {coeffs.shape} != ({basis.count},)")
    return coeffs @ basis.vectors


def project(latent: np.ndarray, basis: MotionBasis) -> np.ndarray:
    """Closed-form coefficients: inner products with each direction."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape != (basis.dims,):
        raise DimError(f"latent shape {latent.shape} != ({basis.dims},)")
    return basis.vectors @ latent


def shift_coefficient(latent: np.ndarray, basis: MotionBasis, index: int,
                      delta: float) -> np.ndarray:
    """Move one coefficient by ``delta``, leaving every other coefficient and
    the orthogonal-complement component untouched."""
    if not 0 <= index < basis.count:
        raise IndexError(f"direction index {index} out of range [0, {basis.count})")
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape != (basis.dims,):
        raise DimError(f"latent shape {latent.shape} != ({basis.dims},)")
    if delta == 0.0:
        return latent.copy()
    return latent + float(delta) * basis.vectors[index]


def decompose(full: np.ndarray, basis: MotionBasis):
    """Split a latent into (identity, motion): complement plus span parts."""
    full = np.asarray(full, dtype=np.float64)
    if full.shape != (basis.dims,):
        raise DimError(f"latent shape {full.shape} != ({basis.dims},)")
    motion = compose(project(full, basis), basis)
    return full - motion, motion


def complement_vector(rng: np.random.Generator, basis: MotionBasis,
                      scale: float = 1.0) -> np.ndarray:
    """Random vector in the orthogonal complement of the basis span."""
    v = rng.normal(0.0, scale, size=basis.dims)
    for _ in range(2):
        v -= basis.vectors.T @ (basis.vectors @ v)
    return v


def save_basis(path, basis: MotionBasis):
    write_container(path, BASIS_MAGIC,
                    {"dims": basis.dims, "count": basis.count},
                    {"vectors": basis.vectors})


def load_basis(path) -> MotionBasis:
    _, _, header, arrays = read_container(path, BASIS_MAGIC)
    vectors = arrays["vectors"]
    if vectors.shape != (header["count"], header["dims"]):
        raise DimError(f"basis payload shape {vectors.shape} does not match header")
    return MotionBasis(vectors)


def basis_to_json(basis: MotionBasis) -> str:
    """Lossless JSON debug dump (float repr round-trips exactly)."""
    return json.dumps({"dims": basis.dims, "count": basis.count,
                       "vectors": basis.vectors.tolist()}, indent=1)


def basis_from_json(text: str) -> MotionBasis:
    obj = json.loads(text)
    return MotionBasis(np.array(obj["vectors"], dtype=np.float64))


def dump_basis_json(path, basis: MotionBasis):
    Path(path).write_text(basis_to_json(basis))
