"""Linear algebra over GF(2).

Row reduction works on bit-packed rows (64 columns per ``uint64`` word) so a
row operation is a handful of word XORs.  Batch products (encoding many
messages, syndromes of many words) use plain integer matmuls reduced mod 2.
"""
from __future__ import annotations

import numpy as np

WORD = 64


class GF2Error(ValueError):
    """Raised for singular or rank-deficient inputs."""


def pack_rows(mat: np.ndarray) -> np.ndarray:
    """Pack a 0/1 matrix into rows of uint64 words, column j -> word j // 64, bit j % 64."""
    mat = np.asarray(mat, dtype=np.uint8) & 1
    rows, cols = mat.shape
    nwords = max(1, -(-cols // WORD))
    padded = np.zeros((rows, nwords * WORD), dtype=np.uint64)
    padded[:, :cols] = mat
    shifts = np.arange(WORD, dtype=np.uint64)
    return (padded.reshape(rows, nwords, WORD) << shifts).sum(axis=2, dtype=np.uint64)


def unpack_rows(packed: np.ndarray, cols: int) -> np.ndarray:
    shifts = np.arange(WORD, dtype=np.uint64)
    bits = (packed[:, :, None] >> shifts) & np.uint64(1)
    return bits.reshape(packed.shape[0], -1)[:, :cols].astype(np.uint8)


def _column(packed: np.ndarray, j: int) -> np.ndarray:
    return ((packed[:, j // WORD] >> np.uint64(j % WORD)) & np.uint64(1)).astype(bool)


def row_reduce(mat: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form of ``mat`` over GF(2).

    Returns the reduced matrix (same shape, zero rows at the bottom) and the
    list of pivot columns.
    """
    mat = np.asarray(mat, dtype=np.uint8)
    rows, cols = mat.shape
    packed = pack_rows(mat)
    pivots: list[int] = []
    r = 0
    for j in range(cols):
        if r == rows:
            break
        col = _column(packed, j)
        cand = np.flatnonzero(col[r:])
        if cand.size == 0:
            continue
        p = r + cand[0]
        if p != r:
            packed[[r, p]] = packed[[p, r]]
            col[[r, p]] = col[[p, r]]
        col[r] = False
        packed[col] ^= packed[r]
        pivots.append(j)
        r += 1
    return unpack_rows(packed, cols), pivots


def rank(mat: np.ndarray) -> int:
    return len(row_reduce(mat)[1])


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of 0/1 arrays reduced mod 2 (works batched along leading axes)."""
    prod = np.asarray(a, dtype=np.int64) @ np.asarray(b, dtype=np.int64)
    return (prod & 1).astype(np.uint8)


def independent_rows(mat: np.ndarray) -> np.ndarray:
    """Indices of a maximal set of linearly independent rows, greedily in row order."""
    mat = np.asarray(mat, dtype=np.uint8)
    rows, cols = mat.shape
    basis = np.zeros((0, cols), dtype=np.uint8)
    keep = []
    r = 0
    for i in range(rows):
        trial = np.vstack([basis, mat[i : i + 1]])
        if rank(trial) > r:
            basis = trial
            keep.append(i)
            r += 1
    return np.array(keep, dtype=np.int64)


def nullspace(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Basis of {x : mat @ x = 0} in systematic form.

    Returns ``(basis, free)`` where ``basis`` has one row per free column and
    ``basis[:, free]`` is the identity.
    """
    mat = np.asarray(mat, dtype=np.uint8)
    reduced, pivots = row_reduce(mat)
    cols = mat.shape[1]
    free = [j for j in range(cols) if j not in set(pivots)]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for t, f in enumerate(free):
        basis[t, f] = 1
        for r, p in enumerate(pivots):
            basis[t, p] = reduced[r, f]
    return basis, np.array(free, dtype=np.int64)
