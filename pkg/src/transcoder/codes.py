"""Binary linear block codes: parity-check files, Tanner graphs, polar codes.

Every code is defined by its parity-check matrix H.  The generator matrix is
always derived from H by GF(2) elimination, in systematic form on the
information positions and in the original column order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterator

import numpy as np

from . import gf2


class CodeError(ValueError):
    """Invalid code description (bad dimensions, rank deficiency, ...)."""


class AlistError(CodeError):
    """Malformed alist file; carries the 1-based line number of the problem."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# --------------------------------------------------------------------------
# parity-check matrices and alist I/O


@dataclass(frozen=True, eq=False)
class ParityCheckMatrix:
    bits: np.ndarray
    allow_redundant: bool = False

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8, copy=True)
        if bits.ndim != 2 or bits.shape[0] == 0 or bits.shape[1] == 0:
            raise CodeError(f"parity-check matrix must be a nonempty 2-D array, got shape {bits.shape}")
        if np.any(bits > 1):
            raise CodeError("parity-check matrix must be binary")
        empty = np.flatnonzero(bits.sum(axis=1) == 0)
        if empty.size:
            raise CodeError(f"parity-check rows {empty.tolist()} are all-zero")
        r = gf2.rank(bits)
        if r < bits.shape[0] and not self.allow_redundant:
            raise CodeError(f"parity-check matrix has rank {r} < {bits.shape[0]} rows")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "_rank", r)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def rank(self) -> int:
        return self._rank


def _ints(line: str, lineno: int) -> list[int]:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise AlistError(f"expected integers, got {line.strip()!r}", lineno) from None


def parse_alist(text: str, allow_redundant: bool = False) -> ParityCheckMatrix:
    """Parse alist text into a parity-check matrix.

    Layout: ``n m`` / ``max_col_deg max_row_deg`` / n column degrees / m row
    degrees / n lines of 1-based row indices per column / m lines of 1-based
    column indices per row.  Zero entries pad short lists.
    """
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    pos = 0

    def take(count: int | None = None) -> tuple[int, list[int]]:
        nonlocal pos
        if pos >= len(lines):
            raise AlistError("unexpected end of file", lines[-1][0] + 1 if lines else 1)
        lineno, ln = lines[pos]
        pos += 1
        vals = _ints(ln, lineno)
        if count is not None and len(vals) != count:
            raise AlistError(f"expected {count} integers, found {len(vals)}", lineno)
        return lineno, vals

    ln, (n, m) = take(2)
    if n <= 0 or m <= 0:
        raise AlistError(f"invalid dimensions n={n}, m={m}", ln)
    ln, (max_cd, max_rd) = take(2)
    ln_cd, col_deg = take(n)
    ln_rd, row_deg = take(m)
    if max(col_deg) > max_cd:
        raise AlistError(f"column degree {max(col_deg)} exceeds declared maximum {max_cd}", ln_cd)
    if max(row_deg) > max_rd:
        raise AlistError(f"row degree {max(row_deg)} exceeds declared maximum {max_rd}", ln_rd)

    from_cols = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        ln, idx = take()
        idx = [v for v in idx if v != 0]
        if len(idx) != col_deg[j]:
            raise AlistError(f"column {j + 1} lists {len(idx)} entries but degree is {col_deg[j]}", ln)
        for v in idx:
            if not 1 <= v <= m:
                raise AlistError(f"row index {v} out of range 1..{m}", ln)
            if from_cols[v - 1, j]:
                raise AlistError(f"duplicate row index {v} in column {j + 1}", ln)
            from_cols[v - 1, j] = 1
    from_rows = np.zeros((m, n), dtype=np.uint8)
    for i in range(m):
        ln, idx = take()
        idx = [v for v in idx if v != 0]
        if len(idx) != row_deg[i]:
            raise AlistError(f"row {i + 1} lists {len(idx)} entries but degree is {row_deg[i]}", ln)
        for v in idx:
            if not 1 <= v <= n:
                raise AlistError(f"column index {v} out of range 1..{n}", ln)
            from_rows[i, v - 1] = 1
    if not np.array_equal(from_cols, from_rows):
        raise AlistError("row and column adjacency lists disagree", ln)
    return ParityCheckMatrix(from_cols, allow_redundant=allow_redundant)


def load_alist(path: str | Path, allow_redundant: bool = False) -> ParityCheckMatrix:
    return parse_alist(Path(path).read_text(), allow_redundant=allow_redundant)


def format_alist(H: np.ndarray) -> str:
    H = np.asarray(H, dtype=np.uint8)
    m, n = H.shape
    cols = [np.flatnonzero(H[:, j]) + 1 for j in range(n)]
    rows = [np.flatnonzero(H[i]) + 1 for i in range(m)]
    out = [f"{n} {m}", f"{max(map(len, cols))} {max(map(len, rows))}"]
    out.append(" ".join(str(len(c)) for c in cols))
    out.append(" ".join(str(len(r)) for r in rows))
    out += [" ".join(map(str, c)) for c in cols]
    out += [" ".join(map(str, r)) for r in rows]
    return "\n".join(out) + "\n"


def generator_from_parity(H: ParityCheckMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Systematic generator matrix for the code with parity-check matrix H.

    Returns ``(G, info_positions)`` with ``G[:, info_positions]`` the identity
    and ``G @ H.T == 0`` over GF(2).  H must have full row rank.
    """
    bits = H.bits if isinstance(H, ParityCheckMatrix) else np.asarray(H, dtype=np.uint8)
    r = gf2.rank(bits)
    if r < bits.shape[0]:
        raise CodeError(f"parity-check matrix has rank {r} < {bits.shape[0]} rows")
    G, info = gf2.nullspace(bits)
    if G.shape[0] == 0:
        raise CodeError("code has dimension 0")
    return G, info


# --------------------------------------------------------------------------
# Tanner graph


@dataclass(frozen=True, eq=False)
class TannerGraph:
    """Bipartite graph of H with edges numbered check-major.

    ``edge_check[e]``/``edge_var[e]`` are the endpoints of edge ``e``;
    ``check_slots`` is an (n_checks, max_check_degree) table of edge indices
    padded with ``n_edges`` so per-check operations can run on a dense array.
    """

    n_vars: int
    n_checks: int
    edge_check: np.ndarray
    edge_var: np.ndarray

    @classmethod
    def from_matrix(cls, H: ParityCheckMatrix | np.ndarray) -> "TannerGraph":
        bits = H.bits if isinstance(H, ParityCheckMatrix) else np.asarray(H, dtype=np.uint8)
        chk, var = np.nonzero(bits)
        return cls(bits.shape[1], bits.shape[0], chk.astype(np.int64), var.astype(np.int64))

    @property
    def n_edges(self) -> int:
        return int(self.edge_var.size)

    @cached_property
    def var_edges(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.edge_var == v) for v in range(self.n_vars)]

    @cached_property
    def check_edges(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.edge_check == c) for c in range(self.n_checks)]

    @cached_property
    def check_slots(self) -> np.ndarray:
        width = max(len(e) for e in self.check_edges)
        slots = np.full((self.n_checks, width), self.n_edges, dtype=np.int64)
        for c, e in enumerate(self.check_edges):
            slots[c, : len(e)] = e
        return slots

    @cached_property
    def slot_of_edge(self) -> np.ndarray:
        """Flat index into ``check_slots`` for each edge."""
        flat = np.empty(self.n_edges, dtype=np.int64)
        width = self.check_slots.shape[1]
        for c, e in enumerate(self.check_edges):
            flat[e] = c * width + np.arange(len(e))
        return flat

    @cached_property
    def var_incidence(self) -> np.ndarray:
        """(n_edges, n_vars) 0/1 matrix summing edge messages into variables."""
        inc = np.zeros((self.n_edges, self.n_vars))
        inc[np.arange(self.n_edges), self.edge_var] = 1.0
        return inc

    def to_matrix(self) -> np.ndarray:
        H = np.zeros((self.n_checks, self.n_vars), dtype=np.uint8)
        H[self.edge_check, self.edge_var] = 1
        return H


# --------------------------------------------------------------------------
# linear codes


class LinearCode:
    """Binary linear code C(n, k) given by a parity-check matrix.

    H may contain redundant rows when built with ``allow_redundant=True``;
    they are kept for decoding and ignored when deriving G.
    """

    def __init__(self, H: ParityCheckMatrix | np.ndarray, name: str = "code"):
        if not isinstance(H, ParityCheckMatrix):
            H = ParityCheckMatrix(H)
        self.H = H
        self.name = name
        basis = H.bits if H.rank == H.rows else H.bits[gf2.independent_rows(H.bits)]
        self.G, self.info_positions = generator_from_parity(basis)
        self.n = H.cols
        self.k = self.G.shape[0]
        if not 0 < self.k < self.n:
            raise CodeError(f"invalid dimensions n={self.n}, k={self.k}")
        self.G.setflags(write=False)

    @property
    def rate(self) -> float:
        return self.k / self.n

    @cached_property
    def graph(self) -> TannerGraph:
        return TannerGraph.from_matrix(self.H)

    def encode(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.uint8)
        if b.shape[-1] != self.k:
            raise CodeError(f"message length {b.shape[-1]} != k={self.k}")
        return gf2.matmul(b, self.G)

    def syndrome(self, c_hat: np.ndarray) -> np.ndarray:
        c_hat = np.asarray(c_hat, dtype=np.uint8)
        if c_hat.shape[-1] != self.n:
            raise CodeError(f"word length {c_hat.shape[-1]} != n={self.n}")
        return gf2.matmul(c_hat, self.H.bits.T)

    def extract_message(self, c_hat: np.ndarray) -> np.ndarray:
        return np.asarray(c_hat)[..., self.info_positions]

    def info(self) -> dict:
        col = self.H.bits.sum(axis=0)
        row = self.H.bits.sum(axis=1)
        hist = lambda d: {int(v): int(c) for v, c in zip(*np.unique(d, return_counts=True))}
        return {
            "name": self.name,
            "n": self.n,
            "k": self.k,
            "rate": self.rate,
            "parity_rows": self.H.rows,
            "edges": self.graph.n_edges,
            "row_degrees": hist(row),
            "column_degrees": hist(col),
        }

    def __repr__(self):
        return f"LinearCode({self.name!r}, n={self.n}, k={self.k})"


def enumerate_codewords(code: LinearCode, cap: int = 1 << 16, count: int | None = None,
                        rng: np.random.Generator | None = None) -> Iterator[np.ndarray]:
    """Yield codewords: all 2^k of them when 2^k <= cap, else ``count`` random ones."""
    if code.k <= math.log2(cap):
        for chunk in _message_chunks(code.k):
            yield from code.encode(chunk)
        return
    rng = rng if rng is not None else np.random.default_rng()
    count = cap if count is None else count
    left = count
    while left > 0:
        m = min(left, 4096)
        yield from code.encode(rng.integers(0, 2, size=(m, code.k), dtype=np.uint8))
        left -= m


def _message_chunks(k: int, chunk: int = 1 << 14) -> Iterator[np.ndarray]:
    total = 1 << k
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        ints = np.arange(start, min(total, start + chunk), dtype=np.int64)
        yield ((ints[:, None] >> shifts) & 1).astype(np.uint8)


def all_messages(k: int) -> np.ndarray:
    return np.concatenate(list(_message_chunks(k)))


# --------------------------------------------------------------------------
# polar codes


@dataclass(frozen=True, eq=False)
class PolarCode:
    """Polar code of length N = 2^t with the bit-natural kernel F^{(x)t}, F = [[1,0],[1,1]]."""

    N: int
    frozen: np.ndarray
    name: str = "polar"
    info_set: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.N < 2 or self.N & (self.N - 1):
            raise CodeError(f"polar block length must be a power of two, got {self.N}")
        frozen = np.unique(np.asarray(self.frozen, dtype=np.int64))
        if frozen.size != len(self.frozen):
            raise CodeError("frozen set contains duplicates")
        if frozen.size and (frozen[0] < 0 or frozen[-1] >= self.N):
            raise CodeError("frozen index out of range")
        mask = np.ones(self.N, dtype=bool)
        mask[frozen] = False
        object.__setattr__(self, "frozen", frozen)
        object.__setattr__(self, "info_set", np.flatnonzero(mask))
        if not 0 < self.info_set.size < self.N:
            raise CodeError("polar code needs 0 < k < N")

    @property
    def n(self) -> int:
        return self.N

    @property
    def k(self) -> int:
        return int(self.info_set.size)

    @property
    def rate(self) -> float:
        return self.k / self.N

    @cached_property
    def frozen_mask(self) -> np.ndarray:
        m = np.zeros(self.N, dtype=bool)
        m[self.frozen] = True
        return m

    def encode(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.uint8)
        if b.shape[-1] != self.k:
            raise CodeError(f"message length {b.shape[-1]} != k={self.k}")
        u = np.zeros(b.shape[:-1] + (self.N,), dtype=np.uint8)
        u[..., self.info_set] = b
        return polar_transform(u)

    def extract_message(self, u_hat: np.ndarray) -> np.ndarray:
        return np.asarray(u_hat)[..., self.info_set]

    def as_linear_code(self) -> LinearCode:
        """Same code as a LinearCode; H rows are the frozen columns of F^{(x)t}."""
        F = polar_transform(np.eye(self.N, dtype=np.uint8))
        return LinearCode(F[:, self.frozen].T.copy(), name=self.name)

    @classmethod
    def from_frozen_file(cls, path: str | Path, N: int, name: str = "polar") -> "PolarCode":
        idx = [int(tok) for tok in Path(path).read_text().split()]
        return cls(N, np.array(idx, dtype=np.int64), name=name)

    @classmethod
    def bhattacharyya(cls, N: int, k: int, design_ebn0_db: float, name: str = "polar") -> "PolarCode":
        """Freeze the N-k positions with the largest Bhattacharyya parameters.

        The channel parameter is exp(-R*Eb/N0) for BPSK over AWGN.  Ties go to
        the lower index.
        """
        z = bhattacharyya_parameters(N, math.exp(-(k / N) * 10 ** (design_ebn0_db / 10)))
        order = np.lexsort((np.arange(N), -z))
        return cls(N, np.sort(order[: N - k]), name=name)

    def info(self) -> dict:
        return {"name": self.name, "n": self.N, "k": self.k, "rate": self.rate,
                "frozen": self.frozen.tolist()}


def polar_transform(u: np.ndarray) -> np.ndarray:
    """x = u F^{(x)t} over GF(2), bit-natural order, along the last axis."""
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    lead = x.shape[:-1]
    h = 1
    while h < N:
        v = x.reshape(lead + (N // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


def bhattacharyya_parameters(N: int, z0: float) -> np.ndarray:
    """Bhattacharyya parameters of the N synthetic channels in natural order.

    The first half of the indices sees the degraded combination 2z - z^2, the
    second half the upgraded z^2, recursively.
    """
    if N == 1:
        return np.array([z0])
    return np.concatenate([bhattacharyya_parameters(N // 2, 2 * z0 - z0 * z0),
                           bhattacharyya_parameters(N // 2, z0 * z0)])


# --------------------------------------------------------------------------
# bundled code files


def _data_dir():
    return resources.files("transcoder") / "data"


def available_codes() -> dict:
    return json.loads((_data_dir() / "codes.json").read_text())


def load_code(name: str) -> LinearCode | PolarCode:
    """Load a bundled code by name (see ``codes.json``), or an alist / frozen-set path."""
    registry = available_codes()
    if name in registry:
        entry = registry[name]
        path = _data_dir() / entry["file"]
        if entry["kind"] == "polar":
            idx = [int(tok) for tok in path.read_text().split()]
            return PolarCode(entry["n"], np.array(idx, dtype=np.int64), name=name)
        H = parse_alist(path.read_text(), allow_redundant=entry.get("redundant_rows", False))
        return LinearCode(H, name=name)
    p = Path(name)
    if p.suffix == ".alist" and p.exists():
        return LinearCode(load_alist(p, allow_redundant=True), name=p.stem)
    raise CodeError(f"unknown code {name!r}; bundled codes: {', '.join(sorted(registry))}")


def brute_force_codebook(code: LinearCode | PolarCode) -> np.ndarray:
    """All 2^k codewords, rows ordered by message integer (MSB first)."""
    if code.k > 20:
        raise CodeError("codebook too large for enumeration")
    return code.encode(all_messages(code.k))


def hamming_weights(words: np.ndarray) -> np.ndarray:
    return np.asarray(words, dtype=np.int64).sum(axis=-1)


def pairwise_hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return hamming_weights(np.asarray(a) ^ np.asarray(b))


__all__ = [
    "AlistError", "CodeError", "LinearCode", "ParityCheckMatrix", "PolarCode", "TannerGraph",
    "all_messages", "available_codes", "brute_force_codebook", "enumerate_codewords",
    "format_alist", "generator_from_parity", "load_alist", "load_code", "parse_alist",
    "polar_transform", "bhattacharyya_parameters",
]
