#!/usr/bin/env python3
"""Regenerate the parity-check / frozen-set files bundled in src/transcoder/data.

The original code database files are not redistributed here, so each code is
rebuilt from a deterministic construction with the same (n, k) and, where the
edge count is published, the same number of Tanner-graph edges:

  hamming_7_4   standard Hamming H (columns = binary 1..7)
  spc_3_2       single parity check
  rep_2_1       repetition code [1 1]
  bch_31_16     narrow-sense primitive BCH, t = 3, primitive polynomial x^5+x^2+1
  ldpc_49_24    array code p=7, j=4: 28 checks of rank 25 (196 edges)
  ldpc_121_*    array codes p=11, j=6/5/4: k = 60/70/80 (726 edges for k=60)
  ldpc_384_320  PEG, 128 columns of degree 4 and 256 of degree 3 (1280 edges)
  polar_*       Bhattacharyya construction at design Eb/N0 = 4 dB

Usage: python tools/make_codes.py [--out src/transcoder/data]
"""
import argparse
import json
from collections import deque
from pathlib import Path

import numpy as np

from transcoder import gf2
from transcoder.codes import PolarCode, format_alist


def hamming_7_4():
    return np.array([[(j >> (2 - i)) & 1 for j in range(1, 8)] for i in range(3)], dtype=np.uint8)


def _gf32_tables(prim=0b100101):
    exp = [0] * 62
    x = 1
    for i in range(31):
        exp[i] = exp[i + 31] = x
        x <<= 1
        if x & 0b100000:
            x ^= prim
    return exp


def _poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] ^= bj
    return out


def _minimal_poly(power, exp):
    """Minimal polynomial over GF(2) of alpha^power (coefficients low -> high)."""
    conj = []
    e = power % 31
    while e not in conj:
        conj.append(e)
        e = (2 * e) % 31
    log = {exp[i]: i for i in range(31)}

    def gmul(a, b):
        if a == 0 or b == 0:
            return 0
        return exp[log[a] + log[b]]

    poly = [1]
    for c in conj:
        root = exp[c]
        nxt = [0] * (len(poly) + 1)
        for i, p in enumerate(poly):
            nxt[i + 1] ^= p
            nxt[i] ^= gmul(p, root)
        poly = nxt
    assert all(v in (0, 1) for v in poly)
    return poly


def bch_31_16():
    exp = _gf32_tables()
    g = [1]
    for power in (1, 3, 5):
        g = _poly_mul(g, _minimal_poly(power, exp))
    n, k = 31, 31 - (len(g) - 1)
    assert k == 16, k
    G = np.zeros((k, n), dtype=np.uint8)
    for i in range(k):
        G[i, i : i + len(g)] = g
    H, _ = gf2.nullspace(G)
    return H


def peg(n_checks, col_degrees, seed):
    """Progressive edge growth: connect each new edge to a check farthest from the variable."""
    rng = np.random.default_rng(seed)
    n = len(col_degrees)
    var_adj = [[] for _ in range(n)]
    chk_adj = [[] for _ in range(n_checks)]
    order = np.argsort(col_degrees, kind="stable")
    for v in order:
        for t in range(col_degrees[v]):
            if t == 0:
                cands = list(range(n_checks))
            else:
                depth = {}
                seen_v = {v}
                frontier = deque([(v, 0)])
                for c in var_adj[v]:
                    depth[c] = 0
                while frontier:
                    u, d = frontier.popleft()
                    for c in var_adj[u]:
                        depth.setdefault(c, d)
                        for w in chk_adj[c]:
                            if w not in seen_v:
                                seen_v.add(w)
                                frontier.append((w, d + 1))
                unreached = [c for c in range(n_checks) if c not in depth]
                if unreached:
                    cands = unreached
                else:
                    far = max(depth.values())
                    cands = [c for c, d in depth.items() if d == far and c not in var_adj[v]]
            degs = np.array([len(chk_adj[c]) for c in cands])
            best = [c for c, d in zip(cands, degs) if d == degs.min()]
            c = best[rng.integers(len(best))]
            var_adj[v].append(c)
            chk_adj[c].append(v)
    H = np.zeros((n_checks, n), dtype=np.uint8)
    for v, cs in enumerate(var_adj):
        H[cs, v] = 1
    return H


def array_code(p, j):
    """Array LDPC code: j x p grid of p x p circulants, block (r, c) = P^(r*c)."""
    P = np.roll(np.eye(p, dtype=np.uint8), 1, axis=1)
    blocks = [[np.linalg.matrix_power(P, (r * c) % p) for c in range(p)] for r in range(j)]
    return np.block(blocks).astype(np.uint8)


def girth_ok(H):
    overlap = H.T.astype(np.int64) @ H
    np.fill_diagonal(overlap, 0)
    return overlap.max() <= 1


def full_rank_peg(n_checks, col_degrees, seed=0):
    while True:
        H = peg(n_checks, col_degrees, seed)
        if gf2.rank(H) == n_checks and H.sum(axis=1).min() > 0:
            return H, seed
        seed += 1


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/transcoder/data"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    registry = {}

    def save_alist(name, H, construction, redundant=False):
        (out / f"{name}.alist").write_text(format_alist(H))
        registry[name] = {"kind": "alist", "file": f"{name}.alist", "n": int(H.shape[1]),
                          "k": int(H.shape[1] - gf2.rank(H)), "parity_rows": int(H.shape[0]),
                          "edges": int(H.sum()), "redundant_rows": redundant,
                          "construction": construction}

    save_alist("hamming_7_4", hamming_7_4(), "Hamming H, column j is the binary expansion of j (MSB first)")
    save_alist("spc_3_2", np.ones((1, 3), dtype=np.uint8), "single parity check")
    save_alist("rep_2_1", np.ones((1, 2), dtype=np.uint8), "repetition code")
    save_alist("bch_31_16", bch_31_16(), "primitive BCH t=3 over GF(32), x^5+x^2+1; H = null space of cyclic G")

    for name, p, j in [("ldpc_49_24", 7, 4), ("ldpc_121_60", 11, 6), ("ldpc_121_70", 11, 5),
                       ("ldpc_121_80", 11, 4)]:
        H = array_code(p, j)
        save_alist(name, H, f"array code p={p}, j={j} ({j * p} checks, rank {j * p - j + 1}), "
                            f"4-cycle free: {girth_ok(H)}", redundant=True)

    H, seed = full_rank_peg(64, [4] * 128 + [3] * 256, seed=0)
    save_alist("ldpc_384_320", H, f"PEG, 128 columns degree 4 + 256 degree 3, seed {seed}, "
                                  f"4-cycle free: {girth_ok(H)}")

    for N, k in [(8, 3), (8, 4), (16, 8), (128, 64), (128, 86), (128, 96), (512, 256)]:
        code = PolarCode.bhattacharyya(N, k, 4.0)
        name = f"polar_{N}_{k}"
        (out / f"{name}.frozen").write_text("\n".join(map(str, code.frozen.tolist())) + "\n")
        registry[name] = {"kind": "polar", "file": f"{name}.frozen", "n": N, "k": k,
                          "construction": "Bhattacharyya ranking, design Eb/N0 4 dB, natural order"}

    (out / "codes.json").write_text(json.dumps(registry, indent=2) + "\n")
    for name, e in registry.items():
        print(f"{name:14s} n={e['n']:4d} k={e['k']:4d} edges={e.get('edges', '-')}  {e['construction']}")


if __name__ == "__main__":
    main()
