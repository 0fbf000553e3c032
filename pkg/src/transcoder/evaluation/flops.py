"""Closed-form multiplication/addition counts for decoders and TransCoder modules.

Conventions:
  BP          one operation per Tanner-graph edge per iteration
  TransCoder  one S2S layer: 12 n_b d^2 + n_b^2 d + 2 n_b^2
              feature extraction + embedding: 12 n_b d^2 + 3 m n_b d
              encoder = 2 layers + FE, decoder = 3 layers + FE
  CrossMPT    layer (11 n + 13 n_pc) d^2 + 4 n_pc n (d + h), embedding n (n + n_pc)
  ECCT        layer 12 (n + n_pc) d^2 + 2 (n + n_pc)^2 (d + h), embedding (n + n_pc)^2
              both decoders = 6 layers + embedding

n_pc is the number of rows of the parity-check matrix in use.
"""
from __future__ import annotations

import math
import re

UNITS = {"": 1, "k": 10**3, "M": 10**6, "G": 10**9}


def bp_flops(edges: int, iterations: int = 1) -> int:
    return edges * iterations


def transcoder_layer(n_b: int, d: int) -> int:
    return 12 * n_b * d * d + n_b * n_b * d + 2 * n_b * n_b


def transcoder_embedding(n_b: int, d: int, m: int) -> int:
    return 12 * n_b * d * d + 3 * m * n_b * d


def transcoder_module(n: int, m: int, d: int = 16, layers: int = 2) -> int:
    n_b = -(-n // m)
    return layers * transcoder_layer(n_b, d) + transcoder_embedding(n_b, d, m)


def crossmpt_layer(n: int, n_pc: int, d: int = 128, h: int = 8) -> int:
    return (11 * n + 13 * n_pc) * d * d + 4 * n_pc * n * (d + h)


def crossmpt_embedding(n: int, n_pc: int) -> int:
    return n * (n + n_pc)


def ecct_layer(n: int, n_pc: int, d: int = 128, h: int = 8) -> int:
    return 12 * (n + n_pc) * d * d + 2 * (n + n_pc) ** 2 * (d + h)


def ecct_embedding(n: int, n_pc: int) -> int:
    return (n + n_pc) ** 2


def crossmpt_decoder(n: int, n_pc: int, d: int = 128, h: int = 8, layers: int = 6) -> int:
    return layers * crossmpt_layer(n, n_pc, d, h) + crossmpt_embedding(n, n_pc)


def ecct_decoder(n: int, n_pc: int, d: int = 128, h: int = 8, layers: int = 6) -> int:
    return layers * ecct_layer(n, n_pc, d, h) + ecct_embedding(n, n_pc)


def flop_table(n: int, n_pc: int, edges: int, m: int, bp_iters: int = 50, d: int = 16,
               d_cm: int = 128, h: int = 8) -> dict[str, int]:
    """Every row of the complexity comparison for one code."""
    n_b = -(-n // m)
    return {
        "bp_edges": edges,
        "bp_total": bp_flops(edges, bp_iters),
        "transcoder_layer": transcoder_layer(n_b, d),
        "transcoder_embedding": transcoder_embedding(n_b, d, m),
        "transcoder_encoder": transcoder_module(n, m, d, 2),
        "transcoder_decoder": transcoder_module(n, m, d, 3),
        "crossmpt_layer": crossmpt_layer(n, n_pc, d_cm, h),
        "crossmpt_embedding": crossmpt_embedding(n, n_pc),
        "crossmpt_decoder": crossmpt_decoder(n, n_pc, d_cm, h),
        "ecct_layer": ecct_layer(n, n_pc, d_cm, h),
        "ecct_embedding": ecct_embedding(n, n_pc),
        "ecct_decoder": ecct_decoder(n, n_pc, d_cm, h),
    }


def parse_display(text: str) -> tuple[float, float]:
    """'1.2M' -> (1.2e6, 1e5): the value and one unit of its last displayed digit."""
    m = re.fullmatch(r"\s*(\d+)(?:\.(\d+))?\s*([kMG]?)\s*", text)
    if not m:
        raise ValueError(f"cannot parse displayed count {text!r}")
    whole, frac, unit = m.groups()
    scale = UNITS[unit]
    decimals = len(frac) if frac else 0
    value = float(f"{whole}.{frac}" if frac else whole) * scale
    return value, scale / 10**decimals


def matches_display(exact: int, text: str) -> bool:
    """True when ``exact`` lies within one last-digit unit of the displayed number."""
    value, ulp = parse_display(text)
    return abs(exact - value) < ulp


def format_count(x: int) -> str:
    """Three significant figures with a k/M/G suffix (for display only)."""
    if x < 1000:
        return str(x)
    exp = min(3, int(math.log10(x)) // 3)
    unit = "kMG"[exp - 1]
    v = x / 1000**exp
    return f"{v:.3g}{unit}"
