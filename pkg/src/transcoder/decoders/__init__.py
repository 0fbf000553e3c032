from .bp import BpConfig, DecoderError, bp_decode, hard_decision
from .polar import SclConfig, f_exact, f_minsum, sc_decode, scl_decode, soft_sc_decode, stage_targets

__all__ = [
    "BpConfig", "DecoderError", "SclConfig", "bp_decode", "f_exact", "f_minsum", "hard_decision",
    "sc_decode", "scl_decode", "soft_sc_decode", "stage_targets",
]
