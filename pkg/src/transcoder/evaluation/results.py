"""CSV persistence for evaluation records, plus a JSON sidecar with the run configuration."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .montecarlo import EvalRecord

COLUMNS = ["pipeline", "code", "ebn0_db", "frames", "bit_errors", "block_errors", "ber", "bler",
           "minus_ln_bler", "seed", "wall_time_s"]


class ResultsError(ValueError):
    pass


def sidecar_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_results(records: list[EvalRecord], path: str | Path, config: dict | None = None) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([r.pipeline, r.code, repr(r.ebn0_db), r.frames, r.bit_errors, r.block_errors,
                        repr(r.ber), repr(r.bler), repr(r.minus_ln_bler), r.seed, f"{r.wall_time_s:.3f}"])
    side = {"config": config or {}, "k": {r.code: r.k for r in records}}
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def read_results(path: str | Path) -> list[EvalRecord]:
    path = Path(path)
    ks = {}
    if sidecar_path(path).exists():
        ks = json.loads(sidecar_path(path).read_text()).get("k", {})
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise ResultsError(f"{path}: missing column(s) {', '.join(missing)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = EvalRecord(row["pipeline"], row["code"], float(row["ebn0_db"]), int(row["frames"]),
                                 int(row["bit_errors"]), int(row["block_errors"]), int(row["seed"]),
                                 float(row["wall_time_s"]), int(ks.get(row["code"], 1)))
            except (TypeError, ValueError) as e:
                raise ResultsError(f"{path}:{lineno}: {e}") from None
            stored = float(row["minus_ln_bler"])
            if not (math.isinf(stored) and math.isinf(rec.minus_ln_bler)) and abs(stored - rec.minus_ln_bler) > 1e-9:
                raise ResultsError(f"{path}:{lineno}: minus_ln_bler inconsistent with counts")
            out.append(rec)
    return out
