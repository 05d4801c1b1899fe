"""CSV emission.  Every file starts with a ``#`` provenance line carrying the
config hash and seeds; floats are written with 17 significant digits so
reruns can be compared byte for byte."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def provenance(config_hash: str, seeds: dict[str, int]) -> str:
    seed_s = ",".join(f"{k}:{v}" for k, v in seeds.items())
    return f"# config_hash={config_hash} seeds={seed_s}"


def write_csv(
    path: str | Path, header: Sequence[str], rows: Iterable[Sequence], comment: str,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[str, list[dict[str, str]]]:
    """Return the provenance line and the data rows as dicts."""
    with Path(path).open() as fh:
        comment = fh.readline().rstrip("\n")
        return comment, list(csv.DictReader(fh))
