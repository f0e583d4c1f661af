"""Deterministic per-cell random streams."""

from __future__ import annotations

import numpy as np

STAGES = {"tree": 0, "labels": 1, "pairs": 2, "continuum": 3, "bootstrap": 4}


def rng_for(master: int, n: int = 0, rep: int = 0, stage: str | int = "tree") -> np.random.Generator:
    """Independent generator keyed by ``(master, n, rep, stage)``.

    The key goes into ``SeedSequence.spawn_key`` so streams for distinct cells
    never overlap, whatever order the cells run in.
    """
    s = STAGES[stage] if isinstance(stage, str) else int(stage)
    ss = np.random.SeedSequence(int(master), spawn_key=(int(n), int(rep), s))
    return np.random.default_rng(ss)
