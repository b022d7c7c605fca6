"""Random inputs shared by the unit and acceptance suites."""

from __future__ import annotations

import numpy as np
from oracles import recount_vote

from wound_ensemble.labels import MASTER_ORDER
from wound_ensemble.scorer import ClassScores
from wound_ensemble.slidewin import PatchVerdict

MASTER = [c.code for c in MASTER_ORDER]


def random_verdicts(rng, space, n=9, steps=16, skin_only_rate=0.2):
    """Nine verdicts with dyadic scores (exact in binary, so ties are real ties).

    A fraction of the sets has every top score on BG or N, which exercises the fallback.
    """
    skin_only = rng.random() < skin_only_rate
    out = []
    for i in range(n):
        cuts = np.sort(rng.integers(0, steps + 1, len(space) - 1))
        parts = np.diff(np.r_[0, cuts, steps]) / steps
        if skin_only:  # move the top score onto BG or N
            j, k = int(np.argmax(parts)), len(space) - 1 - int(rng.integers(0, 2))
            parts[j], parts[k] = parts[k], parts[j]
        s = ClassScores(parts, space)
        out.append(PatchVerdict(i, s, not s.top_label.non_wound))
    return out


def recount(verdicts, task):
    rows = [(v.scores.as_dict(), v.scores.label_space.codes[int(np.argmax(v.scores.scores))], v.is_wound)
            for v in verdicts]
    return recount_vote(rows, task.codes, MASTER)
