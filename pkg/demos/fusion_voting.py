"""
Two voting rules for system fusion
==================================

Three systems disagree on a one-second region: the first hears A and B,
the others one speaker each. Both A and B collect two thirds of the vote.
"""

import numpy as np

from mcdiar.fusion import SystemWeights, doverlap_vote
from mcdiar.timeline import Diarization, write_rttm

systems = [
    Diarization.from_tuples("demo", [("A", 0, 1), ("B", 0, 1)]),
    Diarization.from_tuples("demo", [("A", 0, 1)]),
    Diarization.from_tuples("demo", [("B", 0, 1)]),
]
w = SystemWeights(np.full(3, 1 / 3))

# rounding the summed support keeps round(4/3) = 1 speaker
print(write_rttm([doverlap_vote(systems, w, "original")]))

# a per-speaker majority keeps both
print(write_rttm([doverlap_vote(systems, w, "modified")]))
