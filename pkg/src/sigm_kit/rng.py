"""Counter-keyed random streams.

Every draw is keyed by ``(seed, replica, stage, iteration)``, so a replica's
stream does not depend on how replicas are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int = 0
    replica: int = 0
    stage: int = 0

    def generator(self, iteration: int) -> np.random.Generator:
        key = [int(self.seed), int(self.replica), int(self.stage), int(iteration)]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))

    def for_stage(self, stage: int) -> "RngStream":
        return RngStream(self.seed, self.replica, stage)
