from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class AgentAction:
    V: float                # m/s, in [0, V_max]
    phi: float              # rad, in [0, 2*pi)
    C: int                  # 1 = broadcast energy this slot
    # policy-space action in [-1, 1]^3 the trainer stores in replay
    squashed: Optional[np.ndarray] = None

    def __repr__(self):
        return f"AgentAction(V={self.V:.3f}, phi={self.phi:.3f}, C={self.C})"

    @classmethod
    def from_squashed(cls, a: np.ndarray, v_max: float) -> "AgentAction":
        a = np.asarray(a, dtype=float)
        V = float(np.clip(0.5 * (a[0] + 1.0) * v_max, 0.0, v_max))
        phi = float(np.mod(np.pi * (a[1] + 1.0), 2.0 * np.pi))
        C = int(a[2] >= 0.0)
        return cls(V=V, phi=phi, C=C, squashed=a.copy())
