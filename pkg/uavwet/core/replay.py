from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Batch:
    o: np.ndarray        # B x U x M
    a: np.ndarray        # B x U x 3, squashed actions in [-1, 1]
    r: np.ndarray        # B x U
    o2: np.ndarray       # B x U x M
    z: np.ndarray        # B x U x U
    z2: np.ndarray       # B x U x U
    done: np.ndarray     # B

    def __len__(self):
        return self.o.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring of joint transitions; oldest evicted first."""

    def __init__(self, capacity: int, n_uavs: int, obs_dim: int, rng: np.random.Generator, action_dim: int = 3):
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.rng = rng
        self.o = np.zeros((capacity, n_uavs, obs_dim))
        self.a = np.zeros((capacity, n_uavs, action_dim))
        self.r = np.zeros((capacity, n_uavs))
        self.o2 = np.zeros((capacity, n_uavs, obs_dim))
        self.z = np.zeros((capacity, n_uavs, n_uavs))
        self.z2 = np.zeros((capacity, n_uavs, n_uavs))
        self.done = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, o, a, r, o2, z, z2, done: bool) -> None:
        j = self._next
        self.o[j], self.a[j], self.r[j] = o, a, r
        self.o2[j], self.z[j], self.z2[j] = o2, z, z2
        self.done[j] = float(done)
        self._next = (j + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if self._size == 0:
            raise ValueError("sampling from an empty buffer")
        return self.rng.integers(0, self._size, size=batch_size)

    def sample(self, batch_size: int) -> Batch:
        idx = self.sample_indices(batch_size)
        return Batch(o=self.o[idx], a=self.a[idx], r=self.r[idx], o2=self.o2[idx],
                     z=self.z[idx], z2=self.z2[idx], done=self.done[idx])
