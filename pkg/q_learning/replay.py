from collections import deque

import numpy as np

from utils import constant


class ReplayBuffer:
    """
    Fixed-capacity FIFO of transitions with seeded uniform sampling.
    """

    def __init__(self, capacity=constant.BUFFER_CAPACITY, seed=0):
        self.capacity = capacity
        self.buffer = deque(maxlen=capacity)
        self.rng = np.random.default_rng(seed)

    def push(self, transition):
        self.buffer.append(transition)

    def sample(self, batch_size):
        idx = self.rng.choice(len(self.buffer), size=min(batch_size, len(self.buffer)), replace=False)
        return [self.buffer[int(i)] for i in idx]

    def __len__(self):
        return len(self.buffer)

    def __iter__(self):
        return iter(self.buffer)
