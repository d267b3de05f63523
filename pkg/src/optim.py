import numpy as np


class Adam:
    """Adam over a dict of named arrays.

    Moments are kept in float64; updated parameters are written back in the
    dtype they arrived with.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t

        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros(g.shape)
                self.v[name] = np.zeros(g.shape)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            current = params[name]
            updated = current.astype(np.float64) - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
            params[name] = updated.astype(current.dtype)
