import numpy as np


class Adam:
    """Adam with bias correction over a dict of tensors.

    Parameters whose ``grad`` is None on a given step are left untouched and
    keep their moment estimates.
    """

    def __init__(self, params, lr=0.005, betas=(0.9, 0.999), eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, grads=None):
        """Apply one update; ``grads`` overrides the tensors' own ``.grad``."""
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for key, p in self.params.items():
            g = p.grad if grads is None else grads.get(key)
            if g is None:
                continue
            g = np.asarray(g, dtype=np.float64)
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter "
                                 f"{key!r} of shape {p.data.shape}")
            m = self.m.get(key)
            if m is None:
                m = self.m[key] = np.zeros_like(p.data)
                self.v[key] = np.zeros_like(p.data)
            v = self.v[key]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** t)
            vhat = v / (1 - b2 ** t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
