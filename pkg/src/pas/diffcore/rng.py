import numpy as np


class Rng:
    """Seeded random stream that can be split into independent children."""

    def __init__(self, seed=0, _seq=None):
        self.seed = int(seed)
        self._seq = np.random.SeedSequence(self.seed) if _seq is None else _seq
        self.gen = np.random.default_rng(self._seq)

    def split(self, n):
        """``n`` child streams; draws from one never perturb another."""
        return [Rng(self.seed, _seq=s) for s in self._seq.spawn(n)]

    def uniform(self, size=None):
        return self.gen.uniform(size=size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def normal(self, size=None):
        return self.gen.normal(size=size)


def gumbel_from_uniform(u):
    u = np.clip(np.asarray(u, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    return -np.log(-np.log(u))


def gumbel_noise(rng, count):
    """``count`` standard Gumbel samples ``-log(-log u)``."""
    return gumbel_from_uniform(rng.uniform(size=count))
