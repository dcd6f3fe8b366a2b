# src/rng.py
"""Generadores aleatorios reproducibles.

Todas las fuentes de aleatoriedad derivan de una semilla entera y una ruta de claves
(por ejemplo ``(seed, "init")`` o ``(seed, generation, "mutate")``) usando
``numpy.random.SeedSequence`` y el algoritmo PCG64, que produce las mismas
secuencias en cualquier plataforma.
"""
import zlib
from dataclasses import dataclass, field

import numpy as np

ALGORITHM = "PCG64"


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"Las claves de semilla deben ser no negativas: {key}")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


@dataclass
class RngState:
    """Semilla + ruta de claves + generador. ``draws`` cuenta las llamadas hechas a través de la clase."""
    seed: int
    keys: tuple = ()
    algorithm: str = ALGORITHM
    draws: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        entropy = [int(self.seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) for k in self.keys]
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def child(self, *keys):
        return RngState(self.seed, self.keys + tuple(keys))

    def random(self, size=None):
        self.draws += 1
        return self.generator.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        self.draws += 1
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        self.draws += 1
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        self.draws += 1
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        self.draws += 1
        return self.generator.permutation(n)


def make_rng(seed, *keys):
    return RngState(int(seed), tuple(keys))
