# src/attributes.py
"""Matriz binaria de atributos A (K clases x n atributos): el genotipo de la evolución."""
import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .config import MUTATION_RETRIES, RANDOM_MATRIX_RETRIES
from .errors import DataError, MutationError, ValidationError

MUTATION_SCOPES = ("one-row", "all-rows")


def validate_matrix(bits):
    """Lista de violaciones de invariantes (vacía si la matriz es válida)."""
    bits = np.asarray(bits)
    problems = []
    if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
        return [f"forma inválida {bits.shape}"]
    if not np.all((bits == 0) | (bits == 1)):
        problems.append("entradas no binarias")
        return problems
    for k in np.flatnonzero(bits.sum(axis=1) == 0):
        problems.append(f"fila {k} toda a cero")
    seen = {}
    for k, row in enumerate(bits):
        key = row.tobytes()
        if key in seen:
            problems.append(f"filas {seen[key]} y {k} duplicadas")
        else:
            seen[key] = k
    return problems


@dataclass(frozen=True)
class AttributeMatrix:
    """Valor inmutable: las filas no pueden ser nulas ni repetirse."""
    bits: np.ndarray
    class_names: Optional[tuple] = None

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8, copy=True)
        problems = validate_matrix(bits)
        if problems:
            raise ValidationError("Matriz de atributos inválida: " + "; ".join(problems))
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)
        if self.class_names is not None:
            names = tuple(str(c) for c in self.class_names)
            if len(names) != bits.shape[0]:
                raise ValidationError("class_names no coincide con el número de filas")
            object.__setattr__(self, "class_names", names)

    @property
    def K(self):
        return self.bits.shape[0]

    @property
    def n(self):
        return self.bits.shape[1]

    def names(self):
        return list(self.class_names) if self.class_names else [str(k) for k in range(self.K)]

    def digest(self):
        h = hashlib.sha256()
        h.update(f"{self.K}x{self.n}".encode("ascii"))
        h.update(self.bits.tobytes())
        return h.hexdigest()[:16]

    def to_list(self):
        return self.bits.astype(int).tolist()

    def __eq__(self, other):
        return isinstance(other, AttributeMatrix) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())


@dataclass(frozen=True)
class MutationConfig:
    """``unchecked`` relaja la restricción 0 < p < 1 (sólo para pruebas del caso p=1)."""
    p: Optional[float] = None
    scope: str = "one-row"
    retries: int = MUTATION_RETRIES
    unchecked: bool = False

    def __post_init__(self):
        if self.scope not in MUTATION_SCOPES:
            raise ValidationError(f"Ámbito de mutación desconocido: {self.scope}")
        if self.p is not None:
            ok = 0.0 < self.p <= 1.0 if self.unchecked else 0.0 < self.p < 1.0
            if not ok:
                raise ValidationError(f"La probabilidad de mutación debe estar en (0,1), recibido {self.p}")
        if self.retries < 1:
            raise ValidationError("retries debe ser >= 1")

    def flip_probability(self, n):
        return self.p if self.p is not None else 1.0 / n


def min_attributes(K):
    # K filas distintas y no nulas necesitan 2^n - 1 >= K
    return max(1, math.ceil(math.log2(K + 1)))


def random_representation(K, n, rng, class_names=None):
    if K < 2:
        raise ValidationError(f"Se necesitan al menos 2 clases, recibido K={K}")
    if n < min_attributes(K):
        raise ValidationError(f"n={n} es demasiado pequeño para {K} filas distintas no nulas (mínimo {min_attributes(K)})")
    bits = (rng.random((K, n)) < 0.5).astype(np.uint8)
    for _ in range(RANDOM_MATRIX_RETRIES):
        bad = _offending_rows(bits)
        if not bad:
            return AttributeMatrix(bits, class_names)
        for k in bad:
            bits[k] = (rng.random(n) < 0.5).astype(np.uint8)
    raise ValidationError("No se pudo muestrear una matriz válida")


def _offending_rows(bits):
    bad, seen = [], set()
    for k, row in enumerate(bits):
        key = row.tobytes()
        if not row.any() or key in seen:
            bad.append(k)
        else:
            seen.add(key)
    return bad


def mutate(A: AttributeMatrix, cfg: MutationConfig, rng):
    """Mutación global: cada bit de la(s) fila(s) elegida(s) cambia con probabilidad p. No modifica A."""
    p = cfg.flip_probability(A.n)
    for attempt in range(cfg.retries):
        bits = np.array(A.bits, copy=True)
        if cfg.scope == "one-row":
            k = int(rng.integers(0, A.K))
            flips = rng.random(A.n) < p
            bits[k] ^= flips.astype(np.uint8)
        else:
            flips = rng.random((A.K, A.n)) < p
            bits ^= flips.astype(np.uint8)
        if not validate_matrix(bits):
            if attempt:
                logging.debug(f"Mutante válido tras {attempt + 1} intentos")
            return AttributeMatrix(bits, A.class_names)
    raise MutationError(f"Sin mutante válido tras {cfg.retries} intentos")


def cosine_distances(scores, A: AttributeMatrix):
    s = np.asarray(scores, dtype=np.float64)
    rows = A.bits.astype(np.float64)
    s2 = np.atleast_2d(s)
    norms = np.linalg.norm(s2, axis=1)
    if np.any(norms == 0):
        raise ValidationError("Vector de atributos nulo: la distancia coseno no está definida")
    sims = (s2 @ rows.T) / (norms[:, None] * np.linalg.norm(rows, axis=1)[None, :])
    return 1.0 - sims


def decode_nearest(scores, A: AttributeMatrix):
    """Clase con menor distancia coseno; los empates se resuelven por el índice más bajo."""
    return int(np.argmin(cosine_distances(scores, A)[0]))


def decode_batch(scores, A: AttributeMatrix):
    return np.argmin(cosine_distances(scores, A), axis=1).astype(np.int64)


def shared_attribute_count(A: AttributeMatrix, i, j):
    for idx in (i, j):
        if not 0 <= idx < A.K:
            raise ValidationError(f"Índice de clase {idx} fuera de rango [0, {A.K})")
    return int(np.sum(A.bits[i] & A.bits[j]))


def sharing_matrix(A):
    """Conteos AND entre todas las filas. Acepta también bits sin validar."""
    b = np.asarray(getattr(A, "bits", A)).astype(np.int64)
    return b @ b.T


def targets_for_batch(labels, A: AttributeMatrix):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= A.K):
        raise ValidationError(f"Etiqueta fuera de rango [0, {A.K})")
    return A.bits[labels].astype(np.float64).reshape(labels.size, A.n)


# --- Ficheros CSV ---

def save_attribute_csv(A: AttributeMatrix, path):
    df = pd.DataFrame(A.bits.astype(int), columns=[f"attr_{i}" for i in range(A.n)])
    df.insert(0, "class", A.names())
    df.to_csv(path, index=False, lineterminator="\n")


def read_attribute_table(path):
    """Lee el CSV sin validar invariantes (para que inspect pueda listar las violaciones)."""
    try:
        df = pd.read_csv(path, dtype={"class": str})
    except FileNotFoundError:
        raise DataError(f"No existe el fichero de atributos: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Fichero de atributos mal formado {path}: {e}")
    attr_cols = [c for c in df.columns if c != "class"]
    expected = [f"attr_{i}" for i in range(len(attr_cols))]
    if "class" not in df.columns or df.columns[0] != "class" or attr_cols != expected or not attr_cols:
        raise DataError(f"Cabecera inválida en {path}: se esperaba class,attr_0..attr_{{n-1}}")
    values = df[attr_cols].apply(pd.to_numeric, errors="coerce")
    if values.isna().any().any():
        raise DataError(f"Valores no numéricos en {path}")
    return values.to_numpy(), tuple(df["class"].astype(str))


def load_attribute_csv(path):
    bits, names = read_attribute_table(path)
    try:
        return AttributeMatrix(bits, names)
    except ValidationError as e:
        raise DataError(f"{path}: {e}")


# Representación aprendida para Opportunity-Locomotion con attrCNN (n=10).
LOCOMOTION_TABLE = AttributeMatrix(
    np.array([
        [1, 0, 0, 0, 0, 1, 0, 0, 1, 1],
        [0, 1, 1, 0, 1, 1, 1, 1, 1, 1],
        [0, 1, 0, 0, 0, 0, 0, 0, 1, 1],
        [0, 0, 0, 0, 1, 1, 0, 0, 1, 1],
        [1, 1, 1, 0, 1, 0, 0, 1, 1, 0],
    ]),
    ("Null", "Stand", "Walk", "Sit", "Lie"),
)
