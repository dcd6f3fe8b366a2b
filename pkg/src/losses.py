# src/losses.py
"""Activaciones de salida, pérdidas y la F1 ponderada."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.metrics import precision_recall_fscore_support

from .config import BCE_EPSILON
from .errors import ValidationError, ShapeError

_SIGMOID_LOW = np.finfo(np.float64).tiny
_SIGMOID_HIGH = 1.0 - np.finfo(np.float64).epsneg


@dataclass
class PredictionBatch:
    """Pseudo-probabilidades ã por atributo (o por clase en la cabeza softmax) y, opcionalmente, las clases decodificadas."""
    scores: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.scores.ndim != 2 or self.scores.shape[0] < 1:
            raise ShapeError(f"scores debe tener forma [B, n] con B >= 1, recibido {self.scores.shape}")


@dataclass(frozen=True)
class ClassCounts:
    """Muestras por clase en las etiquetas verdaderas; pesos de la F1 ponderada."""
    counts: tuple
    total: int

    @classmethod
    def from_labels(cls, labels, K):
        counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=K)
        return cls(tuple(int(c) for c in counts), int(counts.sum()))

    def weights(self):
        return np.asarray(self.counts, dtype=np.float64) / self.total


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(x)
    out = np.empty_like(flat)
    pos = flat >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ex = np.exp(flat[~pos])
    out[~pos] = ex / (1.0 + ex)
    # satura dentro del intervalo abierto (0,1)
    return np.clip(out, _SIGMOID_LOW, _SIGMOID_HIGH).reshape(x.shape)


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _check_binary(a):
    if not np.all((a == 0) | (a == 1)):
        raise ValidationError("El objetivo de la entropía cruzada binaria debe ser 0/1")


def bce_loss(target, predicted, eps=BCE_EPSILON):
    """Entropía cruzada binaria media sobre los n atributos. Con lotes [B, n] devuelve la media del lote."""
    a = np.asarray(target, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape:
        raise ShapeError(f"Objetivo {a.shape} y predicción {p.shape} no coinciden")
    _check_binary(a)
    p = np.clip(p, eps, 1.0 - eps)
    per_element = a * np.log(p) + (1.0 - a) * np.log(1.0 - p)
    return float(-np.mean(per_element))


def bce_gradient(target, predicted):
    """Gradiente de la BCE media respecto a la preactivación de la sigmoide."""
    a = np.asarray(target, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    return (p - a) / a.size


def cross_entropy_loss(labels, probs, eps=BCE_EPSILON):
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    picked = np.clip(probs[np.arange(len(labels)), labels], eps, 1.0)
    return float(-np.mean(np.log(picked)))


def cross_entropy_gradient(labels, probs):
    labels = np.asarray(labels, dtype=np.int64)
    grad = np.array(probs, dtype=np.float64, copy=True)
    grad[np.arange(len(labels)), labels] -= 1.0
    return grad / len(labels)


def _check_labels(predicted, truth, K):
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ShapeError("Predicciones y etiquetas deben ser listas de igual longitud")
    if truth.size == 0:
        raise ValidationError("No se puede evaluar una lista vacía de etiquetas")
    for name, arr in (("predicción", predicted), ("etiqueta", truth)):
        if arr.min() < 0 or arr.max() >= K:
            raise ValidationError(f"{name} fuera de rango [0, {K})")
    return predicted, truth


def per_class_precision_recall(predicted, truth, K):
    predicted, truth = _check_labels(predicted, truth, K)
    prec, rec, _, _ = precision_recall_fscore_support(
        truth, predicted, labels=list(range(K)), average=None, zero_division=0)
    return np.asarray(prec, dtype=np.float64), np.asarray(rec, dtype=np.float64)


def weighted_f1(predicted, truth, K):
    """F1 ponderada por la proporción de cada clase en las etiquetas verdaderas."""
    predicted, truth = _check_labels(predicted, truth, K)
    _, _, f1, _ = precision_recall_fscore_support(
        truth, predicted, labels=list(range(K)), average=None, zero_division=0)
    weights = ClassCounts.from_labels(truth, K).weights()
    return float(np.clip(np.sum(weights * f1), 0.0, 1.0))
