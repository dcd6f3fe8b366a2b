# src/training.py
"""Entrenamiento por mini-lotes con RMSProp y evaluación con F1 ponderada."""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attributes import AttributeMatrix, decode_batch, targets_for_batch
from .config import (
    LEARNING_RATE, RMS_DECAY, RMS_EPSILON, NOISE_MU, NOISE_SIGMA, EVAL_BATCH_SIZE,
)
from .data import WindowedDataset, add_gaussian_noise
from .errors import ShapeError, ValidationError
from .losses import (
    bce_loss, bce_gradient, cross_entropy_loss, cross_entropy_gradient,
    per_class_precision_recall, weighted_f1,
)
from .network import Network
from .rng import make_rng


@dataclass
class TrainConfig:
    """``batch_size=None`` entrena con el conjunto completo en cada paso."""
    learning_rate: float = LEARNING_RATE
    rms_decay: float = RMS_DECAY
    rms_epsilon: float = RMS_EPSILON
    batch_size: Optional[int] = 100
    epochs: int = 1
    dropout: Optional[float] = None
    seed: int = 0
    shuffle: bool = True
    noise_mu: float = NOISE_MU
    noise_sigma: float = NOISE_SIGMA

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError("learning_rate debe ser >= 0")
        if not 0.0 < self.rms_decay < 1.0:
            raise ValidationError("rms_decay debe estar en (0,1)")
        if self.rms_epsilon <= 0:
            raise ValidationError("rms_epsilon debe ser > 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError("batch_size debe ser >= 1")
        if self.epochs < 1:
            raise ValidationError("epochs debe ser >= 1")
        if self.dropout is not None and not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout debe estar en [0,1)")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma debe ser >= 0")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class RmspropState:
    cache: dict
    epsilon: float = RMS_EPSILON
    steps: int = 0

    @classmethod
    def zeros_like(cls, params, epsilon=RMS_EPSILON):
        return cls({name: np.zeros_like(value) for name, value in params.items()}, epsilon)


def rmsprop_step(params, grads, state: RmspropState, cfg: TrainConfig):
    """Un paso de RMSProp. Devuelve parámetros y estado nuevos; las entradas no se modifican."""
    if set(params) != set(grads) or set(params) != set(state.cache):
        raise ShapeError("Parámetros, gradientes y caché no tienen los mismos nombres")
    new_params, new_cache = {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.cache[name].shape != p.shape:
            raise ShapeError(f"Forma del gradiente de {name} {g.shape} != {p.shape}")
        if not np.all(np.isfinite(g)):
            raise ValidationError(f"Gradiente no finito en {name}")
        cache = cfg.rms_decay * state.cache[name] + (1.0 - cfg.rms_decay) * g * g
        new_params[name] = p - cfg.learning_rate * g / (np.sqrt(cache) + state.epsilon)
        new_cache[name] = cache
    return new_params, RmspropState(new_cache, state.epsilon, state.steps + 1)


@dataclass
class LossCurve:
    """Pérdida media por época y número de pasos del optimizador."""
    values: list = field(default_factory=list)
    steps: int = 0

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass
class Metrics:
    weighted_f1: float
    precision: list
    recall: list
    mean_loss: float
    samples: int
    loss_name: str = "bce"

    def __post_init__(self):
        if not 0.0 <= self.weighted_f1 <= 1.0:
            raise ValidationError(f"F1 fuera de [0,1]: {self.weighted_f1}")
        if self.samples < 1:
            raise ValidationError("Metrics necesita al menos una muestra")

    def to_dict(self):
        return {
            "weighted_f1": self.weighted_f1,
            "precision": list(self.precision),
            "recall": list(self.recall),
            "mean_loss": self.mean_loss,
            "loss": self.loss_name,
            "samples": self.samples,
        }


def _uses_attributes(net: Network):
    return net.config.head == "sigmoid"


def _check_inputs(net, dataset, A):
    if len(dataset) == 0:
        raise ValidationError("El dataset está vacío")
    if _uses_attributes(net):
        if A is None:
            raise ValidationError("La cabeza sigmoide necesita una matriz de atributos")
        if A.n != net.config.attributes:
            raise ShapeError(f"La red predice {net.config.attributes} atributos y la matriz tiene {A.n}")
        K = A.K
    else:
        K = net.config.attributes
    if dataset.labels.min() < 0 or dataset.labels.max() >= K:
        raise ValidationError(f"Etiquetas fuera de [0, {K})")
    return K


def _batches(N, batch_size, order):
    size = N if batch_size is None else batch_size
    for start in range(0, N, size):
        yield order[start:start + size]


def train(net: Network, dataset: WindowedDataset, A: Optional[AttributeMatrix], cfg: TrainConfig, on_epoch=None):
    """Entrena ``net`` en sitio durante ``cfg.epochs`` épocas. El último lote parcial se conserva."""
    _check_inputs(net, dataset, A)
    if cfg.dropout is not None:
        net.set_dropout(cfg.dropout)
    rng = make_rng(cfg.seed, "train")
    shuffle_rng, noise_rng, dropout_rng = rng.child("shuffle"), rng.child("noise"), rng.child("dropout")
    state = RmspropState.zeros_like(net.get_parameters(), cfg.rms_epsilon)
    attributes = _uses_attributes(net)
    N = len(dataset)
    curve = LossCurve()

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(N) if cfg.shuffle else np.arange(N)
        total = 0.0
        for idx in _batches(N, cfg.batch_size, order):
            x = add_gaussian_noise(dataset.segments[idx], cfg.noise_mu, cfg.noise_sigma, noise_rng)
            labels = dataset.labels[idx]
            out = net.forward(x, mode="train", rng=dropout_rng)
            if attributes:
                target = targets_for_batch(labels, A)
                loss, grad = bce_loss(target, out), bce_gradient(target, out)
            else:
                loss, grad = cross_entropy_loss(labels, out), cross_entropy_gradient(labels, out)
            net.backward(grad, from_logits=True)
            params, state = rmsprop_step(net.get_parameters(), net.get_gradients(), state, cfg)
            net.set_parameters(params)
            total += loss * len(idx)
        mean = total / N
        if not np.isfinite(mean):
            raise ValidationError(f"Pérdida no finita en la época {epoch + 1}")
        curve.values.append(mean)
        logging.debug(f"Época {epoch + 1}/{cfg.epochs}: pérdida media {mean:.6f}")
        if on_epoch:
            on_epoch(epoch + 1, mean)
    curve.steps = state.steps
    return net, curve


def predict(net: Network, dataset: WindowedDataset, batch_size=EVAL_BATCH_SIZE):
    outs = [net.forward(dataset.segments[i:i + batch_size], mode="eval")
            for i in range(0, len(dataset), batch_size)]
    return np.concatenate(outs)


def evaluate(net: Network, dataset: WindowedDataset, A: Optional[AttributeMatrix], batch_size=EVAL_BATCH_SIZE):
    """Forward en modo evaluación, decodificación por vecino más cercano y F1 ponderada."""
    K = _check_inputs(net, dataset, A)
    scores = predict(net, dataset, batch_size)
    truth = dataset.labels
    if _uses_attributes(net):
        predicted = decode_batch(scores, A)
        loss, loss_name = bce_loss(targets_for_batch(truth, A), scores), "bce"
    else:
        predicted = scores.argmax(axis=1)
        loss, loss_name = cross_entropy_loss(truth, scores), "cross_entropy"
    precision, recall = per_class_precision_recall(predicted, truth, K)
    return Metrics(
        weighted_f1=weighted_f1(predicted, truth, K),
        precision=[float(v) for v in precision],
        recall=[float(v) for v in recall],
        mean_loss=float(loss),
        samples=int(len(truth)),
        loss_name=loss_name,
    )
