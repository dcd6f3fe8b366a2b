# src/models.py
"""Constructores de attrCNN, attrDeepConvLSTM y attrCNN-IMU, forward uniforme y checkpoints."""
import json
import logging
import os
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .config import (
    ARCH_CNN, ARCH_LSTM, ARCH_IMU, ARCHITECTURES,
    CONV_FILTERS, FILTER_SIZE, HIDDEN_UNITS, POOL_SIZE, POOL_STRIDE, DROPOUT_RATE,
    LSTM_FORGET_BIAS, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
)
from .errors import ShapeError, ValidationError
from .losses import PredictionBatch
from .network import (
    Network, TemporalConv, ReLU, MaxPool, Flatten, TimeFlatten, Dropout, Dense, LSTM,
    ChannelBranches, SigmoidHead, SoftmaxHead,
)
from .rng import make_rng

HEADS = ("sigmoid", "softmax")


@dataclass
class NetworkConfig:
    architecture: str
    window: int                     # T
    channels: int                   # D
    attributes: int                 # n (K con la cabeza softmax)
    filters: int = CONV_FILTERS
    filter_size: int = FILTER_SIZE
    hidden: int = HIDDEN_UNITS
    pooling: bool = False
    pool_after: tuple = (2, 4)
    pool_size: int = POOL_SIZE
    pool_stride: int = POOL_STRIDE
    dropout: float = DROPOUT_RATE
    groups: Optional[list] = None
    head: str = "sigmoid"
    forget_bias: float = LSTM_FORGET_BIAS

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(f"Arquitectura desconocida '{self.architecture}'. Opciones: {', '.join(ARCHITECTURES)}")
        if self.head not in HEADS:
            raise ValidationError(f"Cabeza desconocida '{self.head}'")
        for name in ("window", "channels", "attributes", "filters", "filter_size", "hidden", "pool_size", "pool_stride"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} debe ser >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout debe estar en [0,1)")
        self.pool_after = tuple(int(k) for k in self.pool_after)
        if any(k not in (1, 2, 3, 4) for k in self.pool_after):
            raise ValidationError("pool_after sólo admite posiciones de convolución 1..4")
        if self.groups is not None:
            self.groups = [[int(c) for c in g] for g in self.groups]
            self._check_groups()
        if self.architecture == ARCH_IMU and self.groups is None:
            self.groups = [list(range(self.channels))]

    def _check_groups(self):
        seen = set()
        for g in self.groups:
            if not g:
                raise ValidationError("Grupo de canales vacío")
            overlap = seen.intersection(g)
            if overlap or len(set(g)) != len(g):
                raise ValidationError(f"Grupos de canales solapados: {sorted(overlap) or g}")
            seen.update(g)
        if seen != set(range(self.channels)):
            raise ValidationError(f"Los grupos deben cubrir exactamente los canales [0, {self.channels})")

    def time_after_convs(self):
        """Longitud temporal tras las cuatro convoluciones válidas y los poolings configurados."""
        t = self.window
        for k in range(1, 5):
            t -= self.filter_size - 1
            if t < 1:
                raise ShapeError(f"La longitud temporal colapsa tras la convolución {k} (T={self.window})")
            if self.pooling and k in self.pool_after:
                if t < self.pool_size:
                    raise ShapeError(f"La longitud temporal colapsa en el pooling tras la convolución {k}")
                t = (t - self.pool_size) // self.pool_stride + 1
        return t

    def to_dict(self):
        d = asdict(self)
        d["pool_after"] = list(self.pool_after)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _conv_block(cfg, rng):
    layers = []
    for k in range(1, 5):
        layers += [TemporalConv(cfg.filter_size, 1 if k == 1 else cfg.filters, cfg.filters, rng), ReLU()]
        if cfg.pooling and k in cfg.pool_after:
            layers.append(MaxPool(cfg.pool_size, cfg.pool_stride))
    return layers


def _head(cfg):
    return SoftmaxHead() if cfg.head == "softmax" else SigmoidHead()


def build_attr_cnn(cfg: NetworkConfig, seed=0):
    if cfg.architecture != ARCH_CNN:
        raise ValidationError(f"build_attr_cnn recibió la arquitectura {cfg.architecture}")
    t = cfg.time_after_convs()
    rng = make_rng(seed, "init")
    layers = _conv_block(cfg, rng)
    layers += [
        Flatten(),
        Dropout(cfg.dropout), Dense(t * cfg.channels * cfg.filters, cfg.hidden, rng), ReLU(),
        Dropout(cfg.dropout), Dense(cfg.hidden, cfg.hidden, rng), ReLU(),
        Dense(cfg.hidden, cfg.attributes, rng), _head(cfg),
    ]
    return Network(layers, cfg, seed)


def build_attr_deepconvlstm(cfg: NetworkConfig, seed=0):
    if cfg.architecture != ARCH_LSTM:
        raise ValidationError(f"build_attr_deepconvlstm recibió la arquitectura {cfg.architecture}")
    cfg.time_after_convs()
    rng = make_rng(seed, "init")
    layers = _conv_block(cfg, rng)
    layers += [
        TimeFlatten(), Dropout(cfg.dropout),
        LSTM(cfg.channels * cfg.filters, cfg.hidden, rng, return_sequences=True, forget_bias=cfg.forget_bias),
        LSTM(cfg.hidden, cfg.hidden, rng, return_sequences=False, forget_bias=cfg.forget_bias),
        Dropout(cfg.dropout), Dense(cfg.hidden, cfg.attributes, rng), _head(cfg),
    ]
    return Network(layers, cfg, seed)


def build_attr_cnn_imu(cfg: NetworkConfig, seed=0):
    if cfg.architecture != ARCH_IMU:
        raise ValidationError(f"build_attr_cnn_imu recibió la arquitectura {cfg.architecture}")
    t = cfg.time_after_convs()
    rng = make_rng(seed, "init")
    branches = []
    for group in cfg.groups:
        branch = _conv_block(cfg, rng)
        branch += [Flatten(), Dropout(cfg.dropout), Dense(t * len(group) * cfg.filters, cfg.hidden, rng), ReLU()]
        branches.append(branch)
    layers = [
        ChannelBranches(cfg.groups, branches),
        Dropout(cfg.dropout), Dense(len(cfg.groups) * cfg.hidden, cfg.hidden, rng), ReLU(),
        Dense(cfg.hidden, cfg.attributes, rng), _head(cfg),
    ]
    return Network(layers, cfg, seed)


BUILDERS = {
    ARCH_CNN: build_attr_cnn,
    ARCH_LSTM: build_attr_deepconvlstm,
    ARCH_IMU: build_attr_cnn_imu,
}


def build_network(cfg: NetworkConfig, seed=0):
    net = BUILDERS[cfg.architecture](cfg, seed)
    logging.info(f"Red {cfg.architecture} construida con semilla {seed}: {net.parameter_count} parámetros")
    net.summary()
    return net


def forward(net: Network, batch, mode="eval", rng=None):
    """Puntuaciones [B, n] en (0,1). En modo eval es determinista y no consume aleatoriedad."""
    scores = net.forward(batch, mode=mode, rng=rng)
    return PredictionBatch(scores=scores)


# --- Checkpoints ---

def save_checkpoint(net: Network, path):
    params = net.get_parameters()
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": net.config.to_dict(),
        "seed": int(net.seed),
        "parameters": list(params),
    }
    arrays = {f"param_{i:04d}": value for i, value in enumerate(params.values())}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    logging.info(f"Checkpoint guardado en {path}")


def load_checkpoint(path):
    if not os.path.isfile(path):
        raise ValidationError(f"No existe el checkpoint: {path}")
    with np.load(path, allow_pickle=False) as data:
        if "meta" not in data.files:
            raise ValidationError(f"{path} no es un checkpoint de attr-har")
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValidationError(f"{path} no es un checkpoint de attr-har")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(f"Versión de checkpoint no soportada: {meta.get('version')}")
        arrays = {name: data[f"param_{i:04d}"] for i, name in enumerate(meta["parameters"])}
    cfg = NetworkConfig.from_dict(meta["config"])
    net = build_network(cfg, meta["seed"])
    net.set_parameters(arrays)
    return net
