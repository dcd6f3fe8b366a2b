# src/evolution.py
"""Búsqueda evolutiva de la matriz de atributos: mutar, entrenar desde cero, validar, conservar la mejor.

El estado se guarda en ``evolution_state.json`` al terminar cada generación. Todas las
fuentes de aleatoriedad dependen sólo de la semilla base y del índice de generación,
de modo que una ejecución reanudada reproduce exactamente la ininterrumpida.
"""
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from .attributes import AttributeMatrix, MutationConfig, min_attributes, mutate, random_representation
from .config import RECORD_TIMING, STATE_FILE, WALK_POLICIES
from .errors import ConfigMismatchError, DataError, ValidationError
from .models import NetworkConfig, build_network
from .rng import make_rng
from .storage import read_json, write_frame, write_json
from .training import TrainConfig, evaluate, train

HISTORY_COLUMNS = ["generation", "f1", "best_f1", "matrix_digest", "seconds"]


@dataclass
class EvolutionConfig:
    niter: int
    K: int
    n: int
    mutation: MutationConfig = field(default_factory=MutationConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    epochs: int = 5
    base_seed: int = 0
    walk: str = "literal"
    class_names: Optional[list] = None
    record_timing: bool = RECORD_TIMING
    max_generations: Optional[int] = None

    def __post_init__(self):
        if self.niter < 1:
            raise ValidationError(f"niter debe ser >= 1, recibido {self.niter}")
        if self.K < 2:
            raise ValidationError(f"Se necesitan al menos 2 clases, recibido K={self.K}")
        if self.n < min_attributes(self.K):
            raise ValidationError(f"n={self.n} no admite {self.K} filas distintas no nulas (mínimo {min_attributes(self.K)})")
        if self.epochs < 1:
            raise ValidationError("epochs debe ser >= 1")
        if self.walk not in WALK_POLICIES:
            raise ValidationError(f"Política de paseo desconocida '{self.walk}'. Opciones: {', '.join(WALK_POLICIES)}")
        if self.max_generations is not None and self.max_generations < 1:
            raise ValidationError("max_generations debe ser >= 1")

    def digest_fields(self):
        """Campos que determinan el resultado (excluye el presupuesto por invocación y el cronometraje)."""
        return {
            "niter": self.niter, "K": self.K, "n": self.n,
            "mutation": {"p": self.mutation.p, "scope": self.mutation.scope, "retries": self.mutation.retries},
            "train": self.train.to_dict(), "epochs": self.epochs,
            "base_seed": self.base_seed, "walk": self.walk,
        }


@dataclass
class GenerationRecord:
    generation: int
    f1: float
    best_f1: float
    matrix_digest: str
    seconds: float
    init_digest: str = ""

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class FitnessHistory:
    records: list = field(default_factory=list)

    def append(self, record: GenerationRecord):
        if self.records and record.best_f1 < self.records[-1].best_f1:
            raise ValidationError("best_f1 no puede decrecer")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def best_f1(self):
        return self.records[-1].best_f1 if self.records else None

    def to_frame(self):
        rows = [{c: getattr(r, c) for c in HISTORY_COLUMNS} for r in self.records]
        return pd.DataFrame(rows, columns=HISTORY_COLUMNS)

    def to_list(self):
        return [r.to_dict() for r in self.records]

    @classmethod
    def from_list(cls, items):
        history = cls()
        for item in items:
            history.append(GenerationRecord(**item))
        return history


@dataclass
class EvolutionState:
    config_digest: str
    generation: int                       # próxima generación a ejecutar
    current: AttributeMatrix
    best: Optional[AttributeMatrix] = None
    best_f1: Optional[float] = None
    history: FitnessHistory = field(default_factory=FitnessHistory)

    def to_dict(self):
        return {
            "config_digest": self.config_digest,
            "generation": self.generation,
            "current": self.current.to_list(),
            "best": self.best.to_list() if self.best is not None else None,
            "best_f1": self.best_f1,
            "class_names": list(self.current.class_names) if self.current.class_names else None,
            "history": self.history.to_list(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            names = d.get("class_names")
            return cls(
                config_digest=d["config_digest"],
                generation=int(d["generation"]),
                current=AttributeMatrix(np.array(d["current"]), names),
                best=AttributeMatrix(np.array(d["best"]), names) if d.get("best") is not None else None,
                best_f1=d.get("best_f1"),
                history=FitnessHistory.from_list(d.get("history", [])),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"Estado de evolución corrupto: {e}")


def evolution_digest(cfg: EvolutionConfig, netcfg: NetworkConfig, context=None):
    payload = {"evolution": cfg.digest_fields(), "network": netcfg.to_dict(), "context": context or {}}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def save_state(state: EvolutionState, out_dir):
    write_json(state.to_dict(), os.path.join(out_dir, STATE_FILE))


def load_state(path):
    return EvolutionState.from_dict(read_json(path))


def write_history_csv(history: FitnessHistory, path):
    write_frame(history.to_frame(), path)


def _check_datasets(cfg, train_set, val_set):
    for name, ds in (("entrenamiento", train_set), ("validación", val_set)):
        if len(ds) == 0:
            raise ValidationError(f"El conjunto de {name} está vacío")
        if ds.labels.min() < 0 or ds.labels.max() >= cfg.K:
            raise ValidationError(f"El conjunto de {name} tiene etiquetas fuera de [0, {cfg.K})")


def _check_network(cfg, netcfg):
    if netcfg.head != "sigmoid":
        raise ConfigMismatchError("La evolución necesita la cabeza sigmoide de atributos")
    if netcfg.attributes != cfg.n:
        raise ConfigMismatchError(f"La red predice {netcfg.attributes} atributos y la evolución usa n={cfg.n}")


def initial_state(cfg: EvolutionConfig, digest):
    A0 = random_representation(cfg.K, cfg.n, make_rng(cfg.base_seed, "initial"), cfg.class_names)
    return EvolutionState(config_digest=digest, generation=0, current=A0)


def evolve(cfg: EvolutionConfig, train_set, val_set, netcfg: NetworkConfig,
           out_dir=None, state: Optional[EvolutionState] = None, context=None, on_generation=None):
    """Ejecuta generaciones hasta ``niter`` (o hasta ``max_generations`` en esta invocación).

    Devuelve ``(A_best, history)``. Si se da ``out_dir`` el estado se persiste tras cada
    generación y una interrupción deja un estado reanudable.
    """
    _check_datasets(cfg, train_set, val_set)
    _check_network(cfg, netcfg)
    digest = evolution_digest(cfg, netcfg, context)
    if state is None:
        state = initial_state(cfg, digest)
        if out_dir:
            save_state(state, out_dir)

    executed = 0
    while state.generation < cfg.niter:
        if cfg.max_generations is not None and executed >= cfg.max_generations:
            logging.info(f"Presupuesto de {cfg.max_generations} generaciones agotado en g={state.generation}")
            break
        g = state.generation
        started = time.perf_counter()
        A_gen = state.current

        net = build_network(netcfg, seed=cfg.base_seed + g)
        init_digest = net.digest()[:16]
        train(net, train_set, A_gen, replace(cfg.train, epochs=cfg.epochs, seed=cfg.base_seed + g))
        f1 = evaluate(net, val_set, A_gen).weighted_f1

        if state.best_f1 is None or f1 > state.best_f1:
            state.best, state.best_f1 = A_gen, f1
        seconds = round(time.perf_counter() - started, 3) if cfg.record_timing else 0.0
        record = GenerationRecord(g, f1, state.best_f1, A_gen.digest(), seconds, init_digest)
        state.history.append(record)

        if g + 1 < cfg.niter:
            parent = A_gen if cfg.walk == "literal" else state.best
            state.current = mutate(parent, cfg.mutation, make_rng(cfg.base_seed, g, "mutate"))
        state.generation = g + 1
        executed += 1
        if out_dir:
            save_state(state, out_dir)
        logging.info(f"Generación {g}: F1={f1:.4f} mejor={state.best_f1:.4f} A={record.matrix_digest}")
        if on_generation:
            on_generation(record)

    return state.best, state.history


def resume(state_path, cfg: EvolutionConfig, train_set, val_set, netcfg: NetworkConfig,
           out_dir=None, context=None, on_generation=None):
    """Continúa desde un estado persistido. Un estado completo se devuelve sin entrenar nada."""
    state = load_state(state_path)
    expected = evolution_digest(cfg, netcfg, context)
    if state.config_digest != expected:
        raise ConfigMismatchError(f"La configuración no coincide con la del estado en {state_path}")
    if len(state.history) != state.generation:
        raise DataError(f"Estado de evolución corrupto: {len(state.history)} registros para g={state.generation}")
    if state.generation >= cfg.niter:
        logging.info("Evolución ya completada: se devuelve el resultado guardado")
        return state.best, state.history
    logging.info(f"Reanudando la evolución en la generación {state.generation}")
    return evolve(cfg, train_set, val_set, netcfg, out_dir=out_dir, state=state,
                  context=context, on_generation=on_generation)
