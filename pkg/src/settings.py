# src/settings.py
"""Dialecto YAML de configuración (``schema_version: 1``) y construcción de las dataclasses tipadas."""
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .attributes import MutationConfig
from .config import (
    ARCH_CNN, ARCH_IMU, DATASET_PRESETS, EPOCHS_TABLE, LABELING_RULES, MAX_INTERPOLATION_GAP,
    RECORD_TIMING, SCHEMA_VERSION,
)
from .data import SPLITS, DatasetSchema, SynthSpec
from .errors import ValidationError
from .evolution import EvolutionConfig
from .models import NetworkConfig
from .training import TrainConfig

SECTIONS = ("dataset", "network", "training", "evolution", "synthetic")
DEFAULT_EPOCHS = 5


def load_document(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ValidationError(f"No existe el fichero de configuración: {path}")
    except yaml.YAMLError as e:
        raise ValidationError(f"YAML inválido en {path}: {e}")
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: se esperaba un documento con claves")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"{path}: schema_version {version} no soportada (se espera {SCHEMA_VERSION})")
    return doc


def section(doc, name):
    if any(key in doc for key in SECTIONS):
        return dict(doc.get(name) or {})
    # fichero de una sola sección
    return {k: v for k, v in doc.items() if k != "schema_version"}


@dataclass
class RawSettings:
    """Secciones sin tipar y el directorio base para resolver rutas relativas del dataset."""
    sections: dict = field(default_factory=dict)
    base_dirs: dict = field(default_factory=dict)
    sources: list = field(default_factory=list)

    def get(self, name):
        return dict(self.sections.get(name) or {})


def load_settings(config=None, **overrides):
    """``config`` es un documento combinado; ``overrides`` (dataset=ruta, ...) sustituyen secciones."""
    settings = RawSettings()
    if config:
        doc = load_document(config)
        settings.sources.append(str(config))
        for name in SECTIONS:
            if name in doc:
                settings.sections[name] = dict(doc[name] or {})
                settings.base_dirs[name] = os.path.dirname(os.path.abspath(config))
    for name, path in overrides.items():
        if name not in SECTIONS:
            raise ValidationError(f"Sección desconocida '{name}'")
        if path:
            settings.sections[name] = section(load_document(path), name)
            settings.base_dirs[name] = os.path.dirname(os.path.abspath(path))
            settings.sources.append(str(path))
    return settings


def _reject_unknown(raw, allowed, where):
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ValidationError(f"Claves desconocidas en '{where}': {', '.join(unknown)}")


SYNTH_KEYS = ("K", "D", "groups", "samples_per_class", "holdout_samples_per_class", "sample_rate",
              "base_frequency", "detune", "amplitude", "frequencies", "noise", "rounds", "seed")


def synth_spec(raw, seed=None):
    _reject_unknown(raw, SYNTH_KEYS, "synthetic")
    if "K" not in raw or "D" not in raw:
        raise ValidationError("La sección synthetic necesita K y D")
    values = dict(raw)
    if seed is not None and "seed" not in values:
        values["seed"] = seed
    return SynthSpec(**values)


@dataclass
class DatasetConfig:
    name: str
    K: int
    D: int
    T: int
    s: int
    n: int
    batch_size: int = 100
    class_names: Optional[list] = None
    groups: Optional[dict] = None
    labeling: str = "majority"
    sample_rate: float = 30.0
    decimate: int = 1
    max_gap: int = MAX_INTERPOLATION_GAP
    label_column: str = "label"
    channels: Optional[list] = None
    pooling: bool = False
    splits: dict = field(default_factory=dict)
    synthetic: Optional[SynthSpec] = None
    preset: Optional[str] = None

    def __post_init__(self):
        for key in ("K", "D", "T", "s", "n", "batch_size", "decimate"):
            if int(getattr(self, key)) < 1:
                raise ValidationError(f"dataset.{key} debe ser >= 1")
        if self.labeling not in LABELING_RULES:
            raise ValidationError(f"Regla de etiquetado desconocida '{self.labeling}'")
        if self.class_names is not None and len(self.class_names) != self.K:
            raise ValidationError(f"class_names tiene {len(self.class_names)} nombres y K={self.K}")
        if self.channels is not None and len(self.channels) != self.D:
            raise ValidationError(f"channels tiene {len(self.channels)} nombres y D={self.D}")
        unknown = set(self.splits) - set(SPLITS)
        if unknown:
            raise ValidationError(f"Splits desconocidos: {', '.join(sorted(unknown))}")
        if self.synthetic is None and not self.splits.get("train"):
            raise ValidationError(f"El dataset '{self.name}' no declara ficheros de entrenamiento ni datos sintéticos")

    def schema(self):
        """Esquema de lectura; la frecuencia es la del fichero, antes de diezmar."""
        return DatasetSchema(label_column=self.label_column, channels=self.channels, num_classes=self.K,
                             class_names=self.class_names, sample_rate=self.sample_rate * self.decimate,
                             groups=self.groups, max_gap=self.max_gap)

    def group_list(self):
        """Grupos como listas de índices, en orden de declaración."""
        if not self.groups:
            return None
        if any(isinstance(c, str) for members in self.groups.values() for c in members):
            if not self.channels:
                raise ValidationError("Grupos por nombre de canal requieren dataset.channels")
            return [[self.channels.index(c) if isinstance(c, str) else int(c) for c in members]
                    for members in self.groups.values()]
        return [[int(c) for c in members] for members in self.groups.values()]

    def to_dict(self, base_dir=None):
        """Con ``base_dir`` las rutas de los splits quedan relativas a él (digest independiente de la ubicación)."""
        d = {k: v for k, v in self.__dict__.items() if k != "synthetic"}
        d["synthetic"] = self.synthetic.to_dict() if self.synthetic else None
        if base_dir is not None:
            d["splits"] = {split: [os.path.relpath(p, base_dir).replace(os.sep, "/") for p in files]
                           for split, files in self.splits.items()}
        return d


DATASET_KEYS = tuple(DatasetConfig.__dataclass_fields__)


def dataset_config(raw, base_dir=".", seed=None):
    _reject_unknown(raw, DATASET_KEYS, "dataset")
    values = {}
    preset = raw.get("preset")
    if preset is not None:
        if preset not in DATASET_PRESETS:
            raise ValidationError(f"Preset desconocido '{preset}'. Opciones: {', '.join(DATASET_PRESETS)}")
        values.update(DATASET_PRESETS[preset])
        values["name"] = preset
    values.update({k: v for k, v in raw.items() if k != "synthetic"})
    if raw.get("synthetic") is not None:
        spec = synth_spec(raw["synthetic"], seed)
        values["synthetic"] = spec
        values.setdefault("K", spec.K)
        values.setdefault("D", spec.D)
        values.setdefault("sample_rate", spec.sample_rate)
        values.setdefault("groups", spec.group_map())
        values.setdefault("name", "synthetic")
    missing = [k for k in ("name", "K", "D", "T", "s") if k not in values]
    if missing:
        raise ValidationError(f"Faltan claves en la sección dataset: {', '.join(missing)}")
    values.setdefault("n", values["K"])
    values["splits"] = {split: [os.path.normpath(os.path.join(base_dir, p)) for p in (files or [])]
                        for split, files in (values.get("splits") or {}).items()}
    cfg = DatasetConfig(**values)
    if cfg.synthetic is not None and (cfg.synthetic.K, cfg.synthetic.D) != (cfg.K, cfg.D):
        raise ValidationError("K y D del dataset no coinciden con la sección synthetic")
    return cfg


NETWORK_KEYS = ("architecture", "filters", "filter_size", "hidden", "pooling", "pool_after",
                "pool_size", "pool_stride", "dropout", "forget_bias")


def network_config(raw, dataset: DatasetConfig, n=None, head="sigmoid"):
    """Completa T, D, grupos y anchura de salida a partir del dataset."""
    _reject_unknown(raw, NETWORK_KEYS, "network")
    values = {"architecture": ARCH_CNN, "pooling": dataset.pooling}
    values.update(raw)
    width = dataset.K if head == "softmax" else (n or dataset.n)
    groups = dataset.group_list() if values["architecture"] == ARCH_IMU else None
    return NetworkConfig(window=dataset.T, channels=dataset.D, attributes=width,
                         groups=groups, head=head, **values)


TRAIN_KEYS = ("learning_rate", "rms_decay", "rms_epsilon", "batch_size", "epochs", "dropout",
              "seed", "shuffle", "noise_mu", "noise_sigma")


def train_config(raw, dataset: DatasetConfig, seed=0, architecture=ARCH_CNN):
    _reject_unknown(raw, TRAIN_KEYS, "training")
    values = {"batch_size": dataset.batch_size, "seed": seed, "epochs": default_epochs(dataset, architecture)}
    values.update(raw)
    if values["batch_size"] == "full":
        values["batch_size"] = None
    return TrainConfig(**values)


EVOLUTION_KEYS = ("niter", "n", "mutation", "epochs", "walk", "record_timing", "max_generations")


def default_epochs(dataset: DatasetConfig, architecture):
    return EPOCHS_TABLE.get((dataset.preset or dataset.name, architecture), DEFAULT_EPOCHS)


def evolution_config(raw, dataset: DatasetConfig, train: TrainConfig, architecture, seed=0,
                     record_timing=None):
    _reject_unknown(raw, EVOLUTION_KEYS, "evolution")
    if "niter" not in raw:
        raise ValidationError("La sección evolution necesita niter")
    mutation_raw = dict(raw.get("mutation") or {})
    _reject_unknown(mutation_raw, ("p", "scope", "retries"), "evolution.mutation")
    cfg = EvolutionConfig(
        niter=int(raw["niter"]),
        K=dataset.K,
        n=int(raw.get("n", dataset.n)),
        mutation=MutationConfig(**mutation_raw),
        train=train,
        epochs=int(raw.get("epochs", default_epochs(dataset, architecture))),
        base_seed=seed,
        walk=raw.get("walk", "literal"),
        class_names=dataset.class_names,
        record_timing=raw.get("record_timing", RECORD_TIMING) if record_timing is None else record_timing,
        max_generations=raw.get("max_generations"),
    )
    logging.info(f"Evolución: niter={cfg.niter}, n={cfg.n}, épocas={cfg.epochs}, paseo={cfg.walk}")
    return cfg


def config_digest(*sections):
    """SHA-256 del JSON canónico de las secciones resueltas."""
    payload = json.dumps(list(sections), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
