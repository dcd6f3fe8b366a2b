# src/pipeline.py
import logging

from .config import ARCH_CNN
from .data import concat_datasets, load_split
from .errors import ValidationError
from .settings import (
    RawSettings, config_digest, dataset_config, evolution_config, network_config, train_config,
)


class ExperimentPipeline:
    """Resuelve la configuración de una ejecución y carga los splits bajo demanda."""
    def __init__(self, settings: RawSettings, seed=0, record_timing=None):
        self.settings = settings
        self.seed = seed
        self.record_timing = record_timing
        if "dataset" not in settings.sections:
            raise ValidationError("Falta la configuración de dataset (--dataset o sección dataset en --config)")
        self.dataset = dataset_config(settings.get("dataset"), settings.base_dirs.get("dataset", "."), seed)
        self._splits = {}
        self._stats = None

    # --- Datos ---
    def split(self, name):
        if name not in self._splits:
            if self._stats is None and name != "train":
                self.split("train")
            dataset = load_split(self.dataset, name, self._stats)
            if name == "train":
                self._stats = dataset.stats
            self._splits[name] = dataset
        return self._splits[name]

    @property
    def train_set(self):
        return self.split("train")

    @property
    def validation_set(self):
        return self.split("validation")

    @property
    def test_set(self):
        return self.split("test")

    def final_training_set(self):
        """Entrenamiento final: train y validación concatenados."""
        return concat_datasets(self.train_set, self.validation_set)

    def input_files(self):
        return [path for files in self.dataset.splits.values() for path in files]

    # --- Configuraciones tipadas ---
    def network_config(self, n=None, head="sigmoid"):
        return network_config(self.settings.get("network"), self.dataset, n=n, head=head)

    @property
    def architecture(self):
        return self.settings.get("network").get("architecture", ARCH_CNN)

    def train_config(self):
        return train_config(self.settings.get("training"), self.dataset, seed=self.seed,
                            architecture=self.architecture)

    def evolution_config(self, architecture=None):
        architecture = architecture or self.architecture
        return evolution_config(self.settings.get("evolution"), self.dataset, self.train_config(),
                                architecture, seed=self.seed, record_timing=self.record_timing)

    def dataset_identity(self):
        return self.dataset.to_dict(base_dir=self.settings.base_dirs.get("dataset", "."))

    def digest(self, *extra):
        return config_digest(self.dataset_identity(), *extra)

    def describe(self):
        ds = self.dataset
        logging.info(f"Dataset {ds.name}: K={ds.K}, D={ds.D}, T={ds.T}, s={ds.s}, n={ds.n}")
        return {"name": ds.name, "K": ds.K, "D": ds.D, "T": ds.T, "s": ds.s, "n": ds.n}
