# src/storage.py
"""Escritura de artefactos: CSV, JSON, digests y manifiestos de ejecución."""
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from importlib import metadata

import pandas as pd

from .errors import DataError

TRACKED_PACKAGES = ("numpy", "pandas", "scikit-learn", "PyYAML", "rich")
MANIFEST_PREFIX = "manifest"


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise DataError(f"No se puede crear el directorio {path}: {e}")
    return path


def write_frame(df: pd.DataFrame, path):
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logging.info(f"CSV escrito: {path} ({len(df)} filas)")


def write_json(obj, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"No existe el fichero: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"JSON corrupto en {path}: {e}")


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_loss_csv(curve, path):
    write_frame(pd.DataFrame({"epoch": range(1, len(curve) + 1), "mean_bce": list(curve)}), path)


def write_metrics_json(metrics, path, extra=None):
    payload = metrics.to_dict()
    if extra:
        payload.update(extra)
    write_json(payload, path)


def package_versions():
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seeds: dict
    inputs: dict = field(default_factory=dict)     # ruta -> sha256
    outputs: list = field(default_factory=list)
    versions: dict = field(default_factory=package_versions)

    def add_inputs(self, *paths):
        for path in paths:
            if path and os.path.isfile(path):
                self.inputs[str(path)] = file_digest(path)

    def to_dict(self):
        return {
            "command": self.command,
            "config_digest": self.config_digest,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "versions": self.versions,
        }


def write_manifest(manifest: RunManifest, out_dir):
    path = os.path.join(out_dir, f"{MANIFEST_PREFIX}_{manifest.command}.json")
    write_json(manifest.to_dict(), path)
    return path


def verify_manifest(path):
    """Rutas de entrada cuyo digest ya no coincide con el registrado (lista vacía si todo cuadra)."""
    record = read_json(path)
    mismatched = []
    for input_path, digest in record.get("inputs", {}).items():
        if not os.path.isfile(input_path) or file_digest(input_path) != digest:
            mismatched.append(input_path)
    return mismatched
