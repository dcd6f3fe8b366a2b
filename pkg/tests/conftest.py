import numpy as np
import pytest
import yaml

from src.attributes import LOCOMOTION_TABLE
from src.data import SynthSpec, normalize_per_channel, sliding_windows, synth_generate
from src.models import NetworkConfig
from src.rng import make_rng


def numerical_gradient(f, x, h=1e-6, indices=None):
    """Diferencias centrales de ``f()`` respecto a ``x`` (modificado en sitio y restaurado)."""
    grad = np.zeros_like(x)
    positions = indices if indices is not None else list(np.ndindex(x.shape))
    for idx in positions:
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))))


@pytest.fixture
def fd():
    return numerical_gradient


@pytest.fixture
def rel_error():
    return relative_error


@pytest.fixture
def locomotion():
    return LOCOMOTION_TABLE


@pytest.fixture
def rng():
    return make_rng(1234, "tests")


@pytest.fixture
def tiny_spec():
    return SynthSpec(K=3, D=4, groups=2, samples_per_class=120, holdout_samples_per_class=60, noise=0.02, seed=7)


def _windows(spec, stream, stats=None):
    rec = synth_generate(spec, stream)
    normed, stats = normalize_per_channel(rec, stats)
    return sliding_windows(normed, 12, 6, stats=stats), stats


@pytest.fixture
def tiny_splits(tiny_spec):
    """Splits de entrenamiento y validación pequeños (K=3, D=4, T=12)."""
    train, stats = _windows(tiny_spec, "train")
    val, _ = _windows(tiny_spec, "validation", stats)
    return train, val


@pytest.fixture
def tiny_netcfg():
    def make(architecture="attrCNN", n=4, **kw):
        values = dict(architecture=architecture, window=12, channels=4, attributes=n,
                      filters=4, filter_size=3, hidden=8, dropout=0.0)
        values.update(kw)
        return NetworkConfig(**values)
    return make


@pytest.fixture
def tiny_config(tmp_path):
    """Documento YAML combinado para ejecuciones rápidas de la CLI."""
    doc = {
        "schema_version": 1,
        "dataset": {
            "name": "tiny", "T": 12, "s": 6, "n": 4, "batch_size": 16,
            "synthetic": {"K": 3, "D": 4, "groups": 2, "samples_per_class": 120,
                          "holdout_samples_per_class": 60, "noise": 0.02},
        },
        "network": {"architecture": "attrCNN", "filters": 4, "filter_size": 3, "hidden": 8, "dropout": 0.0},
        "training": {"epochs": 1, "learning_rate": 0.002},
        "evolution": {"niter": 3, "epochs": 1},
    }
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path
