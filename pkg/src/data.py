# src/data.py
"""Ingesta de CSV, normalización, ruido, ventanas deslizantes y datos sintéticos."""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .config import (
    MAX_INTERPOLATION_GAP, LABELING_RULES, CSV_RESERVED_COLUMNS, NOISE_MU, NOISE_SIGMA,
)
from .errors import DataError, ShapeError, ValidationError
from .rng import make_rng

SPLITS = ("train", "validation", "test")


@dataclass
class RawRecording:
    samples: np.ndarray          # [L, D]
    labels: np.ndarray           # [L]
    channel_names: list
    sample_rate: float = 30.0
    groups: Optional[dict] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ShapeError(f"La grabación debe ser [L, D] con L >= 1, recibido {self.samples.shape}")
        if self.labels.shape[0] != self.samples.shape[0]:
            raise ShapeError("Número de etiquetas distinto del número de muestras")
        if len(self.channel_names) != self.samples.shape[1]:
            raise ShapeError("Número de nombres de canal distinto de D")
        if self.labels.min() < 0:
            raise DataError("Etiquetas negativas en la grabación")
        if self.groups:
            seen = set()
            for name, idx in self.groups.items():
                idx = set(int(c) for c in idx)
                if seen & idx or any(not 0 <= c < self.D for c in idx):
                    raise ValidationError(f"Grupo IMU '{name}' solapado o fuera de rango")
                seen |= idx

    @property
    def L(self):
        return self.samples.shape[0]

    @property
    def D(self):
        return self.samples.shape[1]


@dataclass
class NormalizationStats:
    minimum: np.ndarray
    maximum: np.ndarray

    def to_dict(self):
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))


@dataclass
class WindowedDataset:
    segments: np.ndarray         # [B, T, D]
    labels: np.ndarray           # [B]
    window: int
    step: int
    stats: Optional[NormalizationStats] = None

    def __post_init__(self):
        self.segments = np.asarray(self.segments, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.segments.ndim != 3 or self.segments.shape[1] != self.window:
            raise ShapeError(f"Segmentos con forma {self.segments.shape}, se esperaba [B, {self.window}, D]")
        if self.segments.shape[0] != self.labels.shape[0]:
            raise ShapeError("Número de segmentos distinto del número de etiquetas")

    def __len__(self):
        return self.segments.shape[0]

    @property
    def channels(self):
        return self.segments.shape[2]


@dataclass
class DatasetSchema:
    """Cómo leer un CSV: columna de etiqueta, canales y correspondencia de etiquetas."""
    label_column: str = "label"
    channels: Optional[list] = None
    num_classes: Optional[int] = None
    class_names: Optional[list] = None
    sample_rate: float = 30.0
    groups: Optional[dict] = None
    max_gap: int = MAX_INTERPOLATION_GAP


@dataclass
class SynthSpec:
    """Senoidales multicanal con frecuencias propias de cada clase más ruido gaussiano."""
    K: int
    D: int
    groups: int = 1
    samples_per_class: int = 1500
    holdout_samples_per_class: Optional[int] = None
    sample_rate: float = 30.0
    base_frequency: float = 1.5
    detune: float = 0.05
    amplitude: float = 1.0
    frequencies: Optional[list] = None
    noise: float = 0.05
    rounds: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError(f"K debe ser >= 1, recibido {self.K}")
        if self.D < 1:
            raise ValidationError(f"D debe ser >= 1, recibido {self.D}")
        if not 1 <= self.groups <= self.D:
            raise ValidationError(f"El número de grupos debe estar en [1, D], recibido {self.groups}")
        if self.samples_per_class < 1 or self.rounds < 1 or self.samples_per_class < self.rounds:
            raise ValidationError("samples_per_class debe ser >= rounds >= 1")
        if self.noise < 0 or self.sample_rate <= 0:
            raise ValidationError("noise >= 0 y sample_rate > 0")
        if self.holdout_samples_per_class is None:
            self.holdout_samples_per_class = max(self.rounds, self.samples_per_class // 3)
        if self.frequencies is not None:
            self.frequencies = [float(f) for f in self.frequencies]
            if len(self.frequencies) != self.K or len(set(self.frequencies)) != self.K:
                raise ValidationError("frequencies debe tener K valores distintos")
        freq = self.frequency_table()
        if freq.max() >= self.sample_rate / 2:
            raise ValidationError(f"Frecuencia {freq.max():.2f} Hz por encima de Nyquist ({self.sample_rate / 2} Hz)")

    def class_frequencies(self):
        if self.frequencies is not None:
            return np.asarray(self.frequencies)
        return self.base_frequency * (np.arange(self.K) + 1.0)

    def frequency_table(self):
        """[K, D]: cada canal se desplaza un poco respecto a la frecuencia de su clase."""
        return self.class_frequencies()[:, None] * (1.0 + self.detune * np.arange(self.D)[None, :])

    def group_map(self):
        parts = np.array_split(np.arange(self.D), self.groups)
        return {f"imu{g}": [int(c) for c in part] for g, part in enumerate(parts)}

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items()}


# --- Lectura de CSV ---

def _gap_lengths(na):
    runs = na.ne(na.shift()).cumsum()
    return na.groupby(runs).transform("sum").where(na, 0)


def _parse_labels(raw, schema, path):
    if raw.isna().any():
        rows = list(raw.index[raw.isna()][:5])
        raise DataError(f"{path}: filas sin etiqueta {rows}")
    raw = raw.astype(str).str.strip()
    if schema.class_names:
        lookup = {name: k for k, name in enumerate(schema.class_names)}
        if raw.isin(list(lookup)).all():
            return raw.map(lookup).to_numpy(dtype=np.int64)
    numeric = pd.to_numeric(raw, errors="coerce")
    bad = numeric.isna() | (numeric != numeric.round())
    if bad.any():
        raise DataError(f"{path}: etiqueta desconocida '{raw[bad].iloc[0]}'")
    labels = numeric.to_numpy(dtype=np.int64)
    if labels.min() < 0 or (schema.num_classes is not None and labels.max() >= schema.num_classes):
        offending = labels[(labels < 0) | (labels >= (schema.num_classes or np.inf))]
        raise DataError(f"{path}: etiqueta desconocida {int(offending[0])} (K={schema.num_classes})")
    return labels


def _resolve_groups(groups, channels):
    if not groups:
        return None
    resolved = {}
    for name, members in groups.items():
        idx = []
        for m in members:
            if isinstance(m, str):
                if m not in channels:
                    raise DataError(f"El grupo '{name}' referencia un canal inexistente: {m}")
                idx.append(channels.index(m))
            else:
                idx.append(int(m))
        resolved[name] = idx
    return resolved


def load_csv(path, schema: DatasetSchema):
    """Lee ``timestamp,label,<canales...>``. Huecos de hasta ``max_gap`` muestras se interpolan linealmente."""
    try:
        df = pd.read_csv(path, na_values=["NaN", ""], keep_default_na=True, float_precision="round_trip")
    except FileNotFoundError:
        raise DataError(f"No existe el fichero de datos: {path}")
    except pd.errors.EmptyDataError:
        raise DataError(f"Fichero vacío: {path}")
    except pd.errors.ParserError as e:
        raise DataError(f"Fila mal formada en {path}: {e}")
    if df.empty:
        raise DataError(f"Fichero sin filas de datos: {path}")
    if schema.label_column not in df.columns:
        raise DataError(f"{path}: falta la columna de etiqueta '{schema.label_column}'")

    channels = list(schema.channels) if schema.channels else \
        [c for c in df.columns if c not in CSV_RESERVED_COLUMNS and c != schema.label_column]
    missing = [c for c in channels if c not in df.columns]
    if missing or not channels:
        raise DataError(f"{path}: faltan columnas de canal {missing or '(ninguna)'}")

    raw = df[channels]
    values = raw.apply(pd.to_numeric, errors="coerce")
    malformed = values.isna() & raw.notna()
    if malformed.any().any():
        row = int(malformed.any(axis=1).to_numpy().argmax())
        raise DataError(f"{path}: valor no numérico en la fila de datos {row + 1}")
    labels = _parse_labels(df[schema.label_column], schema, path)

    na = values.isna()
    if na.any().any():
        filled = values.interpolate(method="linear", limit_area="inside")
        for col in channels:
            too_long = _gap_lengths(na[col]) > schema.max_gap
            filled.loc[too_long, col] = np.nan
        keep = filled.notna().all(axis=1).to_numpy()
        dropped = int((~keep).sum())
        if dropped:
            logging.warning(f"{path}: {dropped} filas descartadas por huecos mayores de {schema.max_gap} muestras")
        values, labels = filled[keep], labels[keep]
        if values.empty:
            raise DataError(f"{path}: no quedan filas tras descartar huecos")

    rec = RawRecording(values.to_numpy(dtype=np.float64), labels, channels, schema.sample_rate,
                       _resolve_groups(schema.groups, channels))
    logging.info(f"Leído {path}: L={rec.L}, D={rec.D}")
    return rec


def save_recording_csv(rec: RawRecording, path):
    df = pd.DataFrame(rec.samples, columns=rec.channel_names)
    df.insert(0, "label", rec.labels)
    df.insert(0, "timestamp", np.arange(rec.L) / rec.sample_rate)
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


# --- Transformaciones ---

def normalize_per_channel(rec: RawRecording, stats: Optional[NormalizationStats] = None):
    """Escala cada canal a [0,1] con el min/max del split de entrenamiento; fuera de él se recorta."""
    x = rec.samples
    if stats is None:
        stats = NormalizationStats(x.min(axis=0), x.max(axis=0))
    elif stats.minimum.shape != (rec.D,):
        raise ShapeError(f"Estadísticas para {stats.minimum.shape[0]} canales, la grabación tiene {rec.D}")
    span = stats.maximum - stats.minimum
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (x - stats.minimum) / safe, 0.0)
    return replace(rec, samples=np.clip(scaled, 0.0, 1.0)), stats


def add_gaussian_noise(segments, mu=NOISE_MU, sigma=NOISE_SIGMA, rng=None):
    if sigma < 0:
        raise ValidationError(f"sigma debe ser >= 0, recibido {sigma}")
    segments = np.asarray(segments, dtype=np.float64)
    if sigma == 0 and mu == 0:
        return segments.copy()
    if rng is None:
        raise ValidationError("El ruido gaussiano necesita un generador aleatorio")
    return segments + rng.normal(mu, sigma, size=segments.shape)


def _window_labels(label_windows, labeling):
    if labeling == "last":
        return label_windows[:, -1].copy()
    B = label_windows.shape[0]
    counts = np.zeros((B, int(label_windows.max()) + 1), dtype=np.int64)
    np.add.at(counts, (np.arange(B)[:, None], label_windows), 1)
    # empate: la etiqueta más baja
    return counts.argmax(axis=1)


def sliding_windows(rec: RawRecording, T, s, labeling="majority", stats=None):
    if T < 1 or s < 1:
        raise ValidationError(f"T y s deben ser >= 1, recibido T={T}, s={s}")
    if labeling not in LABELING_RULES:
        raise ValidationError(f"Regla de etiquetado desconocida: {labeling}")
    if rec.L < T:
        logging.warning(f"Grabación de {rec.L} muestras más corta que la ventana T={T}: sin ventanas")
        return WindowedDataset(np.empty((0, T, rec.D)), np.empty(0, dtype=np.int64), T, s, stats)
    starts = np.arange(0, rec.L - T + 1, s)
    segments = sliding_window_view(rec.samples, T, axis=0)[starts].transpose(0, 2, 1).copy()
    labels = _window_labels(sliding_window_view(rec.labels, T)[starts], labeling)
    return WindowedDataset(segments, labels, T, s, stats)


def decimate_mean(rec: RawRecording, factor):
    """Media por bloques de ``factor`` muestras; la etiqueta del bloque es la mayoritaria."""
    factor = int(factor)
    if factor < 1:
        raise ValidationError(f"El factor de diezmado debe ser >= 1, recibido {factor}")
    if factor == 1:
        return rec
    blocks = rec.L // factor
    if blocks < 1:
        raise DataError(f"Grabación de {rec.L} muestras demasiado corta para diezmar por {factor}")
    used = blocks * factor
    samples = rec.samples[:used].reshape(blocks, factor, rec.D).mean(axis=1)
    labels = _window_labels(rec.labels[:used].reshape(blocks, factor), "majority")
    return replace(rec, samples=samples, labels=labels, sample_rate=rec.sample_rate / factor)


def concat_datasets(a: WindowedDataset, b: WindowedDataset):
    if (a.window, a.step) != (b.window, b.step) or a.channels != b.channels:
        raise ShapeError("Sólo se pueden concatenar datasets con la misma ventana, paso y canales")
    return WindowedDataset(np.concatenate([a.segments, b.segments]), np.concatenate([a.labels, b.labels]),
                           a.window, a.step, a.stats)


# --- Datos sintéticos ---

def synth_generate(spec: SynthSpec, stream="train"):
    """Grabación determinista: cada clase aparece ``rounds`` veces en tramos contiguos."""
    rng = make_rng(spec.seed, "synth", stream)
    per_class = spec.samples_per_class if stream == "train" else spec.holdout_samples_per_class
    spans = np.full(spec.rounds, per_class // spec.rounds)
    spans[-1] += per_class - spans.sum()
    freq = spec.frequency_table()
    group_of = np.zeros(spec.D, dtype=np.int64)
    for g, members in enumerate(spec.group_map().values()):
        group_of[members] = g
    amp = spec.amplitude * (1.0 + 0.25 * group_of)

    chunks, labels = [], []
    for r in range(spec.rounds):
        for k in range(spec.K):
            t = np.arange(spans[r]) / spec.sample_rate
            phase = rng.uniform(0.0, 2 * np.pi, size=spec.D)
            chunks.append(amp * np.sin(2 * np.pi * freq[k] * t[:, None] + phase))
            labels.append(np.full(spans[r], k, dtype=np.int64))
    samples = np.concatenate(chunks)
    if spec.noise > 0:
        samples = samples + rng.normal(0.0, spec.noise, size=samples.shape)
    names = [f"ch{d}" for d in range(spec.D)]
    return RawRecording(samples, np.concatenate(labels), names, spec.sample_rate, spec.group_map())


# --- Splits a partir de la configuración de dataset ---

def _split_recordings(cfg, split):
    if cfg.synthetic is not None:
        return [synth_generate(cfg.synthetic, split)]
    files = cfg.splits.get(split) or []
    if not files:
        raise DataError(f"El dataset '{cfg.name}' no declara ficheros para el split '{split}'")
    schema = cfg.schema()
    return [decimate_mean(load_csv(path, schema), cfg.decimate) for path in files]


def training_stats(cfg):
    recs = _split_recordings(cfg, "train")
    samples = np.concatenate([r.samples for r in recs])
    return NormalizationStats(samples.min(axis=0), samples.max(axis=0))


def load_split(cfg, split, stats: Optional[NormalizationStats] = None):
    """Carga, normaliza y segmenta un split. Las ventanas nunca cruzan de un fichero a otro."""
    if split not in SPLITS:
        raise ValidationError(f"Split desconocido '{split}'. Opciones: {', '.join(SPLITS)}")
    recs = _split_recordings(cfg, split)
    if stats is None:
        stats = training_stats(cfg) if split != "train" else NormalizationStats(
            np.concatenate([r.samples for r in recs]).min(axis=0),
            np.concatenate([r.samples for r in recs]).max(axis=0))
    parts = []
    for rec in recs:
        if rec.D != cfg.D:
            raise ShapeError(f"La grabación tiene {rec.D} canales y el dataset declara D={cfg.D}")
        normed, _ = normalize_per_channel(rec, stats)
        parts.append(sliding_windows(normed, cfg.T, cfg.s, cfg.labeling, stats))
    dataset = parts[0]
    for part in parts[1:]:
        dataset = concat_datasets(dataset, part)
    dataset.stats = stats
    if len(dataset) == 0:
        raise DataError(f"El split '{split}' no produce ninguna ventana (T={cfg.T})")
    if dataset.labels.max() >= cfg.K:
        raise DataError(f"El split '{split}' contiene etiquetas fuera de [0, {cfg.K})")
    logging.info(f"Split {split}: {len(dataset)} ventanas")
    return dataset
