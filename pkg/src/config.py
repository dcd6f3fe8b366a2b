# src/config.py
import os
import logging
from dotenv import load_dotenv

# --- Configuración Inicial ---
load_dotenv()

LOG_FILE = os.getenv("ATTRHAR_LOG_FILE", "attrhar_debug.log")
LOG_LEVEL = os.getenv("ATTRHAR_LOG_LEVEL", "INFO").upper()

# Configuración del logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(levelname)s - %(message)s',
    filename=LOG_FILE,
    filemode='w'
)

# --- Parámetros de la Herramienta ---
DEFAULT_SEED = int(os.getenv("ATTRHAR_SEED", "0"))
DEFAULT_OUT_DIR = os.getenv("ATTRHAR_OUT_DIR", "runs")
RECORD_TIMING = os.getenv("ATTRHAR_RECORD_TIMING", "0") not in ("0", "false", "False")
SCHEMA_VERSION = 1
CHECKPOINT_FORMAT = "attrhar-checkpoint"
CHECKPOINT_VERSION = 1
STATE_FILE = "evolution_state.json"

# --- Arquitecturas ---
ARCH_CNN = "attrCNN"
ARCH_LSTM = "attrDeepConvLSTM"
ARCH_IMU = "attrCNN-IMU"
ARCHITECTURES = (ARCH_CNN, ARCH_LSTM, ARCH_IMU)

CONV_FILTERS = 64
FILTER_SIZE = 5
HIDDEN_UNITS = 128
POOL_SIZE = 2
POOL_STRIDE = 1
DROPOUT_RATE = 0.5
LSTM_FORGET_BIAS = 1.0

# --- Entrenamiento ---
LEARNING_RATE = 1e-4
RMS_DECAY = 0.9
RMS_EPSILON = 1e-8
BCE_EPSILON = 1e-12
NOISE_MU = 0.0
NOISE_SIGMA = 0.01
EVAL_BATCH_SIZE = 256

# --- Evolución ---
MUTATION_RETRIES = 1000
RANDOM_MATRIX_RETRIES = 10000
WALK_POLICIES = ("literal", "elitist")

# --- Datos ---
MAX_INTERPOLATION_GAP = 3
LABELING_RULES = ("majority", "last")
CSV_RESERVED_COLUMNS = ("timestamp", "label")

# Número de épocas por (dataset, arquitectura) durante la evolución.
EPOCHS_TABLE = {
    ("opportunity-gestures", ARCH_CNN): 12,
    ("opportunity-gestures", ARCH_IMU): 5,
    ("opportunity-gestures", ARCH_LSTM): 10,
    ("opportunity-locomotion", ARCH_CNN): 10,
    ("opportunity-locomotion", ARCH_IMU): 5,
    ("opportunity-locomotion", ARCH_LSTM): 10,
    ("pamap2", ARCH_CNN): 25,
    ("pamap2", ARCH_IMU): 5,
    ("pamap2", ARCH_LSTM): 25,
}


def _contiguous_groups(names, sizes):
    groups, start = {}, 0
    for name, size in zip(names, sizes):
        groups[name] = list(range(start, start + size))
        start += size
    return groups


# Plantillas de los datasets. Las agrupaciones de Opportunity deben confirmarse contra la
# documentación de la copia local del dataset.
DATASET_PRESETS = {
    "opportunity-locomotion": {
        "K": 5, "n": 10, "T": 24, "s": 12, "D": 113, "batch_size": 100,
        "sample_rate": 30.0, "pooling": False,
        "class_names": ["Null", "Stand", "Walk", "Sit", "Lie"],
        "groups": _contiguous_groups(
            ["back", "rua", "rla", "lua", "lla", "l_shoe", "r_shoe"],
            [16, 16, 16, 16, 16, 16, 17]),
    },
    "opportunity-gestures": {
        "K": 18, "n": 32, "T": 24, "s": 12, "D": 113, "batch_size": 100,
        "sample_rate": 30.0, "pooling": False,
        "class_names": None,
        "groups": _contiguous_groups(
            ["back", "rua", "rla", "lua", "lla", "l_shoe", "r_shoe"],
            [16, 16, 16, 16, 16, 16, 17]),
    },
    "pamap2": {
        "K": 12, "n": 24, "T": 100, "s": 22, "D": 40, "batch_size": 50,
        "sample_rate": 30.0, "pooling": True, "decimate": 3,
        "class_names": None,
        # canal 0: frecuencia cardiaca, asignada al IMU del pecho
        "groups": {
            "hand": list(range(1, 14)),
            "chest": [0] + list(range(14, 27)),
            "ankle": list(range(27, 40)),
        },
    },
}
