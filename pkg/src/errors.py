# src/errors.py


class AttrHarError(Exception):
    """Raíz de los errores propios de la herramienta."""
    exit_code = 2


class ValidationError(AttrHarError, ValueError):
    """Entrada, forma o configuración inválida. Se detecta antes de cualquier cálculo costoso."""
    exit_code = 1


class ShapeError(ValidationError):
    pass


class ConfigMismatchError(ValidationError):
    """La configuración no coincide con la del estado persistido."""


class DataError(ValidationError):
    """Fichero de datos mal formado, vacío o con etiquetas desconocidas."""


class MutationError(AttrHarError):
    """No se encontró un mutante válido dentro del presupuesto de reintentos."""
