# run.py
import os
import sys

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def apply_threads(argv):
    """Fija los hilos de BLAS antes de importar numpy; después ya no tiene efecto."""
    for i, arg in enumerate(argv):
        value = None
        if arg == "--threads" and i + 1 < len(argv):
            value = argv[i + 1]
        elif arg.startswith("--threads="):
            value = arg.split("=", 1)[1]
        if value is not None:
            for name in THREAD_VARIABLES:
                os.environ[name] = value


if __name__ == "__main__":
    apply_threads(sys.argv[1:])
    from src.main import main
    sys.exit(main(sys.argv[1:]))
