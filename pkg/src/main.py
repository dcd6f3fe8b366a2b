# main.py
import argparse
import logging
import sys

from rich.console import Console

import src.commands as commands
from src.config import ARCHITECTURES, DEFAULT_OUT_DIR, DEFAULT_SEED
from src.data import SPLITS
from src.errors import AttrHarError
from src.pipeline import ExperimentPipeline
from src.renderer import render_error
from src.settings import load_settings

console = Console()


def build_parser():
    parser = argparse.ArgumentParser(
        prog="attr-har",
        description="Aprendizaje evolutivo de representaciones por atributos para reconocimiento de actividades.")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Semilla base de toda la ejecución.")
    parser.add_argument("--config", help="Documento YAML combinado (dataset/network/training/evolution).")
    parser.add_argument("--out", default=DEFAULT_OUT_DIR, help="Directorio de salida.")
    parser.add_argument("--threads", type=int, default=None,
                        help="Hilos de BLAS (se aplica al lanzar con run.py).")
    parser.add_argument("--log-level", default=None, help="Nivel de logging (DEBUG, INFO, WARNING...).")
    timing = parser.add_mutually_exclusive_group()
    timing.add_argument("--timing", action="store_true",
                        help="Registra la duración de cada generación en el historial.")
    timing.add_argument("--no-timing", action="store_true",
                        help="Escribe seconds=0 en el historial para que sea reproducible byte a byte.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Genera un dataset sintético separable.")
    p.add_argument("spec", help="YAML con la sección synthetic.")

    for name, text in (("evolve", "Evoluciona la matriz de atributos."),
                       ("train-final", "Entrena el modelo final en train+validación y evalúa en test."),
                       ("eval", "Evalúa un checkpoint sobre un split.")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--dataset", help="YAML de dataset (sustituye la sección de --config).")
        p.add_argument("--network", help="YAML de red.")
        p.add_argument("--training", help="YAML de entrenamiento.")
        if name == "evolve":
            p.add_argument("--evolution", help="YAML de evolución.")
            p.add_argument("--resume", action="store_true", help="Continúa desde evolution_state.json en --out.")
        if name == "train-final":
            p.add_argument("--attributes", help="CSV de atributos o 'random'.")
            p.add_argument("--trials", type=int, default=1, help="Ensayos con atributos aleatorios.")
            p.add_argument("--baseline", action="store_true", help="Cabeza softmax sin atributos (comparación).")
        if name == "eval":
            p.add_argument("checkpoint", help="Checkpoint .npz de train-final.")
            p.add_argument("--attributes", help="CSV de atributos usado al entrenar.")
            p.add_argument("--split", choices=SPLITS, default="test")

    p = sub.add_parser("inspect", help="Analiza una matriz de atributos.")
    p.add_argument("attributes", nargs="?", help="CSV de atributos.")
    p.add_argument("--example", action="store_true", help="Usa la matriz de Locomotion integrada.")
    p.add_argument("--markdown", action="store_true", help="Imprime el informe en Markdown.")
    parser.epilog = f"Arquitecturas: {', '.join(ARCHITECTURES)}"
    return parser


def _record_timing(args):
    if args.timing:
        return True
    return False if args.no_timing else None


def _pipeline(args):
    overrides = {k: getattr(args, k, None) for k in ("dataset", "network", "training", "evolution")}
    settings = load_settings(args.config, **overrides)
    return ExperimentPipeline(settings, seed=args.seed, record_timing=_record_timing(args))


def run(args):
    if args.command == "synth":
        commands.cmd_synth(args.spec, args.out, seed=args.seed)
    elif args.command == "evolve":
        commands.cmd_evolve(_pipeline(args), args.out, resume_run=args.resume)
    elif args.command == "train-final":
        commands.cmd_train_final(_pipeline(args), args.out, attributes=args.attributes,
                                 trials=args.trials, baseline=args.baseline)
    elif args.command == "eval":
        commands.cmd_eval(_pipeline(args), args.checkpoint, args.out, attributes=args.attributes, split=args.split)
    elif args.command == "inspect":
        commands.cmd_inspect(args.attributes, out_dir=args.out, example=args.example, markdown=args.markdown)


def main(argv=None):
    """Devuelve el código de salida: 0 éxito, 1 error de validación, 2 fallo en ejecución."""
    args = build_parser().parse_args(argv)
    if args.log_level:
        level = getattr(logging, args.log_level.upper(), None)
        if not isinstance(level, int):
            console.print(f"[bold red]❌ Nivel de logging desconocido:[/bold red] {args.log_level}")
            return 1
        logging.getLogger().setLevel(level)
    logging.info(f"Comando {args.command} con semilla {args.seed}")
    try:
        run(args)
    except AttrHarError as e:
        logging.error(f"{type(e).__name__}: {e}")
        render_error(e)
        return e.exit_code
    except KeyboardInterrupt:
        console.print("\n[bold]Interrupción por teclado. El estado guardado permite reanudar con --resume.[/bold]")
        return 2
    except Exception as e:
        logging.error(f"Error fatal: {e}", exc_info=True)
        console.print("[bold red]❌ Ocurrió un error fatal:[/bold red]")
        console.print_exception(show_locals=False)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
