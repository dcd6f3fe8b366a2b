# src/renderer.py
import numpy as np
import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

console = Console()


# --- Funciones de formato ---
def _format_f1(value, best=None):
    if best is not None and value >= best:
        return f"[bold green]{value:.4f}[/bold green]"
    return f"{value:.4f}"


def _bits_row(bits):
    return " ".join("[cyan]1[/cyan]" if b else "[dim]0[/dim]" for b in bits)


# --- Inspección de matrices de atributos ---
def inspection_frames(report):
    names = report["class_names"]
    bits = pd.DataFrame(report["bits"], index=names, columns=[f"attr_{i}" for i in range(report["n"])])
    bits["popcount"] = report["popcounts"]
    shared = pd.DataFrame(report["shared"], index=names, columns=names)
    return bits, shared


def render_inspection(report):
    table = Table(title=f"[b]Matriz de atributos[/b] K={report['K']} n={report['n']}", expand=False)
    table.add_column("Clase", style="magenta")
    table.add_column("Atributos")
    table.add_column("Popcount", justify="right")
    for name, bits, pop in zip(report["class_names"], report["bits"], report["popcounts"]):
        table.add_row(name, _bits_row(bits), str(pop))
    console.print(table)

    shared = Table(title="[b]Atributos compartidos[/b]")
    shared.add_column("")
    for name in report["class_names"]:
        shared.add_column(name, justify="right")
    for name, row in zip(report["class_names"], report["shared"]):
        shared.add_row(name, *(str(v) for v in row))
    console.print(shared)

    if report["violations"]:
        body = "\n".join(f"- {v}" for v in report["violations"])
        console.print(Panel(body, title="[bold red]Violaciones de invariantes[/bold red]", border_style="red"))
    else:
        console.print(Panel("[bold green]✅ Sin violaciones: filas no nulas y distintas.[/bold green]",
                            border_style="green"))


def render_inspection_markdown(report):
    """Modo --markdown: tablas en Markdown listas para pegar en un informe."""
    bits, shared = inspection_frames(report)
    console.print(f"# Matriz de atributos: {report['source']}")
    console.print(f"**K:** {report['K']}  **n:** {report['n']}")
    console.print("## Atributos por clase")
    console.print(bits.to_markdown(), markup=False)
    console.print("## Atributos compartidos")
    console.print(shared.to_markdown(), markup=False)
    console.print("## Violaciones")
    for v in report["violations"] or ["ninguna"]:
        console.print(f"* {v}", markup=False)


# --- Evolución ---
def render_generation(record, niter):
    improved = record.f1 >= record.best_f1
    marker = "⭐" if improved else " "
    console.print(f"{marker} Generación [bold]{record.generation + 1}/{niter}[/bold] | "
                  f"F1 {_format_f1(record.f1, record.best_f1)} | mejor {record.best_f1:.4f} | "
                  f"A=[cyan]{record.matrix_digest}[/cyan] | {record.seconds:.1f}s")


def render_evolution_summary(best, history, paths):
    lines = [
        f"Generaciones: [b]{len(history)}[/b]",
        f"Mejor F1 de validación: [b green]{history.best_f1:.4f}[/b green]" if len(history) else "Sin generaciones",
    ]
    if best is not None:
        lines.append(f"Mejor matriz: [cyan]{best.digest()}[/cyan] (K={best.K}, n={best.n})")
    lines += [f"{label}: {path}" for label, path in paths.items()]
    console.print(Panel("\n".join(lines), title="[b cyan]Evolución de atributos[/b cyan]", border_style="cyan"))


# --- Entrenamiento y evaluación ---
def render_loss_curve(curve):
    values = list(curve)
    if not values:
        return
    console.print(f"Pérdida: época 1 [b]{values[0]:.5f}[/b] → época {len(values)} [b]{values[-1]:.5f}[/b] "
                  f"({curve.steps} pasos)")


def render_metrics(metrics, class_names=None, title="Métricas"):
    names = class_names or [str(k) for k in range(len(metrics.precision))]
    table = Table(title=f"[b]{title}[/b]")
    table.add_column("Clase", style="magenta")
    table.add_column("Precisión", justify="right")
    table.add_column("Exhaustividad", justify="right")
    for name, p, r in zip(names, metrics.precision, metrics.recall):
        table.add_row(str(name), f"{p:.3f}", f"{r:.3f}")
    console.print(table)
    color = "green" if metrics.weighted_f1 >= 0.9 else "yellow"
    console.print(Panel(f"F1 ponderada: [b {color}]{metrics.weighted_f1:.4f}[/b {color}] | "
                        f"pérdida media ({metrics.loss_name}): {metrics.mean_loss:.5f} | muestras: {metrics.samples}",
                        border_style=color))


def render_trials(f1_scores):
    table = Table(title="[b]Atributos aleatorios[/b]")
    table.add_column("Ensayo", justify="right")
    table.add_column("F1 ponderada", justify="right")
    for i, f1 in enumerate(f1_scores):
        table.add_row(str(i + 1), f"{f1:.4f}")
    console.print(table)
    console.print(f"Media [b]{np.mean(f1_scores):.4f}[/b] ± {np.std(f1_scores):.4f}")


def render_error(error):
    console.print(f"[bold red]❌ {type(error).__name__}:[/bold red] {error}")
