# src/commands.py
"""Subcomandos de la CLI: synth, evolve, train-final, eval e inspect."""
import logging
import os
from dataclasses import replace

import numpy as np
import pandas as pd
import yaml
from rich.console import Console
from rich.rule import Rule

from .attributes import (
    LOCOMOTION_TABLE, load_attribute_csv, random_representation, read_attribute_table,
    save_attribute_csv, sharing_matrix, validate_matrix,
)
from .config import SCHEMA_VERSION, STATE_FILE
from .data import SPLITS, save_recording_csv, synth_generate
from .errors import ConfigMismatchError, ShapeError, ValidationError
from .evolution import evolve, load_state, resume, write_history_csv
from .models import build_network, load_checkpoint, save_checkpoint
from .pipeline import ExperimentPipeline
from .renderer import (
    render_evolution_summary, render_generation, render_inspection, render_inspection_markdown,
    render_loss_curve, render_metrics, render_trials,
)
from .rng import make_rng
from .settings import config_digest, load_document, section, synth_spec
from .storage import (
    RunManifest, ensure_dir, write_frame, write_json, write_loss_csv, write_manifest, write_metrics_json,
)
from .training import evaluate, train

console = Console()

SYNTH_WINDOW_DEFAULTS = {"T": 24, "s": 12, "n": 10, "batch_size": 100}


# --- synth ---

def cmd_synth(spec_path, out_dir, seed=0):
    """Genera los splits sintéticos en CSV y un ``dataset.yaml`` que apunta a ellos."""
    doc = load_document(spec_path)
    spec = synth_spec(section(doc, "synthetic"), seed)
    ensure_dir(out_dir)
    console.print(Rule(f"[bold]Datos sintéticos[/bold] K={spec.K} D={spec.D} grupos={spec.groups}"))

    outputs, splits = [], {}
    for split in SPLITS:
        rec = synth_generate(spec, split)
        path = os.path.join(out_dir, f"synthetic_{split}.csv")
        save_recording_csv(rec, path)
        outputs.append(path)
        splits[split] = [os.path.basename(path)]
        console.print(f"[green]✔[/green] {split}: {rec.L} muestras → {path}")

    window = dict(SYNTH_WINDOW_DEFAULTS)
    window.update(doc.get("dataset") or {})
    dataset = {
        "name": "synthetic", "K": spec.K, "D": spec.D, "sample_rate": spec.sample_rate,
        "groups": spec.group_map(), "splits": splits, **window,
    }
    dataset_path = os.path.join(out_dir, "dataset.yaml")
    with open(dataset_path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump({"schema_version": SCHEMA_VERSION, "dataset": dataset}, fh, sort_keys=True)
    outputs.append(dataset_path)

    manifest = RunManifest("synth", config_digest(spec.to_dict()), {"seed": spec.seed}, outputs=outputs)
    manifest.add_inputs(spec_path)
    write_manifest(manifest, out_dir)
    return outputs


# --- evolve ---

def _write_partial_history(out_dir):
    state_path = os.path.join(out_dir, STATE_FILE)
    if os.path.isfile(state_path):
        write_history_csv(load_state(state_path).history, os.path.join(out_dir, "history.csv"))


def cmd_evolve(pipeline: ExperimentPipeline, out_dir, resume_run=False):
    evo = pipeline.evolution_config()
    netcfg = pipeline.network_config(n=evo.n)
    netcfg.time_after_convs()
    ensure_dir(out_dir)
    state_path = os.path.join(out_dir, STATE_FILE)
    if resume_run and not os.path.isfile(state_path):
        raise ValidationError(f"No hay estado que reanudar en {state_path}")

    console.print(Rule(f"[bold]Evolución de atributos[/bold] {netcfg.architecture} · {pipeline.dataset.name}"))
    pipeline.describe()
    train_set, val_set = pipeline.train_set, pipeline.validation_set
    context = {"dataset": pipeline.dataset_identity()}
    show = lambda record: render_generation(record, evo.niter)

    try:
        if resume_run:
            best, history = resume(state_path, evo, train_set, val_set, netcfg, out_dir=out_dir,
                                   context=context, on_generation=show)
        else:
            best, history = evolve(evo, train_set, val_set, netcfg, out_dir=out_dir,
                                   context=context, on_generation=show)
    except BaseException:
        _write_partial_history(out_dir)
        raise

    paths = {"Historial": os.path.join(out_dir, "history.csv"), "Estado": state_path}
    write_history_csv(history, paths["Historial"])
    if best is not None:
        paths["Mejor matriz"] = os.path.join(out_dir, "best_attributes.csv")
        save_attribute_csv(best, paths["Mejor matriz"])

    manifest = RunManifest("evolve", config_digest(context, evo.digest_fields(), netcfg.to_dict()),
                           {"base_seed": evo.base_seed}, outputs=list(paths.values()))
    manifest.add_inputs(*pipeline.settings.sources, *pipeline.input_files())
    write_manifest(manifest, out_dir)
    render_evolution_summary(best, history, paths)
    return best, history


# --- train-final ---

def _train_and_test(pipeline, netcfg, A, tcfg, out_dir, seed):
    net = build_network(netcfg, seed=seed)
    net, curve = train(net, pipeline.final_training_set(), A, tcfg)
    render_loss_curve(curve)
    metrics = evaluate(net, pipeline.test_set, A)
    ensure_dir(out_dir)
    outputs = {
        "checkpoint": os.path.join(out_dir, "model.npz"),
        "loss": os.path.join(out_dir, "loss.csv"),
        "metrics": os.path.join(out_dir, "metrics.json"),
    }
    save_checkpoint(net, outputs["checkpoint"])
    write_loss_csv(curve, outputs["loss"])
    write_metrics_json(metrics, outputs["metrics"], {"split": "test", "architecture": netcfg.architecture})
    if A is not None:
        outputs["attributes"] = os.path.join(out_dir, "attributes.csv")
        save_attribute_csv(A, outputs["attributes"])
    return metrics, outputs


def cmd_train_final(pipeline: ExperimentPipeline, out_dir, attributes=None, trials=1, baseline=False):
    """Entrena con train+validación y evalúa en test.

    ``attributes`` es la ruta de un CSV, ``"random"`` (``trials`` matrices aleatorias
    independientes) o ``None`` junto con ``baseline=True`` para la cabeza softmax.
    """
    ds = pipeline.dataset
    tcfg = pipeline.train_config()
    if trials < 1:
        raise ValidationError("--trials debe ser >= 1")
    if baseline:
        if attributes is not None:
            raise ValidationError("--baseline no usa matriz de atributos")
        plans = [(None, pipeline.network_config(head="softmax"), out_dir, tcfg.seed)]
    elif attributes == "random":
        n = ds.n
        plans = []
        for t in range(trials):
            A = random_representation(ds.K, n, make_rng(pipeline.seed, "trial", t), ds.class_names)
            trial_dir = os.path.join(out_dir, f"trial_{t}") if trials > 1 else out_dir
            plans.append((A, pipeline.network_config(n=n), trial_dir, tcfg.seed + t))
    elif attributes:
        A = load_attribute_csv(attributes)
        if A.K != ds.K:
            raise ConfigMismatchError(f"La matriz de {attributes} tiene K={A.K} y el dataset K={ds.K}")
        plans = [(A, pipeline.network_config(n=A.n), out_dir, tcfg.seed)]
    else:
        raise ValidationError("Indica --attributes <csv|random> o --baseline")
    for _, netcfg, _, _ in plans:
        netcfg.time_after_convs()

    console.print(Rule(f"[bold]Entrenamiento final[/bold] {plans[0][1].architecture} · {ds.name}"))
    all_metrics, outputs = [], []
    for A, netcfg, run_dir, seed in plans:
        metrics, paths = _train_and_test(pipeline, netcfg, A, replace(tcfg, seed=seed), run_dir, seed)
        render_metrics(metrics, ds.class_names, title=f"Test · {os.path.basename(run_dir) or run_dir}")
        all_metrics.append(metrics)
        outputs += list(paths.values())

    if len(all_metrics) > 1:
        f1s = [m.weighted_f1 for m in all_metrics]
        render_trials(f1s)
        summary = os.path.join(out_dir, "trials.csv")
        write_frame(pd.DataFrame({"trial": range(len(f1s)), "f1": f1s}), summary)
        summary_json = os.path.join(out_dir, "trials_summary.json")
        write_json({"trials": len(f1s), "mean_f1": float(np.mean(f1s)), "std_f1": float(np.std(f1s))}, summary_json)
        outputs += [summary, summary_json]

    manifest = RunManifest("train-final", pipeline.digest(tcfg.to_dict(), plans[0][1].to_dict()),
                           {"seed": tcfg.seed, "trials": trials}, outputs=outputs)
    manifest.add_inputs(*pipeline.settings.sources, *pipeline.input_files(),
                        attributes if attributes not in (None, "random") else None)
    write_manifest(manifest, out_dir)
    return all_metrics


# --- eval ---

def cmd_eval(pipeline: ExperimentPipeline, checkpoint, out_dir, attributes=None, split="test"):
    net = load_checkpoint(checkpoint)
    ds = pipeline.dataset
    if (net.config.window, net.config.channels) != (ds.T, ds.D):
        raise ShapeError(f"El checkpoint espera T={net.config.window}, D={net.config.channels}; "
                         f"el dataset tiene T={ds.T}, D={ds.D}")
    A = None
    if net.config.head == "sigmoid":
        if not attributes:
            raise ValidationError("La red de atributos necesita --attributes")
        A = load_attribute_csv(attributes)
        if A.K != ds.K:
            raise ConfigMismatchError(f"La matriz tiene K={A.K} y el dataset K={ds.K}")

    metrics = evaluate(net, pipeline.split(split), A)
    render_metrics(metrics, ds.class_names, title=f"Evaluación · {split}")
    ensure_dir(out_dir)
    path = os.path.join(out_dir, f"metrics_{split}.json")
    write_metrics_json(metrics, path, {"split": split, "architecture": net.config.architecture})
    manifest = RunManifest("eval", pipeline.digest({"split": split}, net.config.to_dict()),
                           {"checkpoint_seed": int(net.seed)}, outputs=[path])
    manifest.add_inputs(checkpoint, attributes, *pipeline.settings.sources, *pipeline.input_files())
    write_manifest(manifest, out_dir)
    return metrics


# --- inspect ---

def inspection_report(bits, class_names, source):
    bits = np.asarray(bits)
    report = {
        "source": str(source),
        "K": int(bits.shape[0]),
        "n": int(bits.shape[1]) if bits.ndim == 2 else 0,
        "class_names": list(class_names) if class_names else [str(k) for k in range(bits.shape[0])],
        "bits": bits.astype(int).tolist(),
        "violations": validate_matrix(bits),
    }
    binary = np.where(bits == 1, 1, 0)
    report["popcounts"] = [int(v) for v in binary.sum(axis=1)]
    report["shared"] = sharing_matrix(binary).astype(int).tolist()
    return report


def cmd_inspect(path=None, out_dir=None, example=False, markdown=False):
    if example:
        bits, names, source = LOCOMOTION_TABLE.bits, LOCOMOTION_TABLE.class_names, "locomotion (integrada)"
    elif path:
        bits, names = read_attribute_table(path)
        source = path
    else:
        raise ValidationError("Indica un fichero de atributos o --example")

    report = inspection_report(bits, names, source)
    if markdown:
        render_inspection_markdown(report)
    else:
        render_inspection(report)

    if out_dir:
        ensure_dir(out_dir)
        report_path = os.path.join(out_dir, "inspect_report.json")
        write_json(report, report_path)
        manifest = RunManifest("inspect", config_digest({"source": report["source"]}), {},
                               outputs=[report_path])
        manifest.add_inputs(path)
        write_manifest(manifest, out_dir)
    if report["violations"]:
        logging.warning(f"{source}: {len(report['violations'])} violaciones de invariantes")
        raise ValidationError(f"La matriz de {source} viola sus invariantes: " + "; ".join(report["violations"]))
    return report
