"""Command-line interface: dataset generation, training, the benchmark grid,
the data-efficiency sweep, and the equivariance audit.

Exit codes: 0 success, 1 runtime/IO failure, 2 usage error, 3 training
aborted on a non-finite loss. Every command that writes artifacts echoes its
resolved configuration into the output directory.
"""

from __future__ import annotations

import json
import os
import sys
import time

import click
import numpy as np

from .blocks import ClassifierModel, load_checkpoint, save_checkpoint
from .experiments import (
    AUDIT_FAMILY_LABELS,
    FAMILY_LABELS,
    MODEL_ROWS,
    audit_equivariance,
    build_test_set,
    build_train_set,
    family_by_label,
    run_efficiency_sweep,
    run_table1,
)
from .geometry import TransformClass
from .graphs import load_dataset, save_dataset
from .seeding import TRANSFORM_STREAM, substream_rng
from .training import TrainingDiverged, evaluate, train, write_record_sidecar, write_records_csv

FAMILY_CHOICE = click.Choice(["orthogonal", "orthogonal_dilation", "non_orthogonal"])
BLOCK_CHOICE = click.Choice(["sdgn", "dgn", "gn"])
MAP_CHOICE = click.Choice(["identity", "weighted_displacement", "none"])


class _NanAbort(click.ClickException):
    exit_code = 3


def _echo_config(out_dir, command, config):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump({"command": command, "config": config}, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _transform_class(family, mu):
    if family == "non_orthogonal":
        if mu is None or mu <= 0:
            raise click.UsageError("non_orthogonal needs --mu > 0")
        return TransformClass(family, mu)
    return TransformClass(family)


def _family_label(family, mu):
    return f"non_orthogonal_mu{mu:g}" if family == "non_orthogonal" else family


@click.group()
@click.option(
    "--results-dir",
    envvar="DGN_RESULTS_DIR",
    default="results",
    show_default=True,
    help="Root directory for command outputs (env: DGN_RESULTS_DIR).",
)
@click.option("--jobs", type=int, default=None, help="Worker processes (default: all cores).")
@click.pass_context
def main(ctx, results_dir, jobs):
    """Distance-preserving graph networks: datasets, training and audits."""
    ctx.obj = {"results_dir": results_dir, "jobs": jobs}


@main.command()
@click.option("--family", type=FAMILY_CHOICE, required=True)
@click.option("--mu", type=float, default=None, help="Non-orthogonality target (non_orthogonal only).")
@click.option("--count", type=int, required=True, help="Total graphs; must be a multiple of 5.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False), required=True)
def generate(family, mu, count, seed, out):
    """Write a transformed-polytope dataset as JSON."""
    if count < 0 or count % 5:
        raise click.UsageError(f"--count must be a non-negative multiple of 5, got {count}")
    tclass = _transform_class(family, mu)
    rng = substream_rng(seed, TRANSFORM_STREAM)
    graphs = build_test_set(tclass, rng, per_class=count // 5)
    meta = {"family": family, "mu": tclass.mu, "seed": seed}
    try:
        save_dataset(out, graphs, meta)
    except OSError as exc:
        raise click.ClickException(f"cannot write {out}: {exc}") from exc
    click.echo(f"wrote {len(graphs)} graphs to {out}")


@main.command(name="train")
@click.option("--block", type=BLOCK_CHOICE, required=True)
@click.option("--map", "coordinate_map", type=MAP_CHOICE, default="identity", show_default=True)
@click.option("--family", type=FAMILY_CHOICE, default="orthogonal", show_default=True)
@click.option("--mu", type=float, default=None)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--epochs", type=int, default=500, show_default=True)
@click.option("--per-class", type=int, default=100, show_default=True, help="Test graphs per class when generating the test set.")
@click.option("--train-data", type=click.Path(exists=True, dir_okay=False), default=None, help="Dataset file; defaults to the canonical 5 polytopes.")
@click.option("--test-data", type=click.Path(exists=True, dir_okay=False), default=None, help="Dataset file; defaults to a generated family test set.")
@click.option("-o", "--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.pass_context
def train_cmd(ctx, block, coordinate_map, family, mu, alpha, seed, epochs, per_class, train_data, test_data, out):
    """Train one model; writes checkpoint.json and records.csv."""
    if block == "gn" and coordinate_map != "none":
        coordinate_map = "none"
    if block != "gn" and coordinate_map == "none":
        raise click.UsageError(f"--map none is only valid with --block gn")
    tclass = _transform_class(family, mu)
    out = out or os.path.join(
        ctx.obj["results_dir"], f"train-{block}-{coordinate_map}-{_family_label(family, tclass.mu)}-seed{seed}"
    )
    config = {
        "block": block,
        "coordinate_map": coordinate_map,
        "family": family,
        "mu": tclass.mu,
        "alpha": alpha,
        "seed": seed,
        "epochs": epochs,
        "per_class": per_class,
        "train_data": train_data,
        "test_data": test_data,
    }
    try:
        _echo_config(out, "train", config)
        train_set = load_dataset(train_data)[0] if train_data else build_train_set()
        if test_data:
            test_set = load_dataset(test_data)[0]
        else:
            test_set = build_test_set(tclass, substream_rng(seed, TRANSFORM_STREAM), per_class)
        model = ClassifierModel(
            kind=block,
            coordinate_map=None if coordinate_map == "none" else coordinate_map,
            alpha=alpha,
            seed=seed,
        )
        started = time.monotonic()
        record = train(model, train_set, test_set=test_set, epochs=epochs)
        wall = time.monotonic() - started
        save_checkpoint(model, os.path.join(out, "checkpoint.json"))
        write_records_csv(record, os.path.join(out, "records.csv"))
        write_record_sidecar(record, os.path.join(out, "run.json"), config=config, wall_time=wall)
    except TrainingDiverged as exc:
        raise _NanAbort(str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    final = record.test_acc["test"][-1] if record.test_acc.get("test") else None
    click.echo(f"done: epochs={epochs} final_test_acc={final}")


@main.command(name="evaluate")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
def evaluate_cmd(checkpoint, data):
    """Accuracy of a saved checkpoint on a dataset file."""
    try:
        model = load_checkpoint(checkpoint)
        graphs, _ = load_dataset(data)
        acc = evaluate(model, graphs)
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"accuracy={acc}")


@main.command(name="table1")
@click.option("--seeds", type=int, default=10, show_default=True)
@click.option("--epochs", type=int, default=500, show_default=True)
@click.option("--base-seed", type=int, default=0, show_default=True)
@click.option("--per-class", type=int, default=100, show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("-o", "--out", type=click.Path(file_okay=False), default=None)
@click.pass_context
def table1_cmd(ctx, seeds, epochs, base_seed, per_class, alpha, out):
    """Reproduce the full accuracy grid (5 model rows x 5 transform families)."""
    out = out or os.path.join(ctx.obj["results_dir"], "table1")
    config = {
        "seeds": seeds,
        "epochs": epochs,
        "base_seed": base_seed,
        "per_class": per_class,
        "alpha": alpha,
    }
    try:
        _echo_config(out, "table1", config)
        grid = run_table1(
            out,
            seeds=seeds,
            epochs=epochs,
            base_seed=base_seed,
            per_class=per_class,
            alpha=alpha,
            jobs=ctx.obj["jobs"],
        )
    except TrainingDiverged as exc:
        raise _NanAbort(str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    for row_label, _, _ in MODEL_ROWS:
        for family_label in FAMILY_LABELS:
            cell = grid[(row_label, family_label)]
            acc = cell["final_test_acc"]
            verdict = (cell["acceptance"] or {}).get("verdict", "-")
            click.echo(
                f"{row_label:28s} {family_label:22s} "
                f"{acc['mean']:.3f} +- {acc['std']:.3f}  {verdict}"
            )
    click.echo(f"artifacts in {out}")


@main.command(name="sweep")
@click.option("--family", type=FAMILY_CHOICE, default="orthogonal", show_default=True)
@click.option("--mu", type=float, default=None)
@click.option("--copies", default="2,5,10,15,20,30,50,75,100", show_default=True, help="Comma-separated copies-per-polytope values.")
@click.option("--seeds", type=int, default=10, show_default=True)
@click.option("--epochs", type=int, default=500, show_default=True)
@click.option("--base-seed", type=int, default=0, show_default=True)
@click.option("--per-class", type=int, default=100, show_default=True)
@click.option("-o", "--out", type=click.Path(file_okay=False), default=None)
@click.pass_context
def sweep_cmd(ctx, family, mu, copies, seeds, epochs, base_seed, per_class, out):
    """Data-efficiency sweep: baseline accuracy vs augmented copies per polytope."""
    tclass = _transform_class(family, mu)
    label = _family_label(family, tclass.mu)
    if label not in FAMILY_LABELS:
        raise click.UsageError(f"unsupported sweep family {label}; mu must be one of 0.5/1.5/3.0")
    try:
        copies_list = tuple(int(c) for c in copies.split(",") if c.strip())
    except ValueError:
        raise click.UsageError(f"--copies must be a comma-separated integer list, got {copies!r}")
    if not copies_list or min(copies_list) < 0:
        raise click.UsageError("--copies needs non-negative integers")
    out = out or os.path.join(ctx.obj["results_dir"], f"sweep-{label}")
    config = {
        "family": label,
        "copies": list(copies_list),
        "seeds": seeds,
        "epochs": epochs,
        "base_seed": base_seed,
        "per_class": per_class,
    }
    try:
        _echo_config(out, "sweep", config)
        points = run_efficiency_sweep(
            out,
            family_label=label,
            copies=copies_list,
            seeds=seeds,
            epochs=epochs,
            base_seed=base_seed,
            per_class=per_class,
            jobs=ctx.obj["jobs"],
        )
    except TrainingDiverged as exc:
        raise _NanAbort(str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo("copies,mean_acc,std_acc")
    for p in points:
        click.echo(f"{p['copies']},{p['mean']:.4f},{p['std']:.4f}")
    click.echo(f"artifacts in {out}")


@main.command(name="audit")
@click.option("--block", type=BLOCK_CHOICE, required=True)
@click.option("--map", "coordinate_map", type=MAP_CHOICE, default="identity", show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Init seed for an untrained model.")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), default=None, help="Audit this checkpoint instead of a fresh model.")
@click.option("--family", type=FAMILY_CHOICE, default=None, help="Restrict the audit to one family.")
@click.option("--mu", type=float, default=None)
@click.option("--transforms", type=int, default=100, show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--coord-tol", type=float, default=1e-10, show_default=True)
@click.option("-o", "--out", type=click.Path(file_okay=False), default=None)
@click.pass_context
def audit_cmd(ctx, block, coordinate_map, alpha, seed, checkpoint, family, mu, transforms, tol, coord_tol, out):
    """Numerically certify (or refute) logit invariance under sampled transforms."""
    if block == "gn" and coordinate_map != "none":
        coordinate_map = "none"
    if block != "gn" and coordinate_map == "none":
        raise click.UsageError("--map none is only valid with --block gn")
    if family is None:
        labels = AUDIT_FAMILY_LABELS
    else:
        tclass = _transform_class(family, mu)
        label = _family_label(family, tclass.mu)
        if label not in FAMILY_LABELS:
            raise click.UsageError(f"unsupported audit family {label}")
        labels = (label,)
    try:
        if checkpoint:
            model = load_checkpoint(checkpoint)
        else:
            model = ClassifierModel(
                kind=block,
                coordinate_map=None if coordinate_map == "none" else coordinate_map,
                alpha=alpha,
                seed=seed,
            )
        report = audit_equivariance(
            model, n_transforms=transforms, tol=tol, coord_tol=coord_tol, family_labels=labels
        )
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    if out:
        _echo_config(
            out,
            "audit",
            {"block": block, "coordinate_map": coordinate_map, "alpha": alpha, "seed": seed,
             "checkpoint": checkpoint, "families": list(labels), "transforms": transforms,
             "tol": tol, "coord_tol": coord_tol},
        )
        with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
    for label in labels:
        entry = report["families"][label]
        verdict = "PASS" if entry["pass"] else "FAIL"
        click.echo(f"{label:22s} {verdict}  logit_defect={entry['logit_defect']:.3e}")


if __name__ == "__main__":
    main()
