"""Command-line entry point: ``drfg <subcommand>``."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import autoencoder, backbones, harness, metrics, nn, tsne
from .errors import DrfgError
from .splits import split_dataset, trial_seed
from .store import FeatureSet, read_checkpoint, read_feature_store, write_checkpoint, \
    write_feature_store


def _fail(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


def _print_aggregates(report: harness.ExperimentReport):
    for name, agg in report.aggregates.items():
        a = agg.accuracy
        click.echo(f"{name:4s} n={agg.n_trials:3d} accuracy mean={a.mean:.4f} "
                   f"median={a.median:.4f} [{a.min:.4f}, {a.max:.4f}]")
    for key, path in report.outputs.items():
        click.echo(f"wrote {key}: {path}")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), help="Feature store path (default: from config).")
def extract(config_path, out):
    """Dataset images -> raw concatenated feature store."""
    try:
        cfg = harness.ExperimentConfig.load(config_path)
        if cfg.dataset is None:
            raise DrfgError("config has no dataset")
        manifest = harness.ingest_dataset(cfg.resolve(cfg.dataset))
        out = Path(out) if out else cfg.store_path
        out.parent.mkdir(parents=True, exist_ok=True)
        fs = harness.extract_feature_store(manifest, cfg.backbone_registry(), cfg.assignment, out)
    except DrfgError as exc:
        _fail(exc)
    click.echo(f"{len(fs)} samples x {fs.dim} features, classes {manifest.counts} -> {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--trials", type=int, help="Override n_trials.")
@click.option("--seed", type=int, help="Override master_seed.")
def experiment(config_path, trials, seed):
    """Run the full repeated-trial pipeline."""
    try:
        cfg = harness.ExperimentConfig.load(config_path)
        if trials is not None:
            cfg.n_trials = trials
        if seed is not None:
            cfg.master_seed = seed
        report = harness.run_experiment(cfg)
    except DrfgError as exc:
        _fail(exc)
    _print_aggregates(report)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--backbone", required=True, help="Registry name of the single backbone.")
@click.option("--trials", type=int, help="Override n_trials.")
def benchmark(config_path, backbone, trials):
    """Single-backbone baseline on whole 224x224 images, no autoencoder."""
    try:
        cfg = harness.ExperimentConfig.load(config_path)
        if trials is not None:
            cfg.n_trials = trials
        report = harness.run_benchmark(cfg, backbone)
    except DrfgError as exc:
        _fail(exc)
    _print_aggregates(report)


@main.command("tsne")
@click.option("--store", required=True, type=click.Path(exists=True),
              help="Feature or latent store.")
@click.option("--out", required=True, type=click.Path(), help="Embedding CSV path.")
@click.option("--perplexity", default=30.0, show_default=True)
@click.option("--iterations", default=1000, show_default=True)
@click.option("--learning-rate", default=200.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--standardize/--no-standardize", default=False,
              help="z-score the store before embedding.")
def tsne_cmd(store, out, perplexity, iterations, learning_rate, seed, standardize):
    """Embed a store into 2-D and write sample_id,label,x,y."""
    try:
        fs = read_feature_store(store)
        X = fs.values.astype(np.float64)
        if standardize:
            X = backbones.fit_standardizer(X)(X)
        cfg = tsne.TsneConfig(perplexity=perplexity, iterations=iterations,
                              learning_rate=learning_rate, seed=seed)
        emb = tsne.tsne_embed(X, cfg, fs.sample_ids, [fs.classes[i] for i in fs.labels])
        tsne.write_embedding_csv(out, emb)
    except DrfgError as exc:
        _fail(exc)
    click.echo(f"final KL {emb.kl_history[-1]:.4f}; wrote {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--trial", default=0, show_default=True, help="Trial whose split is used.")
@click.option("--out-dir", type=click.Path(), help="Default: <output_dir>/encode_trial<N>.")
@click.option("--checkpoint-dir", type=click.Path(),
              help="Reuse autoencoder.ckpt/standardizer.ckpt from here if present.")
def encode(config_path, trial, out_dir, checkpoint_dir):
    """Train (or load) the autoencoder for one split and write latent stores."""
    try:
        cfg = harness.ExperimentConfig.load(config_path)
        fs = harness.task_view(harness.load_or_extract(cfg), cfg)
        out_dir = Path(out_dir) if out_dir else cfg.output_path / f"encode_trial{trial}"
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else out_dir
        ae_path, std_path = ckpt_dir / "autoencoder.ckpt", ckpt_dir / "standardizer.ckpt"

        train_idx, test_idx = split_dataset(fs.labels, cfg.test_fraction,
                                            trial_seed(cfg.master_seed, trial))
        train, test = fs.subset(train_idx), fs.subset(test_idx)
        if ae_path.exists() and std_path.exists():
            params, _ = nn.load_params(ae_path)
            _, (means, devs) = read_checkpoint(std_path)
            std = backbones.Standardizer(means, devs)
            click.echo(f"loaded checkpoints from {ckpt_dir}")
        else:
            std = backbones.fit_standardizer(train.values)
            ae_cfg = autoencoder.AutoencoderConfig(fs.dim, cfg.autoencoder.hidden_dim,
                                                   cfg.autoencoder.latent_dim)
            tcfg = nn.TrainConfig(cfg.autoencoder_train.batch_size, cfg.autoencoder_train.epochs,
                                  "mse", trial_seed(cfg.master_seed, trial, 2),
                                  cfg.autoencoder_train.learning_rate)
            params, history = autoencoder.train_autoencoder(
                std(train.values), ae_cfg, tcfg, seed=trial_seed(cfg.master_seed, trial, 1))
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            nn.save_params(ae_path, params, {"loss_history": history})
            write_checkpoint(std_path, {"kind": "standardizer"}, [std.means, std.deviations])
            click.echo(f"trained autoencoder, final loss {history[-1]:.5f}")
        for name, part in (("train", train), ("test", test)):
            latent = autoencoder.encode(params, std(part.values))
            path = out_dir / f"latent_{name}.bin"
            write_feature_store(path, FeatureSet(latent, part.labels, part.classes,
                                                 part.sample_ids))
            click.echo(f"wrote {path} ({len(part)} x {latent.shape[1]})")
    except DrfgError as exc:
        _fail(exc)


@main.command("metrics")
@click.option("--trials", "trials_csv", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), help="Aggregate JSON (default: print only).")
def metrics_cmd(trials_csv, out):
    """Recompute box-plot aggregates from a per-trial CSV."""
    try:
        aggs = metrics.aggregate_by_classifier(metrics.read_trials_csv(trials_csv))
    except DrfgError as exc:
        _fail(exc)
    if out:
        metrics.write_aggregate_json(out, aggs)
    click.echo(json.dumps({k: v.to_dict() for k, v in aggs.items()}, indent=2))


@main.command("demo-setup")
@click.argument("root", type=click.Path())
@click.option("--per-class", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
def demo_setup(root, per_class, seed):
    """Write a synthetic dataset, stub backbone graphs and a small config."""
    from .stubs import make_demo_workspace

    path = make_demo_workspace(root, per_class=per_class, seed=seed)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
