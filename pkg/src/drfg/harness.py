"""Experiment orchestration: ingest, extract, then repeated split/train/evaluate trials."""

from __future__ import annotations

import json
import logging
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from . import __version__, autoencoder, backbones, imaging, metrics, nn, tsne
from .classifiers import (PerceptronClassifier, PerceptronConfig, SvmClassifier,
                          SvmConfig)
from .errors import ConfigurationError, DrfgError, InvalidInputError
from .splits import AccessLog, Partition, split_dataset, trial_seed
from .store import FeatureSet, read_feature_store, write_feature_store

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}

# seed streams within a trial
_SPLIT, _AE_INIT, _AE_SHUFFLE, _SLP_INIT, _SLP_SHUFFLE, _MLP_INIT, _MLP_SHUFFLE, _SVM, \
    _TSNE = range(9)


# configuration ---------------------------------------------------------------

class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BackboneEntry(_Model):
    name: str
    path: str
    channels: int = Field(ge=1)
    preprocess: imaging.PreprocessMode = imaging.PreprocessMode.IDENTITY
    layout: Literal["nhwc", "nchw"] = "nhwc"


class TrainSettings(_Model):
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(40, ge=1)
    learning_rate: float = Field(0.001, ge=0)


class AutoencoderSettings(_Model):
    hidden_dim: int = Field(1024, ge=1)
    latent_dim: int = Field(256, ge=1)


class SvmSettings(_Model):
    kernel: Literal["linear", "rbf"] = "rbf"
    C: float = Field(1.0, gt=0)
    gamma: Union[Literal["scale"], float] = "scale"
    tol: float = Field(1e-3, gt=0)
    max_passes: int = Field(10, ge=1)
    max_sweeps: int = Field(1000, ge=1)


class TsneSettings(_Model):
    enabled: bool = True
    trial: int = Field(0, ge=0)
    perplexity: float = Field(30.0, gt=0)
    iterations: int = Field(1000, ge=250)
    learning_rate: float = Field(200.0, gt=0)


class ExperimentConfig(_Model):
    """JSON experiment document; relative paths resolve against the config file."""

    task: Literal["binary", "three_class"] = "three_class"
    n_trials: int = Field(50, ge=1)
    test_fraction: float = Field(0.2, gt=0, lt=1)
    master_seed: int = Field(0, ge=0)
    classifiers: list[Literal["slp", "mlp", "svm"]] = ["slp", "mlp", "svm"]
    dataset: Optional[str] = None
    feature_store: str = "features.bin"
    registry: Union[str, list[BackboneEntry], None] = None
    assignment: list[tuple[int, str, str]] = Field(
        default_factory=lambda: list(backbones.DEFAULT_ASSIGNMENT))
    binary_exclude: str = "Viral Pneumonia"
    autoencoder: AutoencoderSettings = AutoencoderSettings()
    autoencoder_train: TrainSettings = TrainSettings()
    classifier_train: TrainSettings = TrainSettings()
    mlp_hidden_dim: int = Field(128, ge=1)
    svm: SvmSettings = SvmSettings()
    tsne: TsneSettings = TsneSettings()
    output_dir: str = "results"

    _base: Path = PrivateAttr(default_factory=Path.cwd)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            cfg = cls.model_validate_json(path.read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        cfg._base = path.resolve().parent
        return cfg

    def with_base(self, base: str | Path) -> "ExperimentConfig":
        self._base = Path(base).resolve()
        return self

    def resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self._base / p

    @property
    def output_path(self) -> Path:
        return self.resolve(self.output_dir)

    @property
    def store_path(self) -> Path:
        return self.resolve(self.feature_store)

    def backbone_registry(self) -> list[backbones.BackboneSpec]:
        if self.registry is None:
            raise ConfigurationError("config has no backbone registry")
        if isinstance(self.registry, str):
            reg_path = self.resolve(self.registry)
            try:
                entries = json.loads(reg_path.read_text())
            except (OSError, ValueError) as exc:
                raise ConfigurationError(f"cannot read registry {reg_path}: {exc}") from exc
            entries = entries.get("backbones", entries) if isinstance(entries, dict) else entries
            return backbones.registry_from_config(
                [BackboneEntry.model_validate(e).model_dump(mode="json") for e in entries],
                reg_path.parent)
        return backbones.registry_from_config(
            [e.model_dump(mode="json") for e in self.registry], self._base)


# dataset ---------------------------------------------------------------------

@dataclass
class DatasetManifest:
    root: Path
    classes: dict[str, list[Path]]

    @property
    def counts(self) -> dict[str, int]:
        return {name: len(paths) for name, paths in self.classes.items()}

    def entries(self) -> list[tuple[str, Path]]:
        return [(name, p) for name, paths in self.classes.items() for p in paths]


def ingest_dataset(root: str | Path, classes: list[str] | None = None) -> DatasetManifest:
    """One subdirectory per class; files sorted lexicographically."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"dataset root {root} is not a directory")
    if classes is None:
        classes = sorted(d.name for d in root.iterdir() if d.is_dir())
    found: dict[str, list[Path]] = {}
    for name in classes:
        cdir = root / name
        if not cdir.is_dir():
            raise ConfigurationError(f"missing class directory {cdir}")
        files = sorted(p for p in cdir.rglob("*")
                       if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise InvalidInputError(f"class directory {cdir} contains no images")
        found[name] = files
    if not found:
        raise InvalidInputError(f"no class directories under {root}")
    manifest = DatasetManifest(root, found)
    log.info("ingested %s: %s", root, manifest.counts)
    return manifest


def _sample_id(manifest: DatasetManifest, path: Path) -> str:
    return path.relative_to(manifest.root).as_posix()


def extract_feature_store(manifest: DatasetManifest, registry, assignment,
                          out: str | Path | None = None) -> FeatureSet:
    """Raw (unstandardized) concatenated features for every image in the manifest."""
    classes = list(manifest.classes)
    rows, labels, ids = [], [], []
    for k, (name, path) in enumerate(manifest.entries()):
        img = imaging.load_and_resize(path)
        rows.append(backbones.extract_features(img, assignment, registry).astype(np.float32))
        labels.append(classes.index(name))
        ids.append(_sample_id(manifest, path))
        if (k + 1) % 100 == 0:
            log.info("extracted %d images", k + 1)
    fs = FeatureSet(np.stack(rows), np.array(labels), classes, ids)
    if out is not None:
        write_feature_store(out, fs)
    return fs


def extract_benchmark_store(manifest: DatasetManifest, spec: backbones.BackboneSpec,
                            out: str | Path | None = None) -> FeatureSet:
    """Single-backbone features on whole images resized to 224x224."""
    classes = list(manifest.classes)
    rows, labels, ids = [], [], []
    for name, path in manifest.entries():
        img = imaging.load_and_resize(path, size=imaging.QUADRANT_SIZE)
        rows.append(backbones.extract_single(img, spec).astype(np.float32))
        labels.append(classes.index(name))
        ids.append(_sample_id(manifest, path))
    fs = FeatureSet(np.stack(rows), np.array(labels), classes, ids)
    if out is not None:
        write_feature_store(out, fs)
    return fs


def task_view(fs: FeatureSet, cfg: ExperimentConfig) -> FeatureSet:
    """Drop the excluded class for the binary task."""
    if cfg.task == "three_class":
        return fs
    keep = [c for c in fs.classes if c.lower() != cfg.binary_exclude.lower()]
    if len(keep) != 2:
        raise ConfigurationError(
            f"binary task needs exactly two classes after excluding "
            f"{cfg.binary_exclude!r}, have {keep}")
    return fs.select_classes(keep)


# trials ----------------------------------------------------------------------

@dataclass
class TrialResult:
    trial: int
    records: dict[str, metrics.MetricsRecord]
    access: AccessLog
    embeddings: dict[str, tsne.Embedding] = field(default_factory=dict)
    autoencoder_loss: list[float] = field(default_factory=list)


@dataclass
class ExperimentReport:
    rows: list[tuple[int, str, metrics.MetricsRecord]]
    aggregates: dict[str, metrics.TrialAggregate]
    failures: dict[int, str]
    trials: list[TrialResult]
    outputs: dict[str, Path] = field(default_factory=dict)


def _train_cfg(s: TrainSettings, loss: str, seed: int) -> nn.TrainConfig:
    return nn.TrainConfig(batch_size=s.batch_size, epochs=s.epochs, loss=loss,
                          shuffle_seed=seed, learning_rate=s.learning_rate)


def _make_classifier(name: str, cfg: ExperimentConfig, n_classes: int, seed_of):
    cce = "categorical_cross_entropy"
    if name == "slp":
        return PerceptronClassifier(PerceptronConfig("slp", n_classes),
                                    _train_cfg(cfg.classifier_train, cce, seed_of(_SLP_SHUFFLE)),
                                    seed_of(_SLP_INIT))
    if name == "mlp":
        return PerceptronClassifier(PerceptronConfig("mlp", n_classes, cfg.mlp_hidden_dim),
                                    _train_cfg(cfg.classifier_train, cce, seed_of(_MLP_SHUFFLE)),
                                    seed_of(_MLP_INIT))
    s = cfg.svm
    return SvmClassifier(SvmConfig(s.kernel, s.C, s.gamma, s.tol, s.max_passes, s.max_sweeps,
                                   seed=seed_of(_SVM)))


def run_trial(fs: FeatureSet, cfg: ExperimentConfig, trial: int,
              use_autoencoder: bool = True) -> TrialResult:
    """One split -> standardize -> (autoencode) -> classify -> score cycle."""
    def seed_of(stream):
        return trial_seed(cfg.master_seed, trial, stream)

    train_idx, test_idx = split_dataset(fs.labels, cfg.test_fraction, seed_of(_SPLIT))
    access = AccessLog()
    train = Partition("train", fs.subset(train_idx), access)
    test = Partition("test", fs.subset(test_idx), access)

    std = backbones.fit_standardizer(train.read("standardizer.fit").values)
    train = Partition("train", _replace_values(train.data, std(train.data.values)), access)
    test = Partition("test", _replace_values(test.data, std(test.read("standardizer.apply").values)),
                     access)

    result = TrialResult(trial, {}, access)
    if use_autoencoder:
        ae_cfg = autoencoder.AutoencoderConfig(fs.dim, cfg.autoencoder.hidden_dim,
                                               cfg.autoencoder.latent_dim)
        params, history = autoencoder.train_autoencoder(
            train, ae_cfg, _train_cfg(cfg.autoencoder_train, "mse", seed_of(_AE_SHUFFLE)),
            seed=seed_of(_AE_INIT))
        result.autoencoder_loss = history
        train = Partition("train", _replace_values(train.data, autoencoder.encode(params, train)),
                          access)
        test = Partition("test", _replace_values(test.data, autoencoder.encode(params, test)),
                         access)

    if cfg.tsne.enabled and trial == cfg.tsne.trial:
        tcfg = tsne.TsneConfig(perplexity=cfg.tsne.perplexity, iterations=cfg.tsne.iterations,
                               learning_rate=cfg.tsne.learning_rate, seed=seed_of(_TSNE))
        for part in (train, test):
            data = part.read("tsne")
            labels = [data.classes[i] for i in data.labels]
            result.embeddings[part.role] = tsne.tsne_embed(
                data.values, _feasible_perplexity(tcfg, len(data)), data.sample_ids, labels)

    n_classes = len(fs.classes)
    y_test = test.data.labels
    for name in cfg.classifiers:
        clf = _make_classifier(name, cfg, n_classes, seed_of).fit(train)
        pred = clf.predict(test)
        cm = metrics.confusion_matrix(y_test, pred, n_classes)
        result.records[name] = metrics.classification_metrics(cm)
    return result


def _feasible_perplexity(tcfg: tsne.TsneConfig, n: int) -> tsne.TsneConfig:
    """Cap perplexity below (n - 1) / 3 so small splits still embed."""
    cap = (n - 1) / 3
    if tcfg.perplexity < cap:
        return tcfg
    capped = max(1.0, 0.99 * cap)
    log.warning("t-SNE perplexity %.3g too large for %d points; using %.3g",
                tcfg.perplexity, n, capped)
    return replace(tcfg, perplexity=capped)


def _replace_values(fs: FeatureSet, values: np.ndarray) -> FeatureSet:
    return FeatureSet(values, fs.labels, fs.classes, fs.sample_ids)


def _run_trials(fs: FeatureSet, cfg: ExperimentConfig, out_dir: Path,
                use_autoencoder: bool) -> ExperimentReport:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failures, trials = [], {}, []
    for t in range(cfg.n_trials):
        try:
            res = run_trial(fs, cfg, t, use_autoencoder)
        except DrfgError as exc:
            log.error("trial %d failed: %s", t, exc)
            failures[t] = str(exc)
            continue
        trials.append(res)
        for name in cfg.classifiers:
            rows.append((t, name, res.records[name]))
        log.info("trial %d: %s", t,
                 ", ".join(f"{k}={v.accuracy:.4f}" for k, v in res.records.items()))
    if not trials:
        raise DrfgError(f"all {cfg.n_trials} trials failed: {failures}")

    report = ExperimentReport(rows, metrics.aggregate_by_classifier(rows), failures, trials)
    report.outputs["trials"] = out_dir / "trials.csv"
    metrics.write_trials_csv(report.outputs["trials"], rows)
    report.outputs["aggregate"] = out_dir / "aggregate.json"
    metrics.write_aggregate_json(report.outputs["aggregate"], report.aggregates,
                                 {"task": cfg.task, "classes": fs.classes,
                                  "failed_trials": {str(k): v for k, v in failures.items()}})
    for res in trials:
        for role, emb in res.embeddings.items():
            key = f"tsne_{role}"
            report.outputs[key] = out_dir / f"{key}.csv"
            tsne.write_embedding_csv(report.outputs[key], emb)
    report.outputs["run_log"] = out_dir / "run_log.json"
    _write_run_log(report.outputs["run_log"], cfg, fs, report, use_autoencoder)
    return report


def _write_run_log(path: Path, cfg: ExperimentConfig, fs: FeatureSet, report, use_ae: bool):
    import onnxruntime

    doc = {
        "drfg": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "onnxruntime": onnxruntime.__version__,
        "config": cfg.model_dump(mode="json"),
        "autoencoder": use_ae,
        "n_samples": len(fs),
        "feature_dim": fs.dim,
        "trial_seeds": {t: trial_seed(cfg.master_seed, t) for t in range(cfg.n_trials)},
        "failed_trials": {str(k): v for k, v in report.failures.items()},
        "autoencoder_final_loss": {r.trial: r.autoencoder_loss[-1]
                                   for r in report.trials if r.autoencoder_loss},
    }
    path.write_text(json.dumps(doc, indent=2, default=str) + "\n")


def load_or_extract(cfg: ExperimentConfig) -> FeatureSet:
    store = cfg.store_path
    if store.exists():
        return read_feature_store(store)
    if cfg.dataset is None:
        raise ConfigurationError(f"feature store {store} missing and no dataset configured")
    manifest = ingest_dataset(cfg.resolve(cfg.dataset))
    store.parent.mkdir(parents=True, exist_ok=True)
    return extract_feature_store(manifest, cfg.backbone_registry(), cfg.assignment, store)


def run_experiment(cfg: ExperimentConfig, features: FeatureSet | None = None) -> ExperimentReport:
    """The full pipeline over ``cfg.n_trials`` re-split trials."""
    fs = features if features is not None else load_or_extract(cfg)
    return _run_trials(task_view(fs, cfg), cfg, cfg.output_path, use_autoencoder=True)


def run_benchmark(cfg: ExperimentConfig, backbone: str,
                  features: FeatureSet | None = None) -> ExperimentReport:
    """Same protocol on one backbone's whole-image features, without the autoencoder."""
    out_dir = cfg.output_path / f"benchmark_{backbone}"
    if features is None:
        specs = {s.name: s for s in cfg.backbone_registry()}
        if backbone not in specs:
            raise ConfigurationError(f"unknown backbone {backbone!r}; have {sorted(specs)}")
        store = cfg.store_path.with_name(f"benchmark_{backbone}.bin")
        if store.exists():
            features = read_feature_store(store)
        else:
            if cfg.dataset is None:
                raise ConfigurationError("benchmark extraction needs a dataset")
            manifest = ingest_dataset(cfg.resolve(cfg.dataset))
            features = extract_benchmark_store(manifest, specs[backbone], store)
    return _run_trials(task_view(features, cfg), cfg, out_dir, use_autoencoder=False)
