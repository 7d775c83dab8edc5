"""Pipeline orchestration: ingest -> outliers -> augment ->
select-features -> tune -> train -> evaluate -> report, as composable
subcommands with a single seeded configuration and cached, resumable
stage artifacts."""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import augment as augment_mod
from . import blendnet as blendnet_mod
from . import dataset as dataset_mod
from . import ensemble as ensemble_mod
from . import features as features_mod
from . import learners as learners_mod
from . import metrics as metrics_mod
from . import outlier as outlier_mod
from . import pso as pso_mod
from . import synthetic as synthetic_mod

MODEL_ORDER = ("svm", "ert", "gb", "mlp", "knn", "lr")
ENSEMBLE_ORDER = ("vote", "average", "greedy_weighted", "blendnet")
STAGES = ("ingest", "outliers", "augment", "select", "tune", "train", "evaluate", "report")


def subseed(seed: int, tag: str) -> int:
    """Stable per-component child seed."""
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


# ---------------------------------------------------------------------------
# configuration


@dataclass
class OutlierSection:
    enabled: bool = True
    iqr_k: float = 3.0
    hampel_k: float = 3.0
    window: int = 5
    max_changepoints: int = 8
    prior_penalty: float | None = None
    flag_policy: str = "union"
    apply_to_test: bool = True


@dataclass
class AugmentSection:
    enabled: bool = True
    ratio: float = 1.5
    noise_scale: float = 0.05


@dataclass
class FeatureSection:
    enabled: bool = True
    k: int = 10
    estimator: str = "gb"
    cv_folds: int = 3
    k_curve: tuple = ()  # feature counts for the score-vs-k CSV; empty skips


@dataclass
class PsoSection:
    enabled: bool = True
    n_particles: int = 10
    iterations: int = 10
    c1: float = 1.5
    c2: float = 1.5
    inertia: float = 0.5
    cv_folds: int = 3
    max_rows: int | None = None
    models: tuple = MODEL_ORDER


@dataclass
class GreedySection:
    lam: float = 1e-3
    delta: float = 0.05
    max_passes: int = 200
    tolerance: float = 1e-6


@dataclass
class TrainSection:
    val_fraction: float = 0.2
    oof_folds: int = 5
    ensembles: tuple = ("vote", "average", "greedy_weighted", "blendnet")


@dataclass
class BlendnetSection:
    epochs: int = 50
    batch_size: int = 512
    learning_rate: float = 1e-3
    dropout: float = 0.3


@dataclass
class EvaluateSection:
    n_boot: int = 200
    calibration_bins: int = 10
    bootstrap_scope: str = "test"  # test | full


@dataclass
class PipelineConfig:
    data: str = ""
    schema: str = ""
    out_dir: str = "out"
    seed: int = 42
    test_fraction: float = 0.2
    outliers: OutlierSection = field(default_factory=OutlierSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    features: FeatureSection = field(default_factory=FeatureSection)
    pso: PsoSection = field(default_factory=PsoSection)
    greedy: GreedySection = field(default_factory=GreedySection)
    train: TrainSection = field(default_factory=TrainSection)
    blendnet: BlendnetSection = field(default_factory=BlendnetSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)


def _parse_value(text, current):
    text = text.strip()
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean {text!r}")
    if isinstance(current, tuple):
        if not text:
            return ()
        items = [t.strip() for t in text.split(",") if t.strip()]
        if current and isinstance(current[0], int):
            return tuple(int(i) for i in items)
        return tuple(items)
    if current is None or isinstance(current, float):
        if not text:
            return None
        return float(text)
    if isinstance(current, int):
        if not text:
            return None
        return int(text)
    return text


def _apply_section(obj, parser: configparser.ConfigParser, section: str):
    if not parser.has_section(section):
        return
    known = {f.name for f in fields(obj)}
    for key, raw in parser.items(section):
        if key not in known:
            raise ValueError(f"[{section}] unknown key {key!r}")
        setattr(obj, key, _parse_value(raw, getattr(obj, key)))


def load_config(path=None, seed=None, out_dir=None, data=None, schema=None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path)
        if parser.has_section("paths"):
            cfg.data = parser.get("paths", "data", fallback=cfg.data)
            cfg.schema = parser.get("paths", "schema", fallback=cfg.schema)
            cfg.out_dir = parser.get("paths", "out_dir", fallback=cfg.out_dir)
        if parser.has_section("pipeline"):
            cfg.seed = parser.getint("pipeline", "seed", fallback=cfg.seed)
            cfg.test_fraction = parser.getfloat(
                "pipeline", "test_fraction", fallback=cfg.test_fraction
            )
        _apply_section(cfg.outliers, parser, "outliers")
        _apply_section(cfg.augment, parser, "augment")
        _apply_section(cfg.features, parser, "features")
        _apply_section(cfg.pso, parser, "pso")
        _apply_section(cfg.greedy, parser, "greedy")
        _apply_section(cfg.train, parser, "train")
        _apply_section(cfg.blendnet, parser, "blendnet")
        _apply_section(cfg.evaluate, parser, "evaluate")
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.out_dir = out_dir
    if data is not None:
        cfg.data = data
    if schema is not None:
        cfg.schema = schema
    return cfg


# ---------------------------------------------------------------------------
# stage plumbing


def _stage_dir(cfg, name):
    path = os.path.join(cfg.out_dir, name)
    os.makedirs(path, exist_ok=True)
    return path


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return h.hexdigest()


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_hash(stage_path):
    p = os.path.join(stage_path, "stage.hash")
    if os.path.exists(p):
        with open(p, encoding="utf-8") as fh:
            return fh.read().strip()
    return None


def _finish_stage(stage_path, stage_hash):
    with open(os.path.join(stage_path, "stage.hash"), "w", encoding="utf-8") as fh:
        fh.write(stage_hash + "\n")


def _is_cached(stage_path, stage_hash, artifact_names):
    if _read_hash(stage_path) != stage_hash:
        return False
    return all(os.path.exists(os.path.join(stage_path, a)) for a in artifact_names)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _section_dict(obj):
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


# ---------------------------------------------------------------------------
# stages


def stage_ingest(cfg: PipelineConfig) -> str:
    path = _stage_dir(cfg, "ingest")
    if not cfg.data or not os.path.exists(cfg.data):
        raise FileNotFoundError(f"data file not found: {cfg.data!r}")
    if not cfg.schema or not os.path.exists(cfg.schema):
        raise FileNotFoundError(f"schema file not found: {cfg.schema!r}")
    stage_hash = _digest(
        "ingest", _file_digest(cfg.data), _file_digest(cfg.schema),
        cfg.seed, cfg.test_fraction,
    )
    artifacts = ("encoded.npz", "split.txt", "retention.txt")
    if _is_cached(path, stage_hash, artifacts):
        return stage_hash

    schema = dataset_mod.read_schema(cfg.schema)
    raw = dataset_mod.ingest_csv(cfg.data, schema)
    filtered = dataset_mod.drop_missing(raw)
    fraction = dataset_mod.retained_fraction(raw, filtered)
    enc = dataset_mod.encode(filtered)
    sp = dataset_mod.split(enc, cfg.test_fraction, subseed(cfg.seed, "split"))

    np.savez(
        os.path.join(path, "encoded.npz"),
        X=enc.X, y=enc.y,
        feature_names=np.asarray(enc.feature_names),
        numeric_mask=enc.numeric_mask,
    )
    dataset_mod.save_split(os.path.join(path, "split.txt"), sp)
    _write_text(
        os.path.join(path, "retention.txt"),
        f"rows_before: {raw.n_rows}\nrows_after: {filtered.n_rows}\n"
        f"retained_fraction: {fraction!r}\n",
    )
    _finish_stage(path, stage_hash)
    return stage_hash


def _load_encoded(cfg):
    path = os.path.join(cfg.out_dir, "ingest")
    with np.load(os.path.join(path, "encoded.npz"), allow_pickle=False) as data:
        X = data["X"]
        y = data["y"]
        names = [str(n) for n in data["feature_names"]]
        numeric_mask = data["numeric_mask"]
    sp = dataset_mod.load_split(os.path.join(path, "split.txt"), seed=cfg.seed)
    return X, y, names, numeric_mask, sp


def fit_outlier_correction(X, numeric_mask, train_idx, test_idx, section: OutlierSection):
    """Correct numeric columns; detectors are fitted on train rows only.

    Train rows run the full segmentation pipeline; test rows are
    screened against whole-train-column thresholds when apply_to_test is
    set. Returns (corrected matrix, flag records, per-column bounds).
    """
    X = np.asarray(X, dtype=np.float64).copy()
    records = []  # (column_index, row_index, source, original, corrected)
    bounds = {}
    bcfg = outlier_mod.BcpHiConfig(
        iqr_k=section.iqr_k, hampel_k=section.hampel_k, window=section.window,
        max_changepoints=section.max_changepoints,
        prior_penalty=section.prior_penalty, flag_policy=section.flag_policy,
    )
    for j in np.flatnonzero(numeric_mask):
        col_train = X[train_idx, j]
        corrected, flags, _segs = outlier_mod.run_bcp_hi(col_train, bcfg)
        for local in flags.indices:
            local = int(local)
            row = int(train_idx[local])
            records.append((int(j), row, flags.source[local],
                            float(col_train[local]), float(corrected[local])))
        X[train_idx, j] = corrected
        bounds[int(j)] = outlier_mod.fit_column_bounds(col_train, bcfg)
        if section.apply_to_test and test_idx is not None and len(test_idx):
            col_test = X[test_idx, j]
            fixed, tflags = outlier_mod.apply_column_bounds(
                col_test, bounds[int(j)], section.window
            )
            for local in tflags.indices:
                local = int(local)
                row = int(test_idx[local])
                records.append((int(j), row, tflags.source[local],
                                float(col_test[local]), float(fixed[local])))
            X[test_idx, j] = fixed
    return X, records, bounds


def stage_outliers(cfg: PipelineConfig, upstream: str) -> str:
    path = _stage_dir(cfg, "outliers")
    stage_hash = _digest("outliers", upstream, _section_dict(cfg.outliers))
    artifacts = ("corrected.npz", "flags.csv")
    if _is_cached(path, stage_hash, artifacts):
        return stage_hash

    X, y, names, numeric_mask, sp = _load_encoded(cfg)
    if cfg.outliers.enabled:
        X, records, _bounds = fit_outlier_correction(
            X, numeric_mask, sp.train_indices, sp.test_indices, cfg.outliers
        )
    else:
        records = []
    np.savez(os.path.join(path, "corrected.npz"), X=X)
    lines = ["column,row_index,source,original,corrected"]
    for j, row, source, original, corrected in records:
        lines.append(f"{names[j]},{row},{source},{original!r},{corrected!r}")
    _write_text(os.path.join(path, "flags.csv"), "\n".join(lines) + "\n")
    _finish_stage(path, stage_hash)
    return stage_hash


def fit_augmentation(X, y, numeric_mask, train_idx, test_idx,
                     section: AugmentSection, seed: int):
    """Quantile-transform numeric features (fit on train), then balance
    the training rows. Test rows are transformed, never resampled."""
    num_cols = np.flatnonzero(numeric_mask)
    X_tr = np.asarray(X, dtype=np.float64)[train_idx].copy()
    X_te = np.asarray(X, dtype=np.float64)[test_idx].copy()
    y_tr = np.asarray(y)[train_idx]
    qt = None
    if num_cols.size:
        qt, Z = augment_mod.quantile_fit_transform(X_tr[:, num_cols])
        X_tr[:, num_cols] = Z
        X_te[:, num_cols] = augment_mod.quantile_apply(qt, X_te[:, num_cols])
    if not section.enabled:
        return X_tr, y_tr, X_tr.copy(), X_te, qt
    counts = np.bincount(y_tr, minlength=2)
    plan = augment_mod.AugmentationPlan.from_counts(
        int(counts.min()), ratio=section.ratio,
        noise_scale=section.noise_scale, seed=subseed(seed, "augment"),
    )
    X_bal, y_bal = augment_mod.balance(X_tr, y_tr, plan, noise_columns=numeric_mask)
    return X_bal, y_bal, X_tr, X_te, qt


def stage_augment(cfg: PipelineConfig, upstream: str) -> str:
    path = _stage_dir(cfg, "augment")
    stage_hash = _digest("augment", upstream, _section_dict(cfg.augment), cfg.seed)
    artifacts = ("train.npz", "test.npz", "train_plain.npz")
    if _is_cached(path, stage_hash, artifacts):
        return stage_hash

    _, y, names, numeric_mask, sp = _load_encoded(cfg)
    with np.load(os.path.join(cfg.out_dir, "outliers", "corrected.npz")) as data:
        X = data["X"]
    X_bal, y_bal, X_tr_plain, X_te, _qt = fit_augmentation(
        X, y, numeric_mask, sp.train_indices, sp.test_indices, cfg.augment, cfg.seed
    )
    np.savez(os.path.join(path, "train.npz"), X=X_bal, y=y_bal)
    np.savez(os.path.join(path, "train_plain.npz"),
             X=X_tr_plain, y=y[sp.train_indices])
    np.savez(os.path.join(path, "test.npz"), X=X_te, y=y[sp.test_indices])
    _finish_stage(path, stage_hash)
    return stage_hash


def stage_select(cfg: PipelineConfig, upstream: str) -> str:
    path = _stage_dir(cfg, "select")
    stage_hash = _digest("select", upstream, _section_dict(cfg.features), cfg.seed)
    artifacts = ("selected.txt", "train.npz", "test.npz", "train_plain.npz")
    if _is_cached(path, stage_hash, artifacts):
        return stage_hash

    _, _, names, _, _ = _load_encoded(cfg)
    aug_dir = os.path.join(cfg.out_dir, "augment")
    with np.load(os.path.join(aug_dir, "train.npz")) as data:
        X_tr, y_tr = data["X"], data["y"]
    with np.load(os.path.join(aug_dir, "train_plain.npz")) as data:
        X_plain, y_plain = data["X"], data["y"]
    with np.load(os.path.join(aug_dir, "test.npz")) as data:
        X_te, y_te = data["X"], data["y"]

    if cfg.features.enabled and cfg.features.k < X_tr.shape[1]:
        result = features_mod.rfe(
            X_tr, y_tr, cfg.features.estimator, cfg.features.k,
            seed=subseed(cfg.seed, "rfe"), feature_names=names,
        )
        selected = result.selected
    else:
        selected = list(names)
    index_of = {n: j for j, n in enumerate(names)}
    cols = sorted(index_of[n] for n in selected)
    _write_text(os.path.join(path, "selected.txt"),
                "\n".join(names[j] for j in cols) + "\n")

    if cfg.features.enabled and cfg.features.k_curve:
        curve = features_mod.cv_score_vs_k(
            X_tr, y_tr, cfg.features.estimator, cfg.features.k_curve,
            folds=cfg.features.cv_folds, seed=subseed(cfg.seed, "kcurve"),
            feature_names=names,
        )
        lines = ["k,score"] + [f"{k},{curve[k]!r}" for k in sorted(curve)]
        _write_text(os.path.join(path, "kcurve.csv"), "\n".join(lines) + "\n")

    np.savez(os.path.join(path, "train.npz"), X=X_tr[:, cols], y=y_tr)
    np.savez(os.path.join(path, "train_plain.npz"), X=X_plain[:, cols], y=y_plain)
    np.savez(os.path.join(path, "test.npz"), X=X_te[:, cols], y=y_te)
    _finish_stage(path, stage_hash)
    return stage_hash


def _load_selected(cfg):
    sel_dir = os.path.join(cfg.out_dir, "select")
    with np.load(os.path.join(sel_dir, "train.npz")) as data:
        X_tr, y_tr = data["X"], data["y"]
    with np.load(os.path.join(sel_dir, "train_plain.npz")) as data:
        X_plain, y_plain = data["X"], data["y"]
    with np.load(os.path.join(sel_dir, "test.npz")) as data:
        X_te, y_te = data["X"], data["y"]
    return X_tr, y_tr, X_plain, y_plain, X_te, y_te


def _spec_path(cfg, kind):
    return os.path.join(cfg.out_dir, "tune", f"spec_{kind}.txt")


def _write_spec(path, spec):
    lines = [f"kind={spec.kind}"]
    for name in sorted(spec.hyperparameters):
        lines.append(f"{name}={spec.hyperparameters[name]!r}")
    _write_text(path, "\n".join(lines) + "\n")


def _read_spec(path):
    kind = None
    hp = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            if key == "kind":
                kind = value
            elif key:
                parsed = float(value)
                hp[key] = int(parsed) if parsed == int(parsed) else parsed
    spec = learners_mod.ClassifierSpec(kind=kind, hyperparameters=hp)
    spec.validate()
    return spec


def stage_tune(cfg: PipelineConfig, upstream: str) -> str:
    path = _stage_dir(cfg, "tune")
    stage_hash = _digest("tune", upstream, _section_dict(cfg.pso), cfg.seed)
    artifacts = [f"spec_{kind}.txt" for kind in MODEL_ORDER]
    if _is_cached(path, stage_hash, artifacts):
        return stage_hash

    X_tr, y_tr, *_ = _load_selected(cfg)
    for kind in MODEL_ORDER:
        if cfg.pso.enabled and kind in cfg.pso.models:
            config = pso_mod.SwarmConfig(
                n_particles=cfg.pso.n_particles, c1=cfg.pso.c1, c2=cfg.pso.c2,
                inertia=cfg.pso.inertia, iterations=cfg.pso.iterations,
                seed=subseed(cfg.seed, f"pso-{kind}"),
            )
            spec, trace = pso_mod.tune_model(
                kind, X_tr, y_tr, config=config, cv_folds=cfg.pso.cv_folds,
                max_rows=cfg.pso.max_rows, with_trace=True,
            )
            lines = ["iteration,best_fitness"]
            lines += [f"{i},{float(v)!r}" for i, v in enumerate(trace)]
            _write_text(os.path.join(path, f"trace_{kind}.csv"), "\n".join(lines) + "\n")
        else:
            spec = learners_mod.default_spec(kind)
        _write_spec(_spec_path(cfg, kind), spec)
    _finish_stage(path, stage_hash)
    return stage_hash


def fit_models_and_weights(X_tr, y_tr, specs, train_section: TrainSection,
                           greedy_section: GreedySection,
                           blend_section: BlendnetSection, seed: int):
    """Training-data-only model fitting and ensemble construction.

    Returns (final models, greedy weights, softmax alternative, blendnet
    model or None, out-of-fold probabilities, fold ids).
    """
    fit_idx, val_idx = dataset_mod.stratified_holdout(
        y_tr, train_section.val_fraction, subseed(seed, "val")
    )
    val_probs = []
    for kind in MODEL_ORDER:
        m = learners_mod.fit(specs[kind], X_tr[fit_idx], y_tr[fit_idx],
                             seed=subseed(seed, f"val-fit-{kind}"))
        val_probs.append(learners_mod.predict_proba(m, X_tr[val_idx]))
    bundle = ensemble_mod.PredictionBundle(
        probabilities=np.asarray(val_probs), labels=y_tr[val_idx],
        model_names=list(MODEL_ORDER),
    )
    gcfg = ensemble_mod.GreedyConfig(
        lam=greedy_section.lam, delta=greedy_section.delta,
        max_passes=greedy_section.max_passes, tolerance=greedy_section.tolerance,
    )
    weights = ensemble_mod.greedy_weights(bundle, gcfg)
    val_aucs = [metrics_mod.roc_auc(y_tr[val_idx], p)[1] for p in val_probs]
    softmax = ensemble_mod.softmax_weights(val_aucs)

    final_models = {}
    for kind in MODEL_ORDER:
        final_models[kind] = learners_mod.fit(
            specs[kind], X_tr, y_tr, seed=subseed(seed, f"fit-{kind}")
        )

    oof = np.empty((len(MODEL_ORDER), y_tr.size))
    fold_of = None
    for i, kind in enumerate(MODEL_ORDER):
        def fit_predict(train_rows, test_rows, _kind=kind):
            m = learners_mod.fit(specs[_kind], X_tr[train_rows], y_tr[train_rows],
                                 seed=subseed(seed, f"oof-{_kind}"))
            return learners_mod.predict_proba(m, X_tr[test_rows])

        oof[i], fold_of = ensemble_mod.out_of_fold_probabilities(
            fit_predict, y_tr, folds=train_section.oof_folds,
            seed=subseed(seed, "oof-folds"),
        )

    blend_model = None
    if "blendnet" in train_section.ensembles:
        meta_train = ensemble_mod.stack_meta_features(
            oof, ensemble_mod.plain_average(oof),
            ensemble_mod.weighted_average(oof, weights),
        )
        bn_config = blendnet_mod.BlendNetConfig(
            dropout_rate=blend_section.dropout, epochs=blend_section.epochs,
            batch_size=blend_section.batch_size,
            learning_rate=blend_section.learning_rate,
            seed=subseed(seed, "blendnet"),
        )
        blend_model = blendnet_mod.build(meta_train.shape[1], bn_config)
        blendnet_mod.train(blend_model, meta_train, y_tr, bn_config)
    return final_models, weights, softmax, blend_model, oof, fold_of


def stage_train(cfg: PipelineConfig, upstream: str) -> str:
    path = _stage_dir(cfg, "train")
    stage_hash = _digest(
        "train", upstream, _section_dict(cfg.train), _section_dict(cfg.greedy),
        _section_dict(cfg.blendnet), cfg.seed,
    )
    artifacts = [f"model_{kind}.npz" for kind in MODEL_ORDER] + ["weights.csv"]
    if "blendnet" in cfg.train.ensembles:
        artifacts.append("blendnet.npz")
    if _is_cached(path, stage_hash, artifacts):
        return stage_hash

    X_tr, y_tr, *_ = _load_selected(cfg)
    specs = {kind: _read_spec(_spec_path(cfg, kind)) for kind in MODEL_ORDER}
    models, weights, softmax, blend_model, _oof, _folds = fit_models_and_weights(
        X_tr, y_tr, specs, cfg.train, cfg.greedy, cfg.blendnet, cfg.seed
    )
    for kind in MODEL_ORDER:
        learners_mod.save_model(os.path.join(path, f"model_{kind}.npz"), models[kind])
    lines = ["model_name,weight"]
    lines += [f"{k},{float(w)!r}" for k, w in zip(MODEL_ORDER, weights.w)]
    _write_text(os.path.join(path, "weights.csv"), "\n".join(lines) + "\n")
    lines = ["model_name,weight"]
    lines += [f"{k},{float(w)!r}" for k, w in zip(MODEL_ORDER, softmax.w)]
    _write_text(os.path.join(path, "weights_softmax.csv"), "\n".join(lines) + "\n")
    if blend_model is not None:
        blendnet_mod.save_model(os.path.join(path, "blendnet.npz"), blend_model)
        lines = ["epoch,loss"]
        lines += [f"{i},{float(v)!r}" for i, v in enumerate(blend_model.loss_trace)]
        _write_text(os.path.join(path, "blendnet_trace.csv"), "\n".join(lines) + "\n")
    _finish_stage(path, stage_hash)
    return stage_hash


def _load_weights(path):
    names, values = [], []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            name, _, value = line.strip().partition(",")
            if name:
                names.append(name)
                values.append(float(value))
    return names, np.asarray(values)


def predictor_probabilities(models, weights_w, blend_model, X, ensembles):
    """Probability vector per predictor name, in reporting order."""
    base = np.asarray([
        learners_mod.predict_proba(models[kind], X) for kind in MODEL_ORDER
    ])
    out = {kind: base[i] for i, kind in enumerate(MODEL_ORDER)}
    hard = (base >= 0.5).astype(np.int64)
    if "vote" in ensembles:
        # vote fraction doubles as the score for ranking metrics
        out["vote"] = hard.mean(axis=0)
    if "average" in ensembles:
        out["average"] = ensemble_mod.plain_average(base)
    if "greedy_weighted" in ensembles or "blendnet" in ensembles:
        weighted = ensemble_mod.weighted_average(base, weights_w)
        if "greedy_weighted" in ensembles:
            out["greedy_weighted"] = weighted
    if "blendnet" in ensembles and blend_model is not None:
        meta = ensemble_mod.stack_meta_features(
            base, ensemble_mod.plain_average(base), weighted
        )
        out["blendnet"] = blendnet_mod.predict_proba(blend_model, meta)
    return out


def _metrics_json(report):
    cm = report.confusion_matrix
    payload = {
        "model": report.model_name,
        "confusion": {"tp": cm.tp, "tn": cm.tn, "fp": cm.fp, "fn": cm.fn},
        "class_0": vars(report.classification.per_class[0]),
        "class_1": vars(report.classification.per_class[1]),
        "macro": vars(report.classification.macro),
        "auc": report.auc,
        "auc_boot_mean": report.bootstrap.mean,
        "auc_boot_std": report.bootstrap.std,
        "auc_ci_low": report.bootstrap.ci_low,
        "auc_ci_high": report.bootstrap.ci_high,
        "brier": report.brier,
        "log_loss": report.log_loss,
    }
    return json.dumps(payload, sort_keys=True, indent=1)


def stage_evaluate(cfg: PipelineConfig, upstream: str) -> str:
    path = _stage_dir(cfg, "evaluate")
    stage_hash = _digest("evaluate", upstream, _section_dict(cfg.evaluate), cfg.seed)
    predictors = list(MODEL_ORDER) + [e for e in ENSEMBLE_ORDER if e in cfg.train.ensembles]
    artifacts = [f"report_{name}.txt" for name in predictors]
    if _is_cached(path, stage_hash, artifacts):
        return stage_hash

    _, y_tr_bal, X_plain, y_plain, X_te, y_te = _load_selected(cfg)
    train_dir = os.path.join(cfg.out_dir, "train")
    models = {
        kind: learners_mod.load_model(os.path.join(train_dir, f"model_{kind}.npz"))
        for kind in MODEL_ORDER
    }
    _, weights_w = _load_weights(os.path.join(train_dir, "weights.csv"))
    blend_model = None
    if "blendnet" in cfg.train.ensembles:
        blend_model = blendnet_mod.load_model(os.path.join(train_dir, "blendnet.npz"))

    probs_test = predictor_probabilities(
        models, weights_w, blend_model, X_te, cfg.train.ensembles
    )
    if cfg.evaluate.bootstrap_scope == "full":
        probs_full = predictor_probabilities(
            models, weights_w, blend_model,
            np.vstack([X_plain, X_te]), cfg.train.ensembles,
        )
        y_full = np.concatenate([y_plain, y_te])
    elif cfg.evaluate.bootstrap_scope != "test":
        raise ValueError("bootstrap_scope must be 'test' or 'full'")

    summary = {}
    for name in predictors:
        report = metrics_mod.evaluate_predictions(
            name, y_te, probs_test[name],
            n_boot=cfg.evaluate.n_boot, seed=subseed(cfg.seed, f"boot-{name}"),
            n_bins=cfg.evaluate.calibration_bins,
        )
        if cfg.evaluate.bootstrap_scope == "full":
            report.bootstrap = metrics_mod.bootstrap_auc(
                y_full, probs_full[name], n_boot=cfg.evaluate.n_boot,
                seed=subseed(cfg.seed, f"boot-{name}"),
            )
        _write_text(os.path.join(path, f"report_{name}.txt"),
                    metrics_mod.render_report(report))
        _write_text(os.path.join(path, f"roc_{name}.csv"),
                    metrics_mod.roc_csv(report.roc))
        _write_text(os.path.join(path, f"calibration_{name}.csv"),
                    metrics_mod.calibration_csv(report.calibration))
        _write_text(os.path.join(path, f"metrics_{name}.json"), _metrics_json(report))
        summary[name] = report
    np.savez(
        os.path.join(path, "predictions.npz"),
        y_test=y_te, **{f"proba_{k}": v for k, v in probs_test.items()},
    )
    _finish_stage(path, stage_hash)
    return stage_hash


def stage_report(cfg: PipelineConfig, upstream: str) -> str:
    path = _stage_dir(cfg, "report")
    stage_hash = _digest("report", upstream)
    if _is_cached(path, stage_hash, ("summary.txt",)):
        return stage_hash

    eval_dir = os.path.join(cfg.out_dir, "evaluate")
    predictors = list(MODEL_ORDER) + [e for e in ENSEMBLE_ORDER if e in cfg.train.ensembles]
    header = (
        "model,macro_precision,macro_recall,macro_f1,recall_class0,"
        "recall_class1,auc,auc_boot_mean,auc_boot_std,auc_ci_low,"
        "auc_ci_high,brier,log_loss"
    )
    lines = [header]
    for name in predictors:
        with open(os.path.join(eval_dir, f"metrics_{name}.json"), encoding="utf-8") as fh:
            m = json.load(fh)
        lines.append(
            f"{name},{m['macro']['precision']:.6f},{m['macro']['recall']:.6f},"
            f"{m['macro']['f1']:.6f},{m['class_0']['recall']:.6f},"
            f"{m['class_1']['recall']:.6f},{m['auc']:.6f},"
            f"{m['auc_boot_mean']:.6f},{m['auc_boot_std']:.6f},"
            f"{m['auc_ci_low']:.6f},{m['auc_ci_high']:.6f},"
            f"{m['brier']:.6f},{m['log_loss']:.6f}"
        )
    _write_text(os.path.join(path, "summary.txt"), "\n".join(lines) + "\n")
    _finish_stage(path, stage_hash)
    return stage_hash


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "outliers": stage_outliers,
    "augment": stage_augment,
    "select": stage_select,
    "tune": stage_tune,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_pipeline(cfg: PipelineConfig, upto: str = "report", log=print) -> str:
    """Run stages in order through `upto`; cached stages are skipped."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    upstream = ""
    for stage in STAGES:
        try:
            if stage == "ingest":
                upstream = stage_ingest(cfg)
            else:
                upstream = _STAGE_FUNCS[stage](cfg, upstream)
            log(f"[{stage}] ok")
        except Exception as exc:
            raise StageError(stage, exc) from exc
        if stage == upto:
            break
    return upstream


# ---------------------------------------------------------------------------
# command line


def _add_common(p):
    p.add_argument("--config", default=None, help="INI configuration file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--schema", default=None)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="loanblend",
        description="Greedy-weighted ensemble pipeline for loan default prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for cmd, target in [
        ("ingest", "ingest"), ("outliers", "outliers"), ("run", "report"),
        ("evaluate", "evaluate"), ("report", "report"),
    ]:
        p = sub.add_parser(cmd)
        _add_common(p)
        p.set_defaults(upto=target)

    p = sub.add_parser("augment")
    _add_common(p)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--noise-scale", type=float, default=None)
    p.set_defaults(upto="augment")

    p = sub.add_parser("select-features")
    _add_common(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--estimator", choices=("gb", "ert"), default=None)
    p.set_defaults(upto="select")

    p = sub.add_parser("tune")
    _add_common(p)
    p.add_argument("--model", choices=MODEL_ORDER, default=None,
                   help="tune only this model kind")
    p.add_argument("--folds", type=int, default=None)
    p.set_defaults(upto="tune")

    p = sub.add_parser("train")
    _add_common(p)
    p.add_argument("--ensemble", choices=("greedy", "vote", "average", "stack"),
                   default=None, help="train only this ensemble")
    p.set_defaults(upto="train")

    p = sub.add_parser("synth", help="write the bundled synthetic fixture")
    p.add_argument("--rows", type=int, default=5000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="fixtures")

    args = parser.parse_args(argv)

    if args.command == "synth":
        os.makedirs(args.out, exist_ok=True)
        csv_path = os.path.join(args.out, "synthetic.csv")
        schema_path = os.path.join(args.out, "synthetic.schema")
        n_pos, n_rows = synthetic_mod.write_fixture(
            csv_path, schema_path, n_rows=args.rows, seed=args.seed
        )
        print(f"wrote {csv_path} ({n_rows} rows, {n_pos} positive) and {schema_path}")
        return 0

    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out_dir,
                          data=args.data, schema=args.schema)
        if args.command == "augment":
            if args.ratio is not None:
                cfg.augment.ratio = args.ratio
            if args.noise_scale is not None:
                cfg.augment.noise_scale = args.noise_scale
        elif args.command == "select-features":
            if args.k is not None:
                cfg.features.k = args.k
            if args.estimator is not None:
                cfg.features.estimator = args.estimator
        elif args.command == "tune":
            if args.model is not None:
                cfg.pso.models = (args.model,)
            if args.folds is not None:
                cfg.pso.cv_folds = args.folds
        elif args.command == "train" and args.ensemble is not None:
            name = {"greedy": "greedy_weighted", "stack": "blendnet"}.get(
                args.ensemble, args.ensemble
            )
            cfg.train.ensembles = (name,)
        run_pipeline(cfg, upto=args.upto)
    except StageError as err:
        print(str(err), file=sys.stderr)
        return 1
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
