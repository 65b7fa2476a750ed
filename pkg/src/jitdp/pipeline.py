"""End-to-end experiment orchestration: feature extraction, vocabulary,
model training, the fusion sweep, evaluation reports, and the large-commit
drop experiment. Every artifact is a pure function of (config, seed,
corpus), so re-running a config reproduces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import fusion
from .corpus import (
    DataError,
    chronological_split,
    drop_large_commits,
    load_commit_stream,
    sort_chronologically,
    stratified_kfold,
    undersample,
)
from .deep_model import (
    DeepConfig,
    build_dataset,
    score_dataset,
    train_deep,
    write_train_log,
)
from .evaluation import (
    cliffs_delta,
    correction_analysis,
    group_metric_samples,
    overlap_analysis,
    prf1,
    wilcoxon_signed_rank,
)
from .explain import explain_instance
from .features import (
    TrainStats,
    featurize_corpus,
    fit_train_stats,
    split_and_normalize,
    write_feature_table,
)
from .nn import load_params, save_params
from .simple_model import (
    ForestConfig,
    forest_predict_many,
    load_forest,
    save_forest,
    train_forest,
)
from .textprep import TextShape, Vocab, build_vocab, load_vocab, render_change_document, save_vocab, tokenize


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; defaults are the desk-scale micro setup.

    The full-scale deep configuration (embed_dim 64, 64 filters, hidden
    512, lr 5e-5, batch 64, 30 epochs, dropout 0.5, shapes 64/256/8) is
    reachable by overriding the corresponding fields.
    """

    corpus: str = ""
    out: str = "artifacts"
    seed: int = 0
    split_mode: str = "chronological"  # or "kfold"
    ratios: tuple = (0.75, 0.05, 0.20)
    folds: int = 5
    l_msg: int = 24
    l_code: int = 48
    files: int = 4
    vocab_max_size: int = 20_000
    vocab_min_frequency: int = 2
    embed_dim: int = 8
    filters: int = 8
    windows: tuple = (1, 2, 3)
    hidden: int = 32
    dropout: float = 0.25
    lr: float = 4e-3
    batch_size: int = 32
    epochs: int = 10
    gmf_beta: float = 1.0
    forest_trees: int = 100
    early_strategies: tuple = ("sc", "tc", "amf", "gmf")
    drop_rates: tuple = ()
    threads: int = 1

    def deep_config(self) -> DeepConfig:
        return DeepConfig(
            embed_dim=self.embed_dim, filters=self.filters, windows=tuple(self.windows),
            hidden=self.hidden, dropout=self.dropout, lr=self.lr,
            batch_size=self.batch_size, epochs=self.epochs, gmf_beta=self.gmf_beta,
        )

    def text_shape(self) -> TextShape:
        return TextShape(l_msg=self.l_msg, l_code=self.l_code, files=self.files)

    def as_dict(self) -> dict:
        d = asdict(self)
        for key in ("ratios", "windows", "early_strategies", "drop_rates"):
            d[key] = list(d[key])
        return d


def config_from_dict(d: dict) -> RunConfig:
    kwargs = dict(d)
    for key in ("ratios", "windows", "early_strategies", "drop_rates"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return RunConfig(**kwargs)


def config_hash(config: RunConfig) -> str:
    """Hash of the computation-affecting fields only; where artifacts land
    (out) and how many workers run (threads) cannot change their bytes."""
    d = config.as_dict()
    d.pop("out", None)
    d.pop("threads", None)
    blob = json.dumps(d, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle, sort_keys=True, indent=1)
        handle.write("\n")


STAGE_ORDER = ("load", "split", "features", "vocab", "train", "sweep", "evaluate")


class _Provenance:
    """Stage-ordered log; the leakage audit is that no stage before
    'evaluate' declares reading test labels."""

    def __init__(self):
        self.lines = []

    def note(self, stage: str, detail: str):
        self.lines.append(f"{stage}: {detail}")

    def write(self, path):
        Path(path).write_text("\n".join(self.lines) + "\n", encoding="utf-8")


def _train_documents(commits):
    docs = []
    for c in commits:
        docs.append(tokenize(c.message))
        for f in c.files:
            docs.append(render_change_document(f))
    return docs


def _metric_row(name, report):
    d = report.as_dict()
    d["model"] = name
    return d


def run_pipeline(config: RunConfig, until: str = "evaluate") -> Path:
    """Run the experiment described by the config; returns the artifact
    directory. `until` stops after 'features', 'train', or 'sweep' for the
    staged CLI commands. Drop-rate re-runs land in drop_<rate>/ subdirs."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        corpus = load_commit_stream(config.corpus)
    except DataError as exc:
        raise PipelineError("load", exc) from exc
    _run_corpus(corpus, config, out, until)
    for rate in config.drop_rates:
        sub = out / f"drop_{rate:g}"
        sub.mkdir(parents=True, exist_ok=True)
        try:
            reduced = drop_large_commits(corpus, rate)
        except ValueError as exc:
            raise PipelineError("drop", exc) from exc
        _run_corpus(reduced, config, sub, until)
    return out


def _run_corpus(corpus, config: RunConfig, out: Path, until: str) -> None:
    if config.split_mode == "chronological":
        _run_once(corpus, config, out, until)
    elif config.split_mode == "kfold":
        labels = {c.commit_id: c.label for c in corpus}
        if any(v is None for v in labels.values()):
            raise PipelineError("split", DataError("k-fold mode needs fully labeled corpora"))
        try:
            folds = stratified_kfold(labels, config.folds, config.seed)
        except (DataError, ValueError) as exc:
            raise PipelineError("split", exc) from exc
        for f in range(config.folds):
            sub = out / f"fold_{f}"
            sub.mkdir(parents=True, exist_ok=True)
            _run_once(corpus, config, sub, until, fold_assignment=folds, fold=f)
    else:
        raise PipelineError("split", ValueError(f"unknown split mode '{config.split_mode}'"))


def _stage(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, exc) from exc


def _split_ids(corpus, config: RunConfig, fold_assignment, fold):
    """(train_ids, val_ids, test_ids) in chronological order each."""
    ordered = sort_chronologically(corpus)
    if fold_assignment is None:
        split = chronological_split(corpus, config.ratios)
        train = [c.commit_id for c in ordered if c.commit_id in split.train_ids]
        val = [c.commit_id for c in ordered if c.commit_id in split.validation_ids]
        test = [c.commit_id for c in ordered if c.commit_id in split.test_ids]
        return train, val, test
    test = [c.commit_id for c in ordered if fold_assignment[c.commit_id] == fold]
    rest = [c.commit_id for c in ordered if fold_assignment[c.commit_id] != fold]
    share = config.ratios[0] / (config.ratios[0] + config.ratios[1])
    n_train = int(np.floor(len(rest) * share))
    if n_train == 0 or n_train == len(rest):
        raise DataError("fold split leaves an empty train or validation part")
    return rest[:n_train], rest[n_train:], test


def _run_once(corpus, config: RunConfig, out: Path, until: str,
              fold_assignment=None, fold=None) -> None:
    prov = _Provenance()
    cfg_hash = config_hash(config)
    provenance = f"{cfg_hash}:{config.seed}"
    _write_json(out / "config.json", {"config": config.as_dict(), "hash": cfg_hash, "seed": config.seed})
    prov.note("load", f"{len(corpus)} commits from {config.corpus or '<in-memory>'}")

    ordered = sort_chronologically(corpus)
    by_id = {c.commit_id: c for c in ordered}
    labels = {c.commit_id: c.label for c in ordered}
    train_ids, val_ids, test_ids = _stage("split", _split_ids, corpus, config, fold_assignment, fold)
    prov.note("split", f"train={len(train_ids)} validation={len(val_ids)} test={len(test_ids)} "
                       f"(ids and timestamps only, no labels read)")

    vectors = _stage("features", featurize_corpus, ordered)
    write_feature_table(out / "features.csv", ordered, vectors)
    (out / "train_ids.txt").write_text("\n".join(train_ids) + "\n", encoding="utf-8")
    stats = fit_train_stats([vectors[i] for i in train_ids], split="train", provenance=provenance)
    entries = {i: split_and_normalize(vectors[i], stats) for i in by_id}
    prov.note("features", "feature table over all commits; z-stats from train rows only")
    if until == "features":
        prov.write(out / "provenance.log")
        return

    vocab = _stage("vocab", build_vocab, _train_documents([by_id[i] for i in train_ids]),
                   config.vocab_max_size, config.vocab_min_frequency, "train", provenance)
    save_vocab(out / "vocab.txt", vocab)
    prov.note("vocab", f"{len(vocab)} entries from train messages and change documents")

    shape = config.text_shape()
    deep_cfg = config.deep_config()
    train_ds = build_dataset([by_id[i] for i in train_ids], vocab, shape, entries)
    val_ds = build_dataset([by_id[i] for i in val_ids], vocab, shape, entries)
    test_ds = build_dataset([by_id[i] for i in test_ids], vocab, shape, entries)

    def _train_models():
        balanced = sorted(undersample(train_ids, labels, config.seed))
        x_train = np.stack([vectors[i].as_array() for i in balanced])
        y_train = np.array([labels[i] for i in balanced])
        sim = train_forest(x_train, y_train, ForestConfig(n_trees=config.forest_trees),
                           seed=config.seed, threads=config.threads)
        save_forest(out / "sim_forest.json", sim)
        com_params, com_log = train_deep(train_ds, val_ds, len(vocab), deep_cfg,
                                         seed=config.seed, strategy="none")
        save_params(out / "com.ckpt", com_params)
        write_train_log(out / "com_train_log.csv", com_log)
        early = {}
        for strategy in config.early_strategies:
            params, log = train_deep(train_ds, val_ds, len(vocab), deep_cfg,
                                     seed=config.seed, strategy=strategy)
            save_params(out / f"fused_{strategy}.ckpt", params)
            write_train_log(out / f"fused_{strategy}_train_log.csv", log)
            early[strategy] = params
        return sim, com_params, early

    sim, com_params, early_params = _stage("train", _train_models)
    prov.note("train", "sim on undersampled train; deep models on train with "
                       "validation-based checkpoint selection")
    if until == "train":
        prov.write(out / "provenance.log")
        return

    def _sweep():
        sim_val = forest_predict_many(sim, np.stack([vectors[i].as_array() for i in val_ids]))
        com_val = score_dataset(com_params, deep_cfg, val_ds)
        early_val = {s: score_dataset(p, deep_cfg, val_ds, s) for s, p in early_params.items()}
        result = fusion.sweep_combinations(val_ds.labels, sim_val, com_val, early_val)
        fusion.write_sweep_log(out / "sweep_log.csv", result)
        return result

    sweep = _stage("sweep", _sweep)
    best = sweep.best
    artifacts = {"sim": "sim_forest.json", "com": "com.ckpt", "vocab": "vocab.txt",
                 "features": "features.csv", "train_ids": "train_ids.txt"}
    if best.early != "none":
        artifacts["early_model"] = f"fused_{best.early}.ckpt"
    manifest = {
        "format": "jitdp-bundle v1",
        "provenance": provenance,
        "early": best.early,
        "late": best.late,
        "weights": None if best.weights is None else list(best.weights),
        "artifacts": artifacts,
        "checksums": {k: _sha256_file(out / v) for k, v in artifacts.items()},
        "stats": {"mean": list(stats.mean), "std": list(stats.std), "split": stats.split,
                  "provenance": stats.provenance},
        "deep_config": asdict(deep_cfg) | {"windows": list(deep_cfg.windows)},
        "text_shape": asdict(shape),
        "vocab_size": len(vocab),
    }
    _write_json(out / "bundle.json", manifest)
    prov.note("sweep", f"20-cell sweep on validation AUC-PR; chose early={best.early} "
                       f"late={best.late}")
    if until == "sweep":
        prov.write(out / "provenance.log")
        return

    def _evaluate():
        x_test = np.stack([vectors[i].as_array() for i in test_ids])
        y_test = test_ds.labels
        scores = {
            "sim": forest_predict_many(sim, x_test),
            "com": score_dataset(com_params, deep_cfg, test_ds),
        }
        for s, p in early_params.items():
            scores[f"fused_{s}"] = score_dataset(p, deep_cfg, test_ds, s)
        early_scores = None if best.early == "none" else scores[f"fused_{best.early}"]
        scores["bundle"] = fusion.apply_bundle_rule(
            best.early, best.late, best.weights, scores["sim"], scores["com"], early_scores)

        reports = {name: prf1(vals, y_test) for name, vals in scores.items()}
        classes = {name: (vals > 0.5).astype(int) for name, vals in scores.items()}
        analysis = {
            "overlap_sim_vs_com": asdict(overlap_analysis(classes["sim"], classes["com"], y_test)),
            "correction_bundle_vs_sim": asdict(
                correction_analysis(classes["bundle"], classes["sim"], y_test)),
            "correction_bundle_vs_com": asdict(
                correction_analysis(classes["bundle"], classes["com"], y_test)),
        }
        try:
            stat, p = wilcoxon_signed_rank(scores["sim"], scores["com"])
            analysis["wilcoxon_sim_vs_com_scores"] = {"statistic": stat, "p_value": p}
        except ValueError as exc:
            analysis["wilcoxon_sim_vs_com_scores"] = {"error": str(exc)}
        try:
            groups = {}
            for name in ("sim", "com", "bundle"):
                rocs, prs, _ = group_metric_samples(scores[name], y_test, k=10, seed=config.seed)
                groups[name] = {"auc_roc": rocs, "auc_pr": prs}
            analysis["group_samples"] = groups
            for comp in ("sim", "com"):
                delta, mag = cliffs_delta(groups["bundle"]["auc_pr"], groups[comp]["auc_pr"])
                analysis[f"cliffs_delta_bundle_vs_{comp}_auc_pr"] = {"delta": delta, "magnitude": mag}
        except ValueError as exc:
            analysis["group_samples"] = {"error": str(exc)}

        with open(out / "metrics.csv", "w", encoding="utf-8") as handle:
            cols = ["model", "auc_roc", "auc_pr", "precision", "recall", "f1",
                    "tp", "fp", "tn", "fn", "threshold"]
            handle.write(",".join(cols) + "\n")
            for name in sorted(reports):
                row = _metric_row(name, reports[name])
                handle.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                                      for c in cols) + "\n")
        _write_json(out / "metrics.json", {
            "provenance": provenance,
            "reports": {k: v.as_dict() for k, v in sorted(reports.items())},
            "analysis": analysis,
        })
        with open(out / "predictions.csv", "w", encoding="utf-8") as handle:
            names = sorted(scores)
            handle.write("commit_id,label," + ",".join(names) + "\n")
            for j, cid in enumerate(test_ids):
                vals = ",".join(repr(float(scores[n][j])) for n in names)
                handle.write(f"{cid},{y_test[j]},{vals}\n")

    _stage("evaluate", _evaluate)
    prov.note("evaluate", "test labels read here, first and only time")
    prov.write(out / "provenance.log")


# ---------------------------------------------------------------------------
# Bundle loading and prediction on a commit stream
# ---------------------------------------------------------------------------


@dataclass
class LoadedBundle:
    early: str
    late: str
    weights: tuple | None
    sim: object
    com_params: dict
    early_model_params: dict | None
    vocab: Vocab
    stats: TrainStats
    deep_cfg: DeepConfig
    shape: TextShape
    provenance: str


def load_bundle(manifest_path) -> LoadedBundle:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    with open(manifest_path, encoding="utf-8") as handle:
        manifest = json.load(handle)
    if manifest.get("format") != "jitdp-bundle v1":
        raise DataError(f"unsupported bundle format: {manifest.get('format')!r}")
    for key, rel in manifest["artifacts"].items():
        actual = _sha256_file(base / rel)
        if actual != manifest["checksums"][key]:
            raise DataError(f"provenance mismatch: artifact '{key}' ({rel}) does not match "
                            f"the bundle manifest checksum")
    stats_d = manifest["stats"]
    if stats_d["provenance"] != manifest["provenance"]:
        raise DataError("provenance mismatch: feature statistics come from a different run")
    dc = dict(manifest["deep_config"])
    dc["windows"] = tuple(dc["windows"])
    cfg = DeepConfig(**dc)
    shape = TextShape(**manifest["text_shape"])
    vocab = load_vocab(base / manifest["artifacts"]["vocab"], provenance=manifest["provenance"])
    early = manifest["early"]
    early_params = None
    if early != "none":
        early_params = load_params(base / manifest["artifacts"]["early_model"])
    return LoadedBundle(
        early=early,
        late=manifest["late"],
        weights=None if manifest["weights"] is None else tuple(manifest["weights"]),
        sim=load_forest(base / manifest["artifacts"]["sim"]),
        com_params=load_params(base / manifest["artifacts"]["com"]),
        early_model_params=early_params,
        vocab=vocab,
        stats=TrainStats(mean=np.array(stats_d["mean"]), std=np.array(stats_d["std"]),
                         split=stats_d["split"], provenance=stats_d["provenance"]),
        deep_cfg=cfg,
        shape=shape,
        provenance=manifest["provenance"],
    )


def predict_commits(bundle: LoadedBundle, corpus) -> list:
    """Score a commit stream with a trained bundle. History-dependent
    features are computed within the given stream (chronological pass).
    Returns rows (commit_id, fused, class, sim, com, early-or-None) in the
    input order."""
    if not corpus:
        return []
    ordered = sort_chronologically(corpus)
    vectors = featurize_corpus(ordered)
    entries = {i: split_and_normalize(vectors[i], bundle.stats) for i in vectors}
    ds = build_dataset(ordered, bundle.vocab, bundle.shape, entries)
    x = np.stack([vectors[c.commit_id].as_array() for c in ordered])
    sim_scores = forest_predict_many(bundle.sim, x)
    com_scores = score_dataset(bundle.com_params, bundle.deep_cfg, ds)
    early_scores = None
    if bundle.early != "none":
        early_scores = score_dataset(bundle.early_model_params, bundle.deep_cfg, ds, bundle.early)
    fused = fusion.apply_bundle_rule(bundle.early, bundle.late, bundle.weights,
                                     sim_scores, com_scores, early_scores)
    pos = {c.commit_id: j for j, c in enumerate(ordered)}
    rows = []
    for c in corpus:
        j = pos[c.commit_id]
        rows.append((
            c.commit_id,
            float(fused[j]),
            int(fused[j] > 0.5),
            float(sim_scores[j]),
            float(com_scores[j]),
            None if early_scores is None else float(early_scores[j]),
        ))
    return rows


PREDICTIONS_HEADER = "commit_id,fused_score,class,sim_score,com_score,early_score"


def write_predictions(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(PREDICTIONS_HEADER + "\n")
        for cid, fused, cls, sim_s, com_s, early_s in rows:
            early_txt = "" if early_s is None else repr(early_s)
            handle.write(f"{cid},{fused!r},{cls},{sim_s!r},{com_s!r},{early_txt}\n")


def explain_commit(bundle: LoadedBundle, corpus, commit_id: str,
                   train_matrix: np.ndarray, n_samples: int = 1000, seed: int = 0):
    """Local surrogate explanation of the simple model's score for one commit."""
    ordered = sort_chronologically(corpus)
    vectors = featurize_corpus(ordered)
    if commit_id not in vectors:
        raise DataError(f"commit '{commit_id}' not present in the stream")
    x = vectors[commit_id].as_array()

    def predict_fn(row):
        return forest_predict_many(bundle.sim, row[None, :])[0]

    return explain_instance(predict_fn, x, train_matrix, n_samples=n_samples, seed=seed)


def read_feature_table(path) -> tuple:
    """(ids, matrix, labels) from a features.csv written by the pipeline."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
        assert header[0] == "commit_id"
        ids, rows, labels = [], [], []
        for line in handle:
            parts = line.rstrip("\n").split(",")
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:15]])
            labels.append(None if parts[15] == "" else int(parts[15]))
    return ids, np.array(rows), labels
