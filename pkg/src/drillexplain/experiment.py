"""End-to-end protocol on the synthetic corpus.

One run generates the corpus, cross-validates the alarm model per well fold
(codebooks and boosted trees retrained on each fold's training wells),
chooses per-type operating thresholds, explains every alarm moment with the
tree explainer, the attention classifier, and the random/uniform baselines,
and scores all of them against the reference regions.  Everything numeric in
the metrics dict is deterministic under the config; wall-clock time lives
only in the manifest.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels, pipeline
from .consistency import (consistency_p_value, consistency_score,
                          null_consistency_scores)
from .errors import TrainingError
from .evaluation import (COVERAGE_TARGETS, PrCounts, alarm_performance,
                         choose_threshold, fold_assignment, random_baseline,
                         region_max_probs, roc_auc, uniform_baseline,
                         window_pr)
from .fcmh import AttentionClassifier, AttentionConfig
from .features import CodebookSet, extract_tau, train_codebooks
from .gbm import GradientBoostedTrees, TrainConfig
from .shapley import TreeShapExplainer, select_top
from .synthgen import CorpusBundle, GenConfig, generate
from .telemetry import (ACCIDENT_TYPES, MNEMONICS, WINDOW_SAMPLES,
                        ReferenceRegion, Segment)

METHODS = ("shap", "fcmh", "random", "uniform")


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs for one full run; defaults fit a desktop CPU budget."""

    seed: int = 7
    n_wells: int = 20
    hours_per_well: float = 6.0
    n_folds: int = 5
    codebook_k: int = 200
    kmeans_iters: int = 12
    max_tau_per_channel: int = 4000
    gbm_estimators: int = 60
    gbm_learning_rate: float = 0.1
    gbm_max_depth: int = 6
    gbm_subsample: float = 0.9
    gbm_colsample: float = 0.12
    fcmh_epochs: int = 5
    fcmh_batch_size: int = 32
    shap_m: float = 20.0
    fcmh_m: float = 24.0
    baseline_m: float = 45.0
    n_random_draws: int = 10
    moment_gap_seconds: float = 60.0
    null_draws: int = 20


@dataclass
class MomentRecord:
    """One explained alarm moment with each method's feature selection."""

    event_id: str
    well_id: str
    kind: str
    fold: int
    end_index: int
    end_time: float
    selected: dict[str, np.ndarray]
    local_err: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    corpus: CorpusBundle
    fold_of: dict[str, int]
    codebooks_of: dict[int, CodebookSet]
    tau_labels_of: dict[str, np.ndarray]  # out-of-fold labels per well
    gbm_of: dict[tuple[int, str], GradientBoostedTrees]
    fcmh_of: dict[tuple[int, str], AttentionClassifier]
    series: dict[str, dict[str, tuple[np.ndarray, np.ndarray]]]
    moments: list[MomentRecord]
    metrics: dict
    manifest: dict


def _corpus_segments(logs, wells: list[str]) -> list[Segment]:
    """Non-overlapping hour windows covering the given wells."""
    return pipeline.hour_segments(logs, wells)


def _check_fold_classes(windows, fold_of, n_folds: int) -> None:
    for fold in range(n_folds):
        kinds = {w.kind for w in windows if fold_of[w.well_id] != fold}
        missing = [k for k in ACCIDENT_TYPES if k not in kinds]
        if missing or None not in kinds:
            raise TrainingError(
                f"fold {fold} training wells lack classes: "
                f"{missing or ['normal']}; choose another seed or schedule")


def _pr_add(totals: dict[str, PrCounts], kind: str, part: PrCounts) -> None:
    totals["micro"].add(part)
    totals[kind].add(part)


def _pr_section(totals: dict[str, PrCounts], m_percent: float) -> dict:
    return {
        "m_percent": m_percent,
        "micro": totals["micro"].as_dict(),
        "per_type": {k: totals[k].as_dict() for k in ACCIDENT_TYPES},
    }


def run(config: ExperimentConfig | None = None) -> ExperimentResult:
    cfg = config if config is not None else ExperimentConfig()
    t_start = time.time()
    corpus = generate(GenConfig(n_wells=cfg.n_wells,
                                hours_per_well=cfg.hours_per_well,
                                seed=cfg.seed))
    logs, events = corpus.logs, corpus.events
    refs_of: dict[str, list[ReferenceRegion]] = {}
    for ref in corpus.references:
        refs_of.setdefault(ref.event_id, []).append(ref)

    windows = pipeline.enumerate_windows(logs, events)
    fold_of = fold_assignment(sorted(logs), n_folds=cfg.n_folds, seed=cfg.seed)
    _check_fold_classes(windows, fold_of, cfg.n_folds)

    codebooks_of: dict[int, CodebookSet] = {}
    tau_labels_of: dict[str, np.ndarray] = {}
    gbm_of: dict[tuple[int, str], GradientBoostedTrees] = {}
    fcmh_of: dict[tuple[int, str], AttentionClassifier] = {}
    series: dict[str, dict[str, tuple[np.ndarray, np.ndarray]]] = {
        kind: {} for kind in ACCIDENT_TYPES}
    pooled_scores: dict[str, list[np.ndarray]] = {k: [] for k in ACCIDENT_TYPES}
    pooled_labels: dict[str, list[np.ndarray]] = {k: [] for k in ACCIDENT_TYPES}

    for fold in range(cfg.n_folds):
        train_wells = sorted(w for w in logs if fold_of[w] != fold)
        test_wells = sorted(w for w in logs if fold_of[w] == fold)
        codebooks = train_codebooks(
            _corpus_segments(logs, train_wells), k=cfg.codebook_k,
            seed=cfg.seed + 101 * (fold + 1), max_iter=cfg.kmeans_iters,
            max_tau_per_channel=cfg.max_tau_per_channel)
        codebooks_of[fold] = codebooks

        tau_train = {w: pipeline.well_tau_labels(logs[w], codebooks)
                     for w in train_wells}
        tau_test = {w: pipeline.well_tau_labels(logs[w], codebooks)
                    for w in test_wells}
        tau_labels_of.update(tau_test)

        train_windows = [w for w in windows if fold_of[w.well_id] != fold]
        test_windows = [w for w in windows if fold_of[w.well_id] == fold]
        X_train = pipeline.window_matrix(train_windows, tau_train, codebooks)
        X_test = pipeline.window_matrix(test_windows, tau_test, codebooks)

        fold_models: dict[str, GradientBoostedTrees] = {}
        for kind in ACCIDENT_TYPES:
            y_train = pipeline.type_labels(train_windows, kind)
            y_test = pipeline.type_labels(test_windows, kind)
            model_seed = cfg.seed + 100 * fold + ACCIDENT_TYPES.index(kind)
            gbm = GradientBoostedTrees(TrainConfig(
                n_estimators=cfg.gbm_estimators,
                learning_rate=cfg.gbm_learning_rate,
                max_depth=cfg.gbm_max_depth,
                subsample=cfg.gbm_subsample,
                colsample_bytree=cfg.gbm_colsample,
                seed=model_seed,
            )).fit(X_train, y_train)
            gbm_of[(fold, kind)] = gbm
            fold_models[kind] = gbm
            pooled_scores[kind].append(gbm.predict_proba(X_test))
            pooled_labels[kind].append(y_test)

            fcmh_of[(fold, kind)] = AttentionClassifier(AttentionConfig(
                epochs=cfg.fcmh_epochs, batch_size=cfg.fcmh_batch_size,
                seed=model_seed)).fit(X_train, y_train)

        for well in test_wells:
            times, probs = pipeline.probability_series(
                logs[well], tau_test[well], fold_models, codebooks)
            for kind in ACCIDENT_TYPES:
                series[kind][well] = (times, probs[kind])

    auc_per_type = {
        kind: roc_auc(np.concatenate(pooled_scores[kind]),
                      np.concatenate(pooled_labels[kind]))
        for kind in ACCIDENT_TYPES
    }
    auc_micro = roc_auc(
        np.concatenate([s for k in ACCIDENT_TYPES for s in pooled_scores[k]]),
        np.concatenate([s for k in ACCIDENT_TYPES for s in pooled_labels[k]]))

    thresholds: dict[str, float] = {}
    alarm_reports = {}
    for kind in ACCIDENT_TYPES:
        mx = region_max_probs(series[kind], events, kind)
        thresholds[kind] = choose_threshold(mx, COVERAGE_TARGETS[kind])
        alarm_reports[kind] = alarm_performance(series[kind], events,
                                                thresholds[kind], kind)

    explainers = {key: TreeShapExplainer(model) for key, model in gbm_of.items()}
    pr: dict[str, dict[str, PrCounts]] = {
        m: {k: PrCounts() for k in list(ACCIDENT_TYPES) + ["micro"]}
        for m in METHODS
    }
    moments_per_type = {k: 0 for k in ACCIDENT_TYPES}
    local_errs: list[float] = []
    moment_records: list[MomentRecord] = []
    rng_random = np.random.default_rng(cfg.seed + 997)
    n_features = codebooks_of[0].n_features
    uniform_sel = select_top(uniform_baseline(n_features), cfg.baseline_m)

    for ev in sorted(events, key=lambda e: e.event_id):
        kind, well = ev.kind, ev.well_id
        fold = fold_of[well]
        log = logs[well]
        codebooks = codebooks_of[fold]
        times, probs = series[kind][well]
        picked = pipeline.alarm_moments(times, probs, thresholds[kind],
                                        ev.region_start, ev.region_end,
                                        cfg.moment_gap_seconds)
        refs = refs_of[ev.event_id]
        gbm = gbm_of[(fold, kind)]
        fcmh = fcmh_of[(fold, kind)]
        explainer = explainers[(fold, kind)]
        for t in picked:
            end_index = log.time_to_index(t) + 1
            x = pipeline.window_matrix(
                [pipeline.WindowRef(well, end_index, t, kind)],
                {well: tau_labels_of[well]}, codebooks)[0]
            index = pipeline.window_index(tau_labels_of[well], end_index,
                                          codebooks)
            window_start = log.index_to_time(end_index - WINDOW_SAMPLES)

            phi, base = explainer.shap_values(x)
            margin = float(gbm.predict_margin(x[None])[0])
            local_errs.append(abs(base + float(phi.sum()) - margin))
            sel = {
                "shap": select_top(phi, cfg.shap_m),
                "fcmh": select_top(fcmh.importance(x), cfg.fcmh_m),
                "uniform": uniform_sel,
            }
            for method in ("shap", "fcmh", "uniform"):
                _pr_add(pr[method], kind,
                        window_pr(index, sel[method], window_start, log.step,
                                  kind, refs))
            draws = random_baseline(n_features, cfg.n_random_draws,
                                    seed=int(rng_random.integers(2 ** 31)))
            for vec in draws:
                _pr_add(pr["random"], kind,
                        window_pr(index, select_top(vec, cfg.baseline_m),
                                  window_start, log.step, kind, refs))
            moments_per_type[kind] += 1
            moment_records.append(MomentRecord(
                event_id=ev.event_id, well_id=well, kind=kind, fold=fold,
                end_index=end_index, end_time=float(t),
                selected={m: sel[m] for m in ("shap", "fcmh")},
                local_err=local_errs[-1]))

    consistency_metrics = _consistency_block(cfg, corpus, fold_of,
                                             codebooks_of, moment_records)

    metrics = {
        "auc": {"micro": auc_micro, "per_type": auc_per_type},
        "alarms": {
            kind: {
                "threshold": thresholds[kind],
                "coverage": alarm_reports[kind].coverage,
                "false_alarms_per_day": alarm_reports[kind].false_alarms_per_day,
                "n_events": alarm_reports[kind].n_events,
                "n_covered": alarm_reports[kind].n_covered,
            }
            for kind in ACCIDENT_TYPES
        },
        "explanations": {
            "n_moments": len(moment_records),
            "moments_per_type": moments_per_type,
            "local_accuracy_max_err": max(local_errs) if local_errs else 0.0,
            "methods": {
                "shap": _pr_section(pr["shap"], cfg.shap_m),
                "fcmh": _pr_section(pr["fcmh"], cfg.fcmh_m),
                "random": _pr_section(pr["random"], cfg.baseline_m),
                "uniform": _pr_section(pr["uniform"], cfg.baseline_m),
            },
        },
        "consistency": consistency_metrics,
        "fold_of": dict(sorted(fold_of.items())),
        "config": asdict(cfg),
    }
    manifest = {
        "wall_seconds": time.time() - t_start,
        "kernel_backend": _kernels.BACKEND,
        "n_windows": len(windows),
        "n_events": len(events),
    }
    return ExperimentResult(
        config=cfg, corpus=corpus, fold_of=fold_of, codebooks_of=codebooks_of,
        tau_labels_of=tau_labels_of, gbm_of=gbm_of, fcmh_of=fcmh_of,
        series=series, moments=moment_records, metrics=metrics,
        manifest=manifest)


def _consistency_block(cfg, corpus, fold_of, codebooks_of,
                       moment_records) -> dict:
    """Centroid-drift statistic of the tree explainer on stuck cases.

    Groups are (event, channel) pairs where at least two alarm moments
    highlight the channel; the null redraws size-matched random tau-segment
    subsets from the same windows.
    """
    groups: list[tuple[list[np.ndarray], list[np.ndarray], list[int]]] = []
    by_event: dict[str, list[MomentRecord]] = {}
    for rec in moment_records:
        if rec.kind == "Stuck":
            by_event.setdefault(rec.event_id, []).append(rec)

    for event_id in sorted(by_event):
        recs = sorted(by_event[event_id], key=lambda r: r.end_time)
        if len(recs) < 2:
            continue
        log = corpus.logs[recs[0].well_id]
        codebooks = codebooks_of[fold_of[recs[0].well_id]]
        k = codebooks.k
        for ci, name in enumerate(MNEMONICS):
            cb = codebooks.codebooks[name]
            sets, pools, sizes = [], [], []
            for rec in recs:
                clusters = [f - ci * k for f in rec.selected["shap"]
                            if ci * k <= f < (ci + 1) * k]
                if not clusters:
                    continue
                seg = Segment(log, rec.end_index)
                raw = extract_tau(seg.values(name), codebooks.tau_len,
                                  codebooks.stride)
                picked = np.isin(cb.assign_raw(raw), clusters)
                if not picked.any():
                    continue
                tau = cb.normalize(raw)
                sets.append(tau[picked])
                pools.append(tau)
                sizes.append(int(picked.sum()))
            if len(sets) >= 2:
                groups.append((sets, pools, sizes))

    if not groups:
        return {"n_groups": 0, "observed": None, "null": [], "p_value": None}

    observed = float(np.mean([consistency_score(sets) for sets, _, _ in groups]))
    null_matrix = np.stack([
        null_consistency_scores(pools, sizes, n_draws=cfg.null_draws,
                                seed=cfg.seed + 7919 * (gi + 1))
        for gi, (_, pools, sizes) in enumerate(groups)
    ])
    null_means = null_matrix.mean(axis=0)
    return {
        "n_groups": len(groups),
        "observed": observed,
        "null": [float(v) for v in null_means],
        "p_value": consistency_p_value(observed, null_means),
    }


def metrics_json(metrics: dict) -> str:
    """Canonical serialization used for byte-identity checks."""
    return json.dumps(metrics, sort_keys=True, indent=2) + "\n"


def table_text(metrics: dict) -> str:
    """Plain-text comparison table: method by scoring mode by metric."""
    rows = [f"{'method':<10} {'scope':<10} {'precision':>10} {'recall':>10} "
            f"{'tp':>6} {'fp':>6} {'fn':>6}"]
    for method in METHODS:
        if method not in metrics["explanations"]["methods"]:
            continue
        section = metrics["explanations"]["methods"][method]
        for mode in ("strict", "extended"):
            c = section["micro"][mode]
            rows.append(f"{method:<10} {mode:<10} {c['precision']:>10.4f} "
                        f"{c['recall']:>10.4f} {c['tp']:>6d} {c['fp']:>6d} "
                        f"{c['fn']:>6d}")
    return "\n".join(rows) + "\n"
