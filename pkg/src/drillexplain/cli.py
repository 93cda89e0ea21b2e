"""Command-line pipeline: generate, train, score, explain, evaluate, report.

Each subcommand reads and writes plain artifacts (CSV corpus directories,
JSON models, NPZ matrices) and drops a .manifest.json next to its primary
output.  A YAML config file may hold per-command sections; explicit flags
win over file values.  Exit codes: 0 success, 1 usage or configuration
problem, 2 bad input data, 3 internal failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, pipeline
from .config import ManifestTimer, command_options, load_config
from .consistency import pairwise_sq_distances, silhouette, tsne
from .errors import (ArtifactError, DataError, DrillExplainError,
                     EvaluationError, UsageError)
from .evaluation import (COVERAGE_TARGETS, PrCounts, alarm_performance,
                         choose_threshold, random_baseline, region_max_probs,
                         uniform_baseline, window_pr)
from .fcmh import AttentionClassifier, AttentionConfig
from .features import CodebookSet, extract_tau, train_codebooks
from .gbm import GradientBoostedTrees, TrainConfig
from .shapley import TreeShapExplainer, highlight, select_top
from .svgplot import (alarms_table_html, embedding_figure, explanation_figure,
                      html_report, methods_table_html)
from .synthgen import GenConfig, generate, write_corpus
from .telemetry import ACCIDENT_TYPES, MNEMONICS, WINDOW_SAMPLES
from .experiment import table_text


# ---------------------------------------------------------------------------
# artifact helpers

def _require(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"missing required option: {what}")
    p = Path(path)
    if not p.exists():
        raise ArtifactError(f"{what} not found: {p}")
    return p


def _save_model_set(models: dict, schema: str, path: Path) -> None:
    doc = {"schema": schema,
           "models": {k: m.to_dict() for k, m in sorted(models.items())}}
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _load_model_set(path: Path, schema: str, cls) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != schema:
        raise ArtifactError(f"{path}: expected schema {schema}, "
                            f"got {doc.get('schema')!r}")
    return {kind: cls.from_dict(d) for kind, d in doc["models"].items()}


def _load_features(path: Path) -> tuple[np.ndarray, list[str], np.ndarray,
                                        np.ndarray, list[str]]:
    with np.load(path, allow_pickle=False) as z:
        missing = {"X", "well", "end_index", "end_time", "kind"} - set(z.files)
        if missing:
            raise ArtifactError(f"{path}: missing arrays {sorted(missing)}")
        return (z["X"], [str(w) for w in z["well"]], z["end_index"],
                z["end_time"], [str(s) for s in z["kind"]])


def _probs_series(path: Path) -> dict[str, dict[str, tuple[np.ndarray, np.ndarray]]]:
    """Per-type probability series: kind -> well -> (times, probs)."""
    out: dict[str, dict[str, tuple[np.ndarray, np.ndarray]]] = {}
    with np.load(path, allow_pickle=False) as z:
        wells = [str(w) for w in z["wells"]]
        kinds = [str(k) for k in z["kinds"]]
        for kind in kinds:
            out[kind] = {w: (z[f"times:{w}"], z[f"prob:{kind}:{w}"])
                         for w in wells}
    return out


def _tau_labels_cache(corpus: pipeline.Corpus, codebooks: CodebookSet):
    cache: dict[str, np.ndarray] = {}

    def get(well: str) -> np.ndarray:
        if well not in cache:
            cache[well] = pipeline.well_tau_labels(corpus.logs[well], codebooks)
        return cache[well]

    return get


# ---------------------------------------------------------------------------
# subcommands

def _parse_counts(spec) -> dict[str, int]:
    """Accept either a mapping or 'Kind=3,Kind=2' text."""
    if isinstance(spec, dict):
        return {str(k): int(v) for k, v in spec.items()}
    counts = {}
    for part in str(spec).split(","):
        kind, _, num = part.partition("=")
        if not num:
            raise UsageError(f"counts entry needs Kind=N, got {part!r}")
        counts[kind.strip()] = int(num)
    return counts


def _cmd_gen(opts: dict) -> None:
    mt = ManifestTimer("gen", opts)
    kwargs = {}
    if opts["counts"] is not None:
        kwargs["counts"] = _parse_counts(opts["counts"])
    cfg = GenConfig(seed=int(opts["seed"]), n_wells=int(opts["wells"]),
                    hours_per_well=float(opts["hours"]), **kwargs)
    mt.seeds["gen"] = cfg.seed
    bundle = generate(cfg)
    outdir = Path(opts["out"])
    paths = write_corpus(bundle, outdir)
    mt.outputs = [str(p) for p in paths.values()]
    mt.done(outdir / "corpus")
    print(f"wrote {len(bundle.logs)} wells, {len(bundle.events)} events "
          f"to {outdir}")


def _cmd_train_codebooks(opts: dict) -> None:
    mt = ManifestTimer("train-codebooks", opts)
    corpus_dir = _require(opts["corpus"], "--corpus")
    corpus = pipeline.load_corpus(corpus_dir)
    mt.inputs = [str(corpus_dir)]
    mt.seeds["kmeans"] = int(opts["seed"])
    segments = pipeline.hour_segments(corpus.logs)
    books = train_codebooks(
        segments, k=int(opts["k"]), seed=int(opts["seed"]),
        max_iter=int(opts["iters"]),
        max_tau_per_channel=(int(opts["max_tau"]) if opts["max_tau"] else None))
    out = Path(opts["out"])
    books.save(out)
    mt.outputs = [str(out)]
    mt.done(out)
    print(f"trained {len(MNEMONICS)} codebooks (k={books.k}) "
          f"on {len(segments)} windows")


def _cmd_featurize(opts: dict) -> None:
    mt = ManifestTimer("featurize", opts)
    corpus_dir = _require(opts["corpus"], "--corpus")
    cb_path = _require(opts["codebooks"], "--codebooks")
    corpus = pipeline.load_corpus(corpus_dir)
    codebooks = CodebookSet.load(cb_path)
    mt.inputs = [str(corpus_dir), str(cb_path)]
    windows = pipeline.enumerate_windows(corpus.logs, corpus.events)
    if not windows:
        raise DataError("corpus yields no full one-hour windows")
    tau = {w: pipeline.well_tau_labels(corpus.logs[w], codebooks)
           for w in sorted({win.well_id for win in windows})}
    X = pipeline.window_matrix(windows, tau, codebooks)
    out = Path(opts["out"])
    np.savez_compressed(
        out, X=X,
        well=np.asarray([w.well_id for w in windows]),
        end_index=np.asarray([w.end_index for w in windows], dtype=np.int64),
        end_time=np.asarray([w.end_time for w in windows], dtype=np.float64),
        kind=np.asarray([w.kind or "" for w in windows]))
    mt.outputs = [str(out)]
    mt.done(out)
    kinds = sorted({w.kind for w in windows if w.kind})
    print(f"featurized {len(windows)} windows "
          f"({sum(1 for w in windows if w.kind)} in-region; types: "
          f"{', '.join(kinds) if kinds else 'none'})")


def _train_models(opts: dict, command: str, build) -> None:
    mt = ManifestTimer(command, opts)
    feat_path = _require(opts["features"], "--features")
    X, _, _, _, kind_of = _load_features(feat_path)
    mt.inputs = [str(feat_path)]
    mt.seeds["train"] = int(opts["seed"])
    kinds = sorted({k for k in kind_of if k})
    if not kinds:
        raise DataError(f"{feat_path}: no in-region windows to train on")
    models, schema = {}, None
    for i, kind in enumerate(kinds):
        y = np.asarray([1 if k == kind else 0 for k in kind_of], dtype=np.int64)
        model, schema = build(opts, int(opts["seed"]) + i)
        models[kind] = model.fit(X, y)
    out = Path(opts["out"])
    _save_model_set(models, schema, out)
    mt.outputs = [str(out)]
    mt.done(out)
    print(f"trained {len(models)} one-vs-rest models: {', '.join(kinds)}")


def _cmd_train_gbm(opts: dict) -> None:
    def build(o, seed):
        cfg = TrainConfig(
            n_estimators=int(o["trees"]), learning_rate=float(o["learning_rate"]),
            max_depth=int(o["max_depth"]), subsample=float(o["subsample"]),
            colsample_bytree=float(o["colsample"]),
            positive_class_weight=float(o["pos_weight"]), seed=seed)
        return GradientBoostedTrees(cfg), "gbm-set/1"

    _train_models(opts, "train-gbm", build)


def _cmd_train_fcmh(opts: dict) -> None:
    def build(o, seed):
        cfg = AttentionConfig(
            epochs=int(o["epochs"]), batch_size=int(o["batch_size"]),
            learning_rate=float(o["learning_rate"]),
            positive_class_weight=float(o["pos_weight"]), seed=seed)
        return AttentionClassifier(cfg), "attention-set/1"

    _train_models(opts, "train-fcmh", build)


def _cmd_predict(opts: dict) -> None:
    mt = ManifestTimer("predict", opts)
    corpus_dir = _require(opts["corpus"], "--corpus")
    cb_path = _require(opts["codebooks"], "--codebooks")
    models_path = _require(opts["models"], "--models")
    corpus = pipeline.load_corpus(corpus_dir)
    codebooks = CodebookSet.load(cb_path)
    models = _load_model_set(models_path, "gbm-set/1", GradientBoostedTrees)
    mt.inputs = [str(corpus_dir), str(cb_path), str(models_path)]
    arrays: dict[str, np.ndarray] = {
        "wells": np.asarray(sorted(corpus.logs)),
        "kinds": np.asarray(sorted(models)),
    }
    for well in sorted(corpus.logs):
        tau = pipeline.well_tau_labels(corpus.logs[well], codebooks)
        times, probs = pipeline.probability_series(
            corpus.logs[well], tau, models, codebooks)
        arrays[f"times:{well}"] = times
        for kind, p in probs.items():
            arrays[f"prob:{kind}:{well}"] = p
    out = Path(opts["out"])
    np.savez_compressed(out, **arrays)
    mt.outputs = [str(out)]
    mt.done(out)
    print(f"scored {len(corpus.logs)} wells x {len(models)} types")


def _cmd_explain(opts: dict) -> None:
    mt = ManifestTimer("explain", opts)
    corpus_dir = _require(opts["corpus"], "--corpus")
    cb_path = _require(opts["codebooks"], "--codebooks")
    models_path = _require(opts["models"], "--models")
    probs_path = _require(opts["probs"], "--probs")
    corpus = pipeline.load_corpus(corpus_dir)
    if not corpus.events:
        raise DataError(f"{corpus_dir}: events.json with accident regions "
                        "is required to place explanations")
    codebooks = CodebookSet.load(cb_path)
    models = _load_model_set(models_path, "gbm-set/1", GradientBoostedTrees)
    series = _probs_series(probs_path)
    mt.inputs = [str(corpus_dir), str(cb_path), str(models_path),
                 str(probs_path)]
    fcmh_models = None
    if opts["fcmh"]:
        fcmh_path = _require(opts["fcmh"], "--fcmh")
        fcmh_models = _load_model_set(fcmh_path, "attention-set/1",
                                      AttentionClassifier)
        mt.inputs.append(str(fcmh_path))

    thresholds = {}
    for kind in sorted(models):
        maxp = region_max_probs(series[kind], corpus.events, kind)
        if len(maxp) == 0:
            continue
        thresholds[kind] = choose_threshold(
            maxp, COVERAGE_TARGETS.get(kind, 0.6))

    tau_of = _tau_labels_cache(corpus, codebooks)
    explainers = {kind: TreeShapExplainer(m) for kind, m in models.items()}
    m_shap = float(opts["m"])
    m_fcmh = float(opts["fcmh_m"])
    records = []
    for ev in sorted(corpus.events, key=lambda e: e.event_id):
        if ev.kind not in thresholds:
            continue
        log = corpus.logs[ev.well_id]
        times, probs = series[ev.kind][ev.well_id]
        moments = pipeline.alarm_moments(
            times, probs, thresholds[ev.kind], ev.region_start, ev.region_end,
            min_gap=float(opts["moment_gap"]))
        for t in moments:
            end_index = log.time_to_index(t) + 1
            if end_index < WINDOW_SAMPLES:
                continue
            ref = pipeline.WindowRef(ev.well_id, end_index,
                                     log.index_to_time(end_index - 1), ev.kind)
            x = pipeline.window_matrix([ref], {ev.well_id: tau_of(ev.well_id)},
                                       codebooks)[0]
            index = pipeline.window_index(tau_of(ev.well_id), end_index,
                                          codebooks)
            phi, base = explainers[ev.kind].shap_values(x)
            margin = float(models[ev.kind].predict_margin(x[None])[0])
            selected = select_top(phi, m_shap)
            t0 = log.index_to_time(end_index - WINDOW_SAMPLES)
            step = log.step
            spans = {ch: [[t0 + s0 * step, t0 + s1 * step] for s0, s1 in sp]
                     for ch, sp in highlight(index, selected).items()}
            rec = {
                "event_id": ev.event_id,
                "well_id": ev.well_id,
                "kind": ev.kind,
                "end_time": ref.end_time,
                "end_index": end_index,
                "probability": float(probs[np.searchsorted(times, t)]),
                "local_error": abs(base + float(phi.sum()) - margin),
                "selected": {"shap": [int(f) for f in selected]},
                "highlights": {"shap": spans},
            }
            if fcmh_models is not None and ev.kind in fcmh_models:
                imp = fcmh_models[ev.kind].importance(x)
                fsel = select_top(imp, m_fcmh)
                rec["selected"]["fcmh"] = [int(f) for f in fsel]
                rec["highlights"]["fcmh"] = {
                    ch: [[t0 + s0 * step, t0 + s1 * step] for s0, s1 in sp]
                    for ch, sp in highlight(index, fsel).items()}
            records.append(rec)

    out = Path(opts["out"])
    doc = {
        "schema": "explanations/1",
        "m_percent": {"shap": m_shap, "fcmh": m_fcmh},
        "thresholds": thresholds,
        "moments": records,
    }
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    mt.outputs = [str(out)]
    mt.done(out)
    print(f"explained {len(records)} alarm moments across "
          f"{len({r['event_id'] for r in records})} events")


def _load_explanations(path: Path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "explanations/1":
        raise ArtifactError(f"{path}: expected schema explanations/1, "
                            f"got {doc.get('schema')!r}")
    return doc


def _cmd_evaluate(opts: dict) -> None:
    mt = ManifestTimer("evaluate", opts)
    corpus_dir = _require(opts["corpus"], "--corpus")
    cb_path = _require(opts["codebooks"], "--codebooks")
    expl_path = _require(opts["explanations"], "--explanations")
    probs_path = _require(opts["probs"], "--probs")
    corpus = pipeline.load_corpus(corpus_dir)
    codebooks = CodebookSet.load(cb_path)
    doc = _load_explanations(expl_path)
    series = _probs_series(probs_path)
    mt.inputs = [str(corpus_dir), str(cb_path), str(expl_path),
                 str(probs_path)]
    mt.seeds["baseline"] = int(opts["seed"])
    if not doc["moments"]:
        raise EvaluationError(f"{expl_path}: no explained moments to score")

    refs_of: dict[str, list] = {}
    for ref in corpus.references:
        refs_of.setdefault(ref.event_id, []).append(ref)

    alarms = {}
    for kind, thr in sorted(doc["thresholds"].items()):
        rep = alarm_performance(series[kind], corpus.events, thr, kind)
        alarms[kind] = {
            "threshold": rep.threshold, "coverage": rep.coverage,
            "false_alarms_per_day": rep.false_alarms_per_day,
            "n_events": rep.n_events, "n_covered": rep.n_covered,
        }

    tau_of = _tau_labels_cache(corpus, codebooks)
    n_features = codebooks.n_features
    baseline_m = float(opts["baseline_m"])
    rng = np.random.default_rng(int(opts["seed"]))
    uniform_sel = select_top(uniform_baseline(n_features), baseline_m)
    has_fcmh = all("fcmh" in m["selected"] for m in doc["moments"])
    methods = ["shap"] + (["fcmh"] if has_fcmh else []) + ["random", "uniform"]
    totals: dict[str, dict[str, PrCounts]] = {
        m: {k: PrCounts() for k in (*ACCIDENT_TYPES, "micro")} for m in methods}
    n_draws = int(opts["draws"])
    for m in doc["moments"]:
        log = corpus.logs[m["well_id"]]
        index = pipeline.window_index(tau_of(m["well_id"]), m["end_index"],
                                      codebooks)
        w_start = log.index_to_time(m["end_index"] - WINDOW_SAMPLES)
        refs = refs_of.get(m["event_id"], [])

        def score(selected) -> PrCounts:
            return window_pr(index, np.asarray(selected, dtype=np.int64),
                             w_start, log.step, m["kind"], refs)

        per = {"shap": score(m["selected"]["shap"]),
               "uniform": score(uniform_sel)}
        if has_fcmh:
            per["fcmh"] = score(m["selected"]["fcmh"])
        acc = PrCounts()
        draws = random_baseline(n_features, n_draws,
                                seed=int(rng.integers(2 ** 31)))
        for vec in draws:
            acc.add(score(select_top(vec, baseline_m)))
        per["random"] = acc
        for name, counts in per.items():
            totals[name][m["kind"]].add(counts)
            totals[name]["micro"].add(counts)

    m_of = {"shap": doc["m_percent"]["shap"], "fcmh": doc["m_percent"]["fcmh"],
            "random": baseline_m, "uniform": baseline_m}
    metrics = {
        "alarms": alarms,
        "explanations": {
            "n_moments": len(doc["moments"]),
            "local_accuracy_max_err": max(m["local_error"]
                                          for m in doc["moments"]),
            "methods": {
                name: {"m_percent": m_of[name],
                       "micro": totals[name]["micro"].as_dict(),
                       "per_type": {k: totals[name][k].as_dict()
                                    for k in ACCIDENT_TYPES}}
                for name in methods},
        },
    }
    out = Path(opts["out"])
    with open(out, "w") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=2)
        fh.write("\n")
    tables = out.with_suffix(".txt")
    tables.write_text(table_text(metrics))
    mt.outputs = [str(out), str(tables)]
    mt.done(out)
    print(table_text(metrics), end="")


def _cmd_embed(opts: dict) -> None:
    mt = ManifestTimer("embed", opts)
    corpus_dir = _require(opts["corpus"], "--corpus")
    cb_path = _require(opts["codebooks"], "--codebooks")
    expl_path = _require(opts["explanations"], "--explanations")
    corpus = pipeline.load_corpus(corpus_dir)
    codebooks = CodebookSet.load(cb_path)
    doc = _load_explanations(expl_path)
    mt.inputs = [str(corpus_dir), str(cb_path), str(expl_path)]
    mt.seeds["sample"] = int(opts["seed"])
    outdir = Path(opts["out"])
    outdir.mkdir(parents=True, exist_ok=True)

    by_event: dict[str, list[dict]] = {}
    for m in doc["moments"]:
        by_event.setdefault(m["event_id"], []).append(m)
    if opts["events"]:
        wanted = [e.strip() for e in str(opts["events"]).split(",") if e.strip()]
        missing = [e for e in wanted if e not in by_event]
        if missing:
            raise UsageError(f"no explained moments for events: "
                             f"{', '.join(missing)}")
    else:
        # default: the most-explained event of each accident type
        best: dict[str, str] = {}
        for eid, ms in sorted(by_event.items()):
            kind = ms[0]["kind"]
            if kind not in best or len(ms) > len(by_event[best[kind]]):
                best[kind] = eid
        wanted = sorted(best.values())

    refs_of: dict[str, list] = {}
    for ref in corpus.references:
        refs_of.setdefault(ref.event_id, []).append(ref)
    rng = np.random.default_rng(int(opts["seed"]))
    summary = {}
    for eid in wanted:
        ms = by_event[eid]
        refs = refs_of.get(eid, [])
        if not refs:
            raise DataError(f"event {eid} has no reference regions")
        k = codebooks.k
        # reference channel whose clusters the selections touch most often
        per_channel: dict[str, set[int]] = {r.channel: set() for r in refs}
        for m in ms:
            for f in m["selected"]["shap"]:
                name = MNEMONICS[f // k]
                if name in per_channel:
                    per_channel[name].add(f % k)
        channel = max(per_channel, key=lambda c: len(per_channel[c]))
        if not per_channel[channel]:
            raise EvaluationError(f"event {eid}: selections never touch its "
                                  "reference channels")
        cb = codebooks.codebooks[channel]
        log = corpus.logs[ms[0]["well_id"]]
        clusters = sorted(per_channel[channel])
        values = log.data[channel]
        raw = extract_tau(values, codebooks.tau_len, codebooks.stride)
        starts = np.arange(len(raw)) * codebooks.stride
        t_start = log.start + starts * log.step
        labels = cb.assign_raw(raw)
        picked = np.isin(labels, clusters)
        ref = next(r for r in refs if r.channel == channel)
        expert = (t_start >= ref.start) & (t_start + codebooks.tau_len
                                           * log.step <= ref.end)

        groups, rows = [], []
        hi_idx = np.nonzero(picked)[0]
        if len(hi_idx) > int(opts["max_group"]):
            hi_idx = rng.choice(hi_idx, int(opts["max_group"]), replace=False)
        ex_idx = np.nonzero(expert & ~picked)[0]
        if len(ex_idx) > int(opts["max_group"]):
            ex_idx = rng.choice(ex_idx, int(opts["max_group"]), replace=False)
        bg_idx = np.nonzero(~picked & ~expert)[0]
        n_bg = min(len(bg_idx), int(opts["max_group"]))
        bg_idx = rng.choice(bg_idx, n_bg, replace=False)
        for idx, tag in ((hi_idx, "highlighted"), (ex_idx, "expert"),
                         (bg_idx, "codebook")):
            for i in np.sort(idx):
                rows.append(cb.normalize(raw[i][None])[0])
                groups.append(tag)
        if len(rows) < 8:
            raise EvaluationError(f"event {eid}: too few tau-segments to embed")
        X = np.asarray(rows)
        D = pairwise_sq_distances(X)
        perp = min(float(opts["perplexity"]), (len(X) - 1) / 3.0)
        Y = tsne(D, perplexity=perp, n_iter=int(opts["iters"]))
        svg = embedding_figure(Y, groups, title=f"{eid} {ms[0]['kind']} "
                                                f"{channel}")
        svg_path = outdir / f"embedding_{eid}_{channel}.svg"
        svg_path.write_text(svg)
        mt.outputs.append(str(svg_path))
        tags = np.asarray(groups)
        sil = silhouette(Y, (tags == "highlighted").astype(np.int64))
        summary[eid] = {"channel": channel, "n_points": len(X),
                        "clusters": [int(c) for c in clusters],
                        "silhouette_highlighted": sil,
                        "svg": svg_path.name}
        print(f"{eid}: embedded {len(X)} segments on {channel} "
              f"(silhouette {sil:.3f})")

    out = outdir / "embeddings.json"
    with open(out, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    mt.outputs.append(str(out))
    mt.done(out)


def _cmd_report(opts: dict) -> None:
    mt = ManifestTimer("report", opts)
    corpus_dir = _require(opts["corpus"], "--corpus")
    expl_path = _require(opts["explanations"], "--explanations")
    probs_path = _require(opts["probs"], "--probs")
    corpus = pipeline.load_corpus(corpus_dir)
    doc = _load_explanations(expl_path)
    series = _probs_series(probs_path)
    mt.inputs = [str(corpus_dir), str(expl_path), str(probs_path)]

    sections: list[tuple[str, str]] = []
    if opts["metrics"]:
        metrics_path = _require(opts["metrics"], "--metrics")
        with open(metrics_path) as fh:
            metrics = json.load(fh)
        mt.inputs.append(str(metrics_path))
        sections.append(("Alarm performance", alarms_table_html(metrics)))
        sections.append(("Highlight quality by method",
                         methods_table_html(metrics)))

    by_event: dict[str, list[dict]] = {}
    for m in doc["moments"]:
        by_event.setdefault(m["event_id"], []).append(m)
    wanted = sorted(by_event)[:int(opts["max_events"])]
    refs_of: dict[str, list] = {}
    for ref in corpus.references:
        refs_of.setdefault(ref.event_id, []).append(ref)
    ev_of = {e.event_id: e for e in corpus.events}

    for eid in wanted:
        first = by_event[eid][0]
        ev = ev_of[eid]
        log = corpus.logs[ev.well_id]
        w_start = log.index_to_time(first["end_index"] - WINDOW_SAMPLES)
        t_lo = max(log.start, min(ev.region_start - 1800.0, w_start - 300.0))
        t_hi = min(log.end, ev.region_end + 600.0)
        i0, i1 = log.time_to_index(t_lo), log.time_to_index(t_hi) + 1
        times = log.start + np.arange(i0, i1) * log.step
        refs = refs_of.get(eid, [])
        channels = {r.channel: log.data[r.channel][i0:i1] for r in refs}
        references = {r.channel: [(r.start, r.end)] for r in refs}
        highlights = {ch: [tuple(sp) for sp in spans]
                      for ch, spans in first["highlights"]["shap"].items()}
        w_times, w_probs = series[ev.kind][ev.well_id]
        svg = explanation_figure(
            times, channels, highlights, references, w_times, w_probs,
            doc["thresholds"][ev.kind],
            title=(f"{eid} {ev.kind} {ev.well_id}: first alarm at "
                   f"+{first['end_time'] - ev.region_start:.0f}s into the "
                   "region"))
        sections.append((f"{eid} ({ev.kind}, {ev.well_id})", svg))

    if opts["embeddings"]:
        emb_dir = _require(opts["embeddings"], "--embeddings")
        for svg_path in sorted(Path(emb_dir).glob("embedding_*.svg")):
            sections.append((svg_path.stem.replace("_", " "),
                             svg_path.read_text()))
            mt.inputs.append(str(svg_path))

    out = Path(opts["out"])
    out.write_text(html_report("Drilling accident alarms", sections))
    mt.outputs = [str(out)]
    mt.done(out)
    print(f"wrote report with {len(sections)} sections to {out}")


# ---------------------------------------------------------------------------
# parser plumbing

_DEFAULTS: dict[str, dict] = {
    "gen": {"seed": 7, "wells": 20, "hours": 6.0, "counts": None},
    "train-codebooks": {"k": 200, "iters": 40, "seed": 0, "max_tau": None},
    "featurize": {},
    "train-gbm": {"trees": 250, "learning_rate": 0.05, "max_depth": 10,
                  "subsample": 0.9, "colsample": 0.9, "pos_weight": 5.0,
                  "seed": 0},
    "train-fcmh": {"epochs": 12, "batch_size": 16, "learning_rate": 0.05,
                   "pos_weight": 5.0, "seed": 0},
    "predict": {},
    "explain": {"m": 20.0, "fcmh_m": 24.0, "moment_gap": 60.0, "fcmh": None},
    "evaluate": {"seed": 7, "baseline_m": 45.0, "draws": 10},
    "embed": {"seed": 7, "perplexity": 30.0, "iters": 750, "max_group": 120,
              "events": None},
    "report": {"metrics": None, "embeddings": None, "max_events": 8},
}

_HANDLERS = {
    "gen": _cmd_gen,
    "train-codebooks": _cmd_train_codebooks,
    "featurize": _cmd_featurize,
    "train-gbm": _cmd_train_gbm,
    "train-fcmh": _cmd_train_fcmh,
    "predict": _cmd_predict,
    "explain": _cmd_explain,
    "evaluate": _cmd_evaluate,
    "embed": _cmd_embed,
    "report": _cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML file with per-command sections")

    p = _Parser(prog="drillexplain",
                description="Interpretable drilling-accident alarms")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="command")

    sp = {}
    for name, help_text in (
        ("gen", "generate a synthetic telemetry corpus"),
        ("train-codebooks", "fit per-channel tau-segment codebooks"),
        ("featurize", "count vectors for training/evaluation windows"),
        ("train-gbm", "train one-vs-rest boosted-tree classifiers"),
        ("train-fcmh", "train one-vs-rest attention classifiers"),
        ("predict", "score every grid moment of every well"),
        ("explain", "attribute alarms and highlight telemetry spans"),
        ("evaluate", "alarm and highlight quality metrics"),
        ("embed", "2-D maps of highlighted tau-segments"),
        ("report", "render an HTML report of cases and metrics"),
    ):
        sp[name] = sub.add_parser(name, parents=[common], help=help_text)

    sp["gen"].add_argument("--out", required=True)
    sp["gen"].add_argument("--seed", type=int)
    sp["gen"].add_argument("--wells", type=int)
    sp["gen"].add_argument("--hours", type=float)
    sp["gen"].add_argument("--counts",
                           help="events per type, e.g. KickFlow=3,Stuck=2")

    sp["train-codebooks"].add_argument("--corpus", required=True)
    sp["train-codebooks"].add_argument("--out", required=True)
    sp["train-codebooks"].add_argument("--k", type=int)
    sp["train-codebooks"].add_argument("--iters", type=int)
    sp["train-codebooks"].add_argument("--max-tau", dest="max_tau", type=int)
    sp["train-codebooks"].add_argument("--seed", type=int)

    sp["featurize"].add_argument("--corpus", required=True)
    sp["featurize"].add_argument("--codebooks", required=True)
    sp["featurize"].add_argument("--out", required=True)

    sp["train-gbm"].add_argument("--features", required=True)
    sp["train-gbm"].add_argument("--out", required=True)
    sp["train-gbm"].add_argument("--trees", type=int)
    sp["train-gbm"].add_argument("--learning-rate", dest="learning_rate",
                                 type=float)
    sp["train-gbm"].add_argument("--max-depth", dest="max_depth", type=int)
    sp["train-gbm"].add_argument("--subsample", type=float)
    sp["train-gbm"].add_argument("--colsample", type=float)
    sp["train-gbm"].add_argument("--pos-weight", dest="pos_weight", type=float)
    sp["train-gbm"].add_argument("--seed", type=int)

    sp["train-fcmh"].add_argument("--features", required=True)
    sp["train-fcmh"].add_argument("--out", required=True)
    sp["train-fcmh"].add_argument("--epochs", type=int)
    sp["train-fcmh"].add_argument("--batch-size", dest="batch_size", type=int)
    sp["train-fcmh"].add_argument("--learning-rate", dest="learning_rate",
                                  type=float)
    sp["train-fcmh"].add_argument("--pos-weight", dest="pos_weight",
                                  type=float)
    sp["train-fcmh"].add_argument("--seed", type=int)

    sp["predict"].add_argument("--corpus", required=True)
    sp["predict"].add_argument("--codebooks", required=True)
    sp["predict"].add_argument("--models", required=True)
    sp["predict"].add_argument("--out", required=True)

    sp["explain"].add_argument("--corpus", required=True)
    sp["explain"].add_argument("--codebooks", required=True)
    sp["explain"].add_argument("--models", required=True)
    sp["explain"].add_argument("--probs", required=True)
    sp["explain"].add_argument("--out", required=True)
    sp["explain"].add_argument("--fcmh")
    sp["explain"].add_argument("--m", type=float)
    sp["explain"].add_argument("--fcmh-m", dest="fcmh_m", type=float)
    sp["explain"].add_argument("--moment-gap", dest="moment_gap", type=float)

    sp["evaluate"].add_argument("--corpus", required=True)
    sp["evaluate"].add_argument("--codebooks", required=True)
    sp["evaluate"].add_argument("--explanations", required=True)
    sp["evaluate"].add_argument("--probs", required=True)
    sp["evaluate"].add_argument("--out", required=True)
    sp["evaluate"].add_argument("--seed", type=int)
    sp["evaluate"].add_argument("--baseline-m", dest="baseline_m", type=float)
    sp["evaluate"].add_argument("--draws", type=int)

    sp["embed"].add_argument("--corpus", required=True)
    sp["embed"].add_argument("--codebooks", required=True)
    sp["embed"].add_argument("--explanations", required=True)
    sp["embed"].add_argument("--out", required=True)
    sp["embed"].add_argument("--events")
    sp["embed"].add_argument("--seed", type=int)
    sp["embed"].add_argument("--perplexity", type=float)
    sp["embed"].add_argument("--iters", type=int)
    sp["embed"].add_argument("--max-group", dest="max_group", type=int)

    sp["report"].add_argument("--corpus", required=True)
    sp["report"].add_argument("--explanations", required=True)
    sp["report"].add_argument("--probs", required=True)
    sp["report"].add_argument("--out", required=True)
    sp["report"].add_argument("--metrics")
    sp["report"].add_argument("--embeddings")
    sp["report"].add_argument("--max-events", dest="max_events", type=int)

    return p


def _resolve(args: argparse.Namespace) -> dict:
    doc = load_config(getattr(args, "config", None))
    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "config")}
    opts = dict(_DEFAULTS[args.command])
    opts.update(command_options(doc, args.command, flags))
    return opts


def main(argv: list[str] | None = None) -> int:
    try:
        parser = _build_parser()
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        _HANDLERS[args.command](_resolve(args))
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except DrillExplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
