"""Batch command-line surface wiring the pipeline end to end.

Subcommands:
    synth      synthesize a dataset from an experiment config
    pipeline   detect bursts and extract features for every session
    enroll     build per-device fingerprints from a labeled feature table
    verify     score probe features against one claimed identity
    evaluate   EER / ROC / FAR / FRR from a labeled feature table and a store
    tune       run the adaptive controller against a synthesized plant

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
All randomness comes from seeds in the config, so every command is
deterministic and output files are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .detect import DetectorParams, detect_bursts
from .emitter import render_session
from .errors import ValidationError, WorkbenchError
from .features import (
    ExtractionConfig,
    FeatureVector,
    catalog_names,
    catalog_version,
    extract,
    fisher_select,
)
from .receiver import ReceiverConfig, acquire
from .sigmf_io import (
    DatasetSeeds,
    _channel_from_doc,
    _receiver_from_doc,
    _seeds_from_doc,
    build_dataset,
    propagate,
    read_recording,
    schedule_from_doc,
)
from .tuning import ObjectiveParams, TuningGrid, objective, tune, write_trace_csv
from .verify import (
    calibrate_threshold,
    enroll,
    evaluate,
    genuine_impostor_scores,
    load_fingerprint_store,
    save_fingerprint_store,
    verify,
)

FEATURE_CSV_PREFIX = ("session", "roi_index", "label", "start_sample", "length")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file is not valid JSON: {exc}") from None


def _require_section(config: dict, name: str) -> dict:
    if name not in config:
        raise ValidationError(f"config missing field '{name}'")
    return config[name]


def _experiment_parts(config: dict, seed_override: int | None):
    """Parse the common sections of an experiment config."""
    schedule_doc = dict(_require_section(config, "schedule"))
    schedule_doc.setdefault("format", "schedule-v1")
    schedule_doc["profiles"] = _require_section(config, "profiles")
    schedule, profiles = schedule_from_doc(schedule_doc)

    channel = _channel_from_doc(_require_section(config, "channel"))
    seeds = _seeds_from_doc(_require_section(config, "seeds"))
    if seed_override is not None:
        seeds = DatasetSeeds(seed_override, seed_override + 1, seed_override + 2)

    sample_rate = config.get("sample_rate_hz")
    if sample_rate is None:
        raise ValidationError("config missing field 'sample_rate_hz'")
    sps = config.get("samples_per_symbol")
    if sps is None:
        raise ValidationError("config missing field 'samples_per_symbol'")
    return schedule, profiles, channel, seeds, float(sample_rate), int(sps)


def _detector_from_config(config: dict) -> DetectorParams:
    doc = config.get("detector", {})
    return DetectorParams(
        window=int(doc.get("window", 64)),
        open_threshold_db=float(doc.get("open_threshold_db", 10.0)),
        close_threshold_db=float(doc.get("close_threshold_db", 6.0)),
        min_length=int(doc.get("min_length", 1)),
        merge_gap=int(doc.get("merge_gap", 0)),
    )


def _extraction_from_config(config: dict) -> ExtractionConfig:
    doc = config.get("extraction", {})
    return ExtractionConfig(wpd_depth=int(doc.get("wpd_depth", 4)))


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    schedule, profiles, channel, seeds, sample_rate, sps = _experiment_parts(
        config, args.seed_override
    )
    rx = _receiver_from_doc(_require_section(config, "receiver"))
    result = build_dataset(
        schedule, profiles, channel, rx, seeds, args.out, sample_rate, sps,
        stem=config.get("stem", "session"),
    )
    if args.verbose:
        print(f"rendered {len(result.ground_truth)} bursts into {result.data_file}", file=sys.stderr)
    print(result.manifest_file)
    return 0


def _feature_rows_for_session(stem: Path, detector: DetectorParams, extraction: ExtractionConfig):
    recording, meta = read_recording(stem)
    rois = detect_bursts(recording, detector)
    rows = []
    for i, roi in enumerate(rois):
        label = ""
        best_overlap = 0
        for ann in meta.annotations:
            lo = max(roi.start_sample, ann.sample_start)
            hi = min(roi.end_sample, ann.sample_start + ann.sample_count)
            if hi - lo > best_overlap:
                best_overlap = hi - lo
                label = ann.label
        vec = extract(roi, recording, extraction)
        rows.append((stem.name, i, label, roi.start_sample, roi.length, vec))
    return rows


def cmd_pipeline(args) -> int:
    config = _load_config(args.config)
    detector = _detector_from_config(config)
    extraction = _extraction_from_config(config)

    dataset_dir = Path(args.dataset)
    stems = sorted(p.with_suffix("") for p in dataset_dir.glob("*.sigmf-meta"))
    if not stems:
        raise ValidationError(f"no .sigmf-meta files found in '{dataset_dir}'")

    failures: list[str] = []

    def worker(stem: Path):
        try:
            return _feature_rows_for_session(stem, detector, extraction)
        except (WorkbenchError, OSError) as exc:
            failures.append(f"{stem}: {exc}")
            return []

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(worker, stems))
    else:
        results = [worker(stem) for stem in stems]
    all_rows = [row for rows in results for row in rows]
    if args.verbose:
        for stem, rows in zip(stems, results):
            print(f"{stem.name}: {len(rows)} ROI(s)", file=sys.stderr)

    for failure in failures:
        print(f"warning: {failure}", file=sys.stderr)
    if failures and not all_rows:
        print("error: every session failed", file=sys.stderr)
        return 1

    names = catalog_names(extraction)
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(list(FEATURE_CSV_PREFIX) + list(names))
    for session, idx, label, start, length, vec in all_rows:
        writer.writerow([session, idx, label, start, length] + [repr(float(v)) for v in vec.values])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    features_path = out_dir / "features.csv"
    _atomic_write_text(features_path, out.getvalue())
    print(features_path)
    return 0


def _read_feature_table(path: str) -> tuple[list[str], list[str], list[FeatureVector]]:
    """Returns (feature_names, labels, vectors) from a pipeline CSV."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[: len(FEATURE_CSV_PREFIX)] != list(FEATURE_CSV_PREFIX):
            raise ValidationError(f"'{path}' is not a feature table (bad header)")
        names = header[len(FEATURE_CSV_PREFIX):]
        n_wpd = sum(1 for n in names if n.startswith("wpd_e"))
        if n_wpd == 0 or n_wpd & (n_wpd - 1):
            raise ValidationError(f"'{path}' is not a feature table (no wavelet-energy columns)")
        version = catalog_version(ExtractionConfig(wpd_depth=int(math.log2(n_wpd))))
        labels, vectors = [], []
        for row in reader:
            prefix = row[: len(FEATURE_CSV_PREFIX)]
            values = np.array([float(v) for v in row[len(FEATURE_CSV_PREFIX):]])
            labels.append(prefix[2])
            vectors.append(FeatureVector(
                names=tuple(names),
                values=values,
                roi_ref=(prefix[0], int(prefix[3])),
                catalog_version=version,
            ))
    if not vectors:
        raise ValidationError(f"feature table '{path}' has no rows")
    return names, labels, vectors


def cmd_enroll(args) -> int:
    config = _load_config(args.config)
    enrollment = config.get("enrollment", {})
    ridge = float(enrollment.get("ridge_lambda", 1e-3))
    keep = enrollment.get("keep_features")

    names, labels, vectors = _read_feature_table(args.features)
    labeled = [(v, l) for v, l in zip(vectors, labels) if l]
    if not labeled:
        raise ValidationError("feature table has no labeled rows to enroll from")
    vecs = [v for v, _ in labeled]
    labs = [l for _, l in labeled]

    k = int(keep) if keep is not None else len(vecs[0])
    selection = fisher_select(vecs, labs, k)

    fingerprints = []
    for device in sorted(set(labs)):
        device_vecs = [v for v, l in zip(vecs, labs) if l == device]
        fingerprints.append(enroll(device, device_vecs, selection, ridge))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    store_path = out_dir / "fingerprints.json"
    save_fingerprint_store(fingerprints, store_path, catalog_names=names)
    print(store_path)
    return 0


def cmd_verify(args) -> int:
    _names, _labels, vectors = _read_feature_table(args.features)
    store = load_fingerprint_store(args.store)
    if args.claim not in store:
        print(f"error: claimed id '{args.claim}' is not enrolled", file=sys.stderr)
        return 1
    fp = store[args.claim]

    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["session", "roi_start", "claimed_id", "squared_distance", "threshold", "accepted"])
    for vec in vectors:
        decision = verify(vec, fp)
        writer.writerow([
            vec.roi_ref[0], vec.roi_ref[1], decision.claimed_id,
            repr(decision.squared_distance), repr(decision.threshold_used),
            int(decision.accepted),
        ])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    decisions_path = out_dir / "decisions.csv"
    _atomic_write_text(decisions_path, out.getvalue())
    print(decisions_path)
    return 0


def cmd_evaluate(args) -> int:
    _names, labels, vectors = _read_feature_table(args.features)
    store = load_fingerprint_store(args.store)
    genuine, impostor = genuine_impostor_scores(vectors, labels, store)
    if genuine.size == 0 or impostor.size == 0:
        raise ValidationError("need both genuine and impostor scores; check labels vs store")
    report = evaluate(genuine, impostor)
    eer_threshold = calibrate_threshold(genuine, impostor, policy="eer")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    roc_out = io.StringIO()
    writer = csv.writer(roc_out)
    writer.writerow(["far", "frr", "threshold"])
    for far, frr, thr in report.roc:
        writer.writerow([repr(float(far)), repr(float(frr)), repr(float(thr))])
    roc_path = out_dir / "roc.csv"
    _atomic_write_text(roc_path, roc_out.getvalue())

    metrics = {
        "eer": report.eer,
        "eer_threshold": report.eer_threshold,
        "calibrated_threshold": eer_threshold,
        "n_genuine": int(genuine.size),
        "n_impostor": int(impostor.size),
        "far_at_frr": {str(k): v for k, v in report.far_at.items()},
        "frr_at_far": {str(k): v for k, v in report.frr_at.items()},
    }
    metrics_path = out_dir / "metrics.json"
    _atomic_write_text(metrics_path, json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    print(metrics_path)
    return 0


def cmd_tune(args) -> int:
    config = _load_config(args.config)
    schedule, profiles, channel, seeds, sample_rate, sps = _experiment_parts(
        config, args.seed_override
    )
    detector = _detector_from_config(config)
    tuning_doc = _require_section(config, "tuning")
    for key in ("gain_db_values", "filter_bw_hz_values"):
        if key not in tuning_doc or not tuning_doc[key]:
            raise ValidationError(f"config missing field 'tuning.{key}'")
    grid = TuningGrid(tuple(tuning_doc["gain_db_values"]), tuple(tuning_doc["filter_bw_hz_values"]))
    strategy = tuning_doc.get("strategy", "exhaustive")
    budget = tuning_doc.get("budget")
    max_rounds = int(tuning_doc.get("max_rounds", 8))
    rx_template = _receiver_from_doc(_require_section(config, "receiver"))
    obj_doc = tuning_doc.get("objective", {})
    obj_params = ObjectiveParams(
        clip_weight=float(obj_doc.get("clip_weight", 0.5)),
        no_roi_penalty=float(obj_doc.get("no_roi_penalty", 100.0)),
        full_scale=rx_template.full_scale,
    )

    # The plant is synthesized once; each evaluation re-acquires it.
    rendered, truth = render_session(schedule, profiles, sample_rate, sps, seeds.render)
    received = propagate(rendered, truth, channel, seeds.channel)

    def plant(rx_config: ReceiverConfig):
        acquired = acquire(received, rx_config, seeds.frontend)
        rois = detect_bursts(acquired, detector)
        return acquired, rois, objective(acquired, rois, obj_params)

    trace = tune(
        plant, grid, strategy=strategy,
        budget=int(budget) if budget is not None else None,
        max_rounds=max_rounds, config_template=rx_template,
    )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    write_trace_csv(trace, trace_path)
    best = {
        "gain_db": trace.best_config.gain_db,
        "filter_bw_hz": trace.best_config.filter_bw_hz,
        "adc_bits": trace.best_config.adc_bits,
        "full_scale": trace.best_config.full_scale,
        "frontend_noise_power": trace.best_config.frontend_noise_power,
        "objective": trace.best_value,
        "n_evaluations": trace.n_evaluations,
    }
    best_path = out_dir / "best_config.json"
    _atomic_write_text(best_path, json.dumps(best, indent=2, sort_keys=True) + "\n")
    print(trace_path)
    print(best_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radiofp",
        description="Deterministic RF-fingerprinting workbench (synthesize, detect, "
                    "extract, enroll, verify, evaluate, tune).",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed-override", type=int, default=None,
                        help="replace all config seeds with values derived from this one")
    common.add_argument("--threads", type=int, default=1, help="worker threads where supported")
    common.add_argument("--verbose", action="store_true", help="chatty progress on stderr")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="synthesize a dataset from a config")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", parents=[common], help="detect + extract features for a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True, help="directory holding .sigmf-data/.sigmf-meta pairs")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("enroll", parents=[common], help="enroll fingerprints from a feature table")
    p.add_argument("--config", required=True)
    p.add_argument("--features", required=True, help="feature CSV from the pipeline command")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("verify", parents=[common], help="verify probes against a claimed identity")
    p.add_argument("--features", required=True)
    p.add_argument("--store", required=True, help="fingerprint store (JSON)")
    p.add_argument("--claim", required=True, help="claimed device id")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evaluate", parents=[common], help="EER/ROC metrics from a labeled table")
    p.add_argument("--features", required=True)
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", parents=[common], help="run the adaptive controller on a scenario")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_tune)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except WorkbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
