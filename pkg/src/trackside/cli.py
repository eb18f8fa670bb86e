"""Operator command line.

Subcommands: process, evaluate-detections, evaluate-classification,
evaluate-keypoints, split, anchors, synth-gen, export-feedback, metrics,
serve. Exit codes: 0 success, 1 usage, 2 data error, 3 provider error,
4 metric-gate failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from trackside.model import BoundingBox, PhotoRecord, PhotoStatus
from trackside.providers.base import ProviderUnavailable, UnreadableImage

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3
EXIT_GATE = 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class GateFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would sys.exit(2)
        raise UsageError(message)


def _read_json(path: str) -> dict | list:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _emit(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _check_gate(value: float | None, gate: float | None, metric_name: str) -> None:
    if gate is None:
        return
    if value is None or value < gate:
        raise GateFailure(f"{metric_name}={value} below gate {gate}")


# -- process ----------------------------------------------------------------


def _build_provider(args) -> tuple:
    """Returns (provider, manifest-or-None). scenes mode wins when present."""
    from trackside.providers import RemoteProvider, SyntheticProvider
    from trackside.synth import MANIFEST_NAME, load_manifest

    input_dir = Path(args.input)
    if not input_dir.is_dir():
        raise DataError(f"input directory not found: {input_dir}")
    manifest = None
    if (input_dir / MANIFEST_NAME).exists():
        manifest = load_manifest(input_dir)
    if manifest is not None or any(input_dir.glob("*.scene.json")):
        return SyntheticProvider(input_dir), manifest
    if args.endpoint:
        return RemoteProvider(args.endpoint), None
    raise DataError(
        f"{input_dir} has no scene sidecars and no --endpoint was given"
    )


def _pipeline_config(args, manifest):
    from trackside.pipeline import PipelineConfig

    if args.config:
        config = PipelineConfig.from_file(args.config)
    else:
        config = PipelineConfig()
    if manifest is not None:
        if not config.roster:
            config.roster = tuple(manifest.roster)
        config.manufacturer_labels = tuple(manifest.manufacturers)
    if args.seed is not None:
        config.seed = args.seed
    return config


def cmd_process(args) -> int:
    from trackside.pipeline import reassign_annotations, run_photos
    from trackside.store import FileDocumentStore, RaceEvent, submit_feedback
    from trackside.synth import load_sidecar, sidecar_path_for
    from trackside.teams import TeamCentroidStore

    provider, manifest = _build_provider(args)
    config = _pipeline_config(args, manifest)
    store = FileDocumentStore(args.store)

    event_id = args.event or (manifest.event_id if manifest else None)
    if event_id is None:
        raise DataError("--event is required when the input has no event manifest")
    if store.get_event(event_id) is None:
        name = manifest.name if manifest else event_id
        series = manifest.series if manifest else ""
        date = manifest.date if manifest else ""
        store.put_event(RaceEvent(event_id, name, series, date))

    known = {p.photo_id for p in store.iter_photos(event_id)}
    if manifest is not None:
        entries = [
            (e.photo_id, e.uri, e.width_px, e.height_px)
            for e in manifest.photos
        ]
    else:
        entries = []
        exts = {".png", ".jpg", ".jpeg"}
        for path in sorted(Path(args.input).iterdir()):
            if path.suffix.lower() not in exts:
                continue
            try:
                from PIL import Image

                with Image.open(path) as img:
                    width, height = img.size
            except OSError as exc:
                raise DataError(f"unreadable image {path}: {exc}") from exc
            entries.append((path.stem, str(path), width, height))
    for photo_id, uri, width, height in entries:
        if photo_id not in known:
            store.put_photo(PhotoRecord(photo_id, event_id, uri, width, height))

    snapshot = store.load_team_snapshot(event_id)
    if snapshot and snapshot.get("teams"):
        team_store = TeamCentroidStore.restore(snapshot)
    else:
        team_store = TeamCentroidStore(config.team)

    pending = [
        p
        for p in store.iter_photos(event_id)
        if args.force or p.status is PhotoStatus.PENDING
    ]

    def persist(result) -> None:
        store.put_photo(result.record)
        for ref, embedding in result.embeddings.items():
            store.put_embedding(event_id, ref, embedding)

    results = run_photos(
        pending,
        provider,
        config,
        team_store,
        workers=args.workers,
        force=args.force,
        on_result=persist,
    )

    # sidecar feedback markers stand in for user feedback actions
    feedback_submitted = 0
    for result in results:
        record = result.record
        sidecar_path = sidecar_path_for(record.uri)
        if not sidecar_path.exists():
            continue
        sidecar = load_sidecar(sidecar_path)
        if sidecar.feedback_reason:
            submit_feedback(store, record.photo_id, sidecar.feedback_reason)
            feedback_submitted += 1

    changed = reassign_annotations(
        store.iter_photos(event_id), store.get_embedding, team_store
    )
    for record in changed:
        store.put_photo(record)
    store.save_team_snapshot(event_id, team_store.dump())

    counts: dict[str, int] = {}
    for photo in store.iter_photos(event_id):
        counts[photo.status.value] = counts.get(photo.status.value, 0) + 1
    _emit(
        {
            "event_id": event_id,
            "processed_now": len(results),
            "reassigned": len(changed),
            "feedback_submitted": feedback_submitted,
            "photo_counts": counts,
        },
        args.out,
    )
    return EXIT_OK


# -- evaluation -------------------------------------------------------------


def _parse_box(d: dict) -> BoundingBox:
    box = d["box"]
    if isinstance(box, dict):
        return BoundingBox.from_dict(box)
    return BoundingBox(float(box[0]), float(box[1]), float(box[2]), float(box[3]))


def cmd_evaluate_detections(args) -> int:
    from trackside.evaluation import (
        BoxPrediction,
        BoxTruth,
        NoGroundTruth,
        mean_average_precision,
    )

    data = _read_json(args.input)
    try:
        predictions = [
            BoxPrediction(d["image_id"], d["label"], _parse_box(d), float(d["score"]))
            for d in data["predictions"]
        ]
        truths = [
            BoxTruth(d["image_id"], d["label"], _parse_box(d)) for d in data["ground_truth"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed evaluation input: {exc}") from exc
    thresholds = (
        tuple(float(t) for t in args.iou_thresholds.split(","))
        if args.iou_thresholds
        else None
    )
    try:
        if thresholds:
            report = mean_average_precision(predictions, truths, thresholds)
        else:
            report = mean_average_precision(predictions, truths)
    except NoGroundTruth as exc:
        raise DataError(str(exc)) from exc
    payload = {
        "map_coco": report.map_coco,
        "ap50": report.ap50,
        "map_per_threshold": {str(k): v for k, v in report.map_per_threshold.items()},
        "per_class": {
            c: {str(t): ap for t, ap in by_t.items()} for c, by_t in report.per_class.items()
        },
        "skipped_classes": list(report.skipped_classes),
    }
    _emit(payload, args.out)
    gate_value = report.ap50 if args.gate_metric == "ap50" else report.map_coco
    _check_gate(gate_value, args.gate, args.gate_metric)
    return EXIT_OK


def cmd_evaluate_classification(args) -> int:
    from trackside.evaluation import accuracy_table

    data = _read_json(args.input)
    if isinstance(data, dict) and "pairs" in data:
        pairs = [(str(p), str(t)) for p, t in data["pairs"]]
    else:
        raise DataError('classification input must be {"pairs": [[predicted, true], ...]}')
    if not pairs:
        raise DataError("no classification pairs given")
    labels = args.labels.split(",") if args.labels else None
    report = accuracy_table(pairs, labels)
    _emit({"overall": report.overall, "per_class": report.per_class}, args.out)
    _check_gate(report.overall, args.gate, "overall accuracy")
    return EXIT_OK


def cmd_evaluate_keypoints(args) -> int:
    from trackside.evaluation import (
        KeypointPrediction,
        KeypointTruth,
        NoGroundTruth,
        keypoint_ap_ar,
    )

    data = _read_json(args.input)
    try:
        predictions = [
            KeypointPrediction(
                d["image_id"],
                tuple((float(x), float(y)) for x, y in d["points"]),
                float(d["score"]),
            )
            for d in data["predictions"]
        ]
        truths = [
            KeypointTruth(
                d["image_id"],
                tuple((float(x), float(y)) for x, y in d["points"]),
                tuple(bool(v) for v in d["visibility"]),
                float(d["area"]),
            )
            for d in data["ground_truth"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed keypoint input: {exc}") from exc
    try:
        report = keypoint_ap_ar(predictions, truths, falloff=args.falloff)
    except NoGroundTruth as exc:
        raise DataError(str(exc)) from exc
    _emit(
        {
            "ap": report.ap,
            "ar": report.ar,
            "ap_per_threshold": {str(k): v for k, v in report.ap_per_threshold.items()},
            "ar_per_threshold": {str(k): v for k, v in report.ar_per_threshold.items()},
        },
        args.out,
    )
    _check_gate(report.ap, args.gate, "keypoint AP")
    return EXIT_OK


def cmd_split(args) -> int:
    from trackside.evaluation import BadFractions, split_dataset

    data = _read_json(args.input)
    items = data["items"] if isinstance(data, dict) else data
    fractions = tuple(float(f) for f in args.fractions.split(","))
    if len(fractions) != 3:
        raise DataError("--fractions must be three comma-separated numbers")
    try:
        train, val, test = split_dataset(items, fractions, args.seed)
    except BadFractions as exc:
        raise DataError(str(exc)) from exc
    _emit({"train": train, "val": val, "test": test}, args.out)
    return EXIT_OK


def cmd_anchors(args) -> int:
    from trackside.anchors import EmptyInput, KTooLarge, kmeans_anchors

    data = _read_json(args.boxes)
    boxes = data["boxes"] if isinstance(data, dict) else data
    try:
        shapes = [(float(w), float(h)) for w, h in boxes]
        result = kmeans_anchors(shapes, args.k, distance=args.distance, seed=args.seed)
    except (KTooLarge, EmptyInput, TypeError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    _emit(result.to_dict(), args.out)
    return EXIT_OK


def cmd_synth_gen(args) -> int:
    from trackside.synth import NoiseControls, generate_event

    try:
        manifest = generate_event(
            args.out_dir,
            photos=args.photos,
            teams=args.teams,
            no_car_fraction=args.no_car_fraction,
            feedback_fraction=args.feedback_fraction,
            noise=NoiseControls(
                seed=args.seed,
                score_jitter=args.score_jitter,
                dropout=args.dropout,
                embedding_noise=args.embedding_noise,
                digit_noise=args.digit_noise,
            ),
            seed=args.seed,
            hidden_number_fraction=args.hidden_number_fraction,
            event_id=args.event,
            render=args.render,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    _emit(
        {
            "event_id": manifest.event_id,
            "photos": len(manifest.photos),
            "teams": list(manifest.teams),
            "expected": manifest.expected,
            "out_dir": str(args.out_dir),
        },
        args.out,
    )
    return EXIT_OK


def cmd_export_feedback(args) -> int:
    from trackside.store import FileDocumentStore, export_feedback_testset

    store = FileDocumentStore(args.store)
    event_id = None if args.all else args.event
    if event_id is None and not args.all:
        raise UsageError("export-feedback needs --event or --all")
    manifest = export_feedback_testset(store, args.dest, event_id)
    _emit(manifest, args.out)
    return EXIT_OK


def cmd_metrics(args) -> int:
    from trackside.store import FileDocumentStore, UnknownEvent, online_metrics

    store = FileDocumentStore(args.store)
    try:
        metrics = online_metrics(store, args.event)
    except UnknownEvent as exc:
        raise DataError(f"unknown event: {exc}") from exc
    _emit({"event_id": args.event, **metrics.to_dict()}, args.out)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from trackside.api import create_app
    from trackside.pipeline import PipelineConfig
    from trackside.store import FileDocumentStore
    from trackside.synth import MANIFEST_NAME, load_manifest

    provider = None
    manifest = None
    if args.scenes:
        from trackside.providers import SyntheticProvider

        provider = SyntheticProvider(args.scenes)
        if (Path(args.scenes) / MANIFEST_NAME).exists():
            manifest = load_manifest(args.scenes)
    elif args.endpoint:
        from trackside.providers import RemoteProvider

        provider = RemoteProvider(args.endpoint)
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    if manifest is not None:
        if not config.roster:
            config.roster = tuple(manifest.roster)
        config.manufacturer_labels = tuple(manifest.manufacturers)
    app = create_app(
        FileDocumentStore(args.store),
        provider=provider,
        pipeline_config=config,
        token=args.token,
        ui_dir=args.ui if args.ui and Path(args.ui).is_dir() else None,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="trackside", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="process an input directory into a store")
    p.add_argument("input", help="directory of images and/or scene sidecars")
    p.add_argument("--store", required=True, help="document store root")
    p.add_argument("--event", help="event id (defaults to the manifest's)")
    p.add_argument("--config", help="pipeline config file (JSON or TOML)")
    p.add_argument("--endpoint", help="remote provider endpoint for image-only input")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--force", action="store_true", help="reprocess completed photos")
    p.add_argument("--out", help="write the summary JSON here instead of stdout")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("evaluate-detections", help="detection mAP over a JSON dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--iou-thresholds", help="comma-separated, e.g. 0.5,0.75")
    p.add_argument("--gate", type=float, help="fail (exit 4) below this value")
    p.add_argument("--gate-metric", choices=("map_coco", "ap50"), default="map_coco")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate_detections)

    p = sub.add_parser("evaluate-classification", help="accuracy table from (predicted, true) pairs")
    p.add_argument("--input", required=True)
    p.add_argument("--labels", help="comma-separated label universe")
    p.add_argument("--gate", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate_classification)

    p = sub.add_parser("evaluate-keypoints", help="keypoint AP/AR over a JSON dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--falloff", type=float, default=0.05)
    p.add_argument("--gate", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate_keypoints)

    p = sub.add_parser("split", help="deterministic train/val/test split")
    p.add_argument("--input", required=True, help="JSON list of items")
    p.add_argument("--fractions", default="0.7,0.1,0.2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("anchors", help="k-means anchor shapes from labeled boxes")
    p.add_argument("--boxes", required=True, help="JSON list of [w, h] pairs")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--distance", choices=("aspect_ratio", "iou"), default="aspect_ratio")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("synth-gen", help="generate a synthetic event with sidecars")
    p.add_argument("out_dir")
    p.add_argument("--photos", type=int, default=100)
    p.add_argument("--teams", type=int, default=8)
    p.add_argument("--no-car-fraction", type=float, default=0.0)
    p.add_argument("--feedback-fraction", type=float, default=0.0)
    p.add_argument("--hidden-number-fraction", type=float, default=0.2)
    p.add_argument("--score-jitter", type=float, default=0.0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--embedding-noise", type=float, default=0.0)
    p.add_argument("--digit-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--event", help="event id override")
    p.add_argument("--render", action="store_true", help="also render PNG images")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("export-feedback", help="export feedback photos as a test set")
    p.add_argument("--store", required=True)
    p.add_argument("--event")
    p.add_argument("--all", action="store_true", help="export across all events")
    p.add_argument("--dest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_feedback)

    p = sub.add_parser("metrics", help="print event online metrics")
    p.add_argument("--store", required=True)
    p.add_argument("--event", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--scenes", help="scenes dir for the synthetic provider")
    p.add_argument("--endpoint", help="remote provider endpoint")
    p.add_argument("--config", help="config file shared with process")
    p.add_argument("--token", help="static bearer token")
    p.add_argument("--ui", help="directory with the built web UI")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ProviderUnavailable, UnreadableImage) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except GateFailure as exc:
        print(f"gate failure: {exc}", file=sys.stderr)
        return EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
