"""Zero-shot retrieval evaluation over labeled archives.

Per-class precision/recall/F1 are computed in exact rational arithmetic
from the tp/fp/fn counters and converted to float at the end, so worked
examples reproduce exactly. Zero denominators yield 0 by convention.
Macro averages are the unweighted class mean (the reported default);
micro averages are also computed for callers that want them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .core import TileId
from .errors import ManifestParseError, UnknownClass
from .retrieval import RetrievalRequest, RetrievalResult, retrieve
from .store import TileRecord, TileStore


@dataclass(frozen=True)
class ClassMetrics:
    class_name: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class LabeledArchive:
    name: str
    classes: tuple[str, ...]
    labels: dict[TileId, str]
    store: TileStore

    def labeled(self, class_name: str) -> set[TileId]:
        return {tid for tid, label in self.labels.items() if label == class_name}


@dataclass(frozen=True)
class ArchiveReport:
    archive: str
    method: str
    per_class: tuple[ClassMetrics, ...]
    macro: dict[str, float]
    micro: dict[str, float]
    # distribution[query_class][true_class] = fraction of retrieved tiles
    distribution: dict[str, dict[str, float]]


def _ratio(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def _f1(p: Fraction, r: Fraction) -> Fraction:
    return 2 * p * r / (p + r) if (p + r) else Fraction(0)


def compute_metrics(class_name: str, tp: int, fp: int, fn: int) -> ClassMetrics:
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return ClassMetrics(class_name, tp, fp, fn, float(p), float(r), float(_f1(p, r)))


def evaluate_class(
    archive: LabeledArchive, class_name: str, result: RetrievalResult
) -> ClassMetrics:
    """Set-algebra metrics of one retrieval against the class ground truth."""
    if class_name not in archive.classes:
        raise UnknownClass(f"{class_name!r} is not a class of archive {archive.name!r}")
    labeled = archive.labeled(class_name)
    retrieved = set(result.retrieved)
    tp = len(retrieved & labeled)
    fp = len(retrieved - labeled)
    fn = len(labeled - retrieved)
    return compute_metrics(class_name, tp, fp, fn)


def load_archive(
    manifest_path: str | Path, store_dir: str | Path, name: str | None = None
) -> LabeledArchive:
    """Build a store from a labeled embedding manifest (JSONL or binary).

    Every record must carry a label; a record without one is a manifest
    error reported with its position. Keys of the form ``image:row:col``
    keep their grid position, any other key becomes a single-tile image.
    """
    from .embedders import import_embeddings

    reader = import_embeddings(manifest_path)
    records: list[TileRecord] = []
    labels: dict[TileId, str] = {}
    for i, rec in enumerate(reader, start=1):
        if rec.label is None:
            raise ManifestParseError("archive record is missing a label", i)
        try:
            tile_id = TileId.from_key(rec.key)
        except (ValueError, TypeError):
            tile_id = TileId(rec.key, 0, 0)
        records.append(TileRecord(tile_id, rec.embedding, label=rec.label))
        labels[tile_id] = rec.label
    if not records:
        raise ManifestParseError(f"archive manifest {manifest_path} holds no records")
    store = TileStore.open_or_create(store_dir, dim=reader.dim)
    store.insert_batch(records)
    classes = tuple(sorted(set(labels.values())))
    return LabeledArchive(
        name=name or Path(manifest_path).stem,
        classes=classes,
        labels=labels,
        store=store,
    )


def evaluate_archive(
    archive: LabeledArchive,
    embedder,
    context_provider,
    method: str,
    cfg=None,
    threshold: float | None = None,
    query_classes: list[str] | None = None,
    cache=None,
) -> ArchiveReport:
    """One retrieval per class (query = the class name), then metrics.

    ``query_classes`` restricts which classes are queried; all archive
    labels still count as ground truth. Defaults to every class.
    """
    from .refine import RefinementConfig

    cfg = cfg or RefinementConfig()
    classes = list(query_classes) if query_classes is not None else list(archive.classes)
    for c in classes:
        if c not in archive.classes:
            raise UnknownClass(f"{c!r} is not a class of archive {archive.name!r}")
    if not classes:
        raise UnknownClass("no classes to evaluate")

    per_class: list[ClassMetrics] = []
    distribution: dict[str, dict[str, float]] = {}
    for class_name in classes:
        request = RetrievalRequest(
            query=class_name,
            method=method,
            threshold=threshold if threshold is not None else 0.28,
            cfg=cfg,
        )
        result = retrieve(archive.store, embedder, context_provider, request, cache=cache)
        per_class.append(evaluate_class(archive, class_name, result))
        distribution[class_name] = _retrieved_fractions(archive, result)

    macro = {
        "precision": _mean(m.precision for m in per_class),
        "recall": _mean(m.recall for m in per_class),
        "f1": _mean(m.f1 for m in per_class),
    }
    tp = sum(m.tp for m in per_class)
    fp = sum(m.fp for m in per_class)
    fn = sum(m.fn for m in per_class)
    micro_p = _ratio(tp, tp + fp)
    micro_r = _ratio(tp, tp + fn)
    micro = {
        "precision": float(micro_p),
        "recall": float(micro_r),
        "f1": float(_f1(micro_p, micro_r)),
    }
    return ArchiveReport(
        archive=archive.name,
        method=method,
        per_class=tuple(per_class),
        macro=macro,
        micro=micro,
        distribution=distribution,
    )


def _mean(values) -> float:
    vals = list(values)
    return sum(vals) / len(vals) if vals else 0.0


def _retrieved_fractions(
    archive: LabeledArchive, result: RetrievalResult
) -> dict[str, float]:
    counts = {c: 0 for c in archive.classes}
    total = 0
    for tid in result.retrieved:
        label = archive.labels.get(tid)
        if label is not None:
            counts[label] += 1
            total += 1
    if total == 0:
        return {c: 0.0 for c in archive.classes}
    return {c: float(Fraction(counts[c], total)) for c in archive.classes}


def tally_recall_improvements(
    current: tuple[ClassMetrics, ...] | list[ClassMetrics],
    baseline: tuple[ClassMetrics, ...] | list[ClassMetrics],
) -> tuple[int, int]:
    """How many classes improved recall vs. a baseline: (improved, total)."""
    base = {m.class_name: m.recall for m in baseline}
    improved = 0
    total = 0
    for m in current:
        if m.class_name not in base:
            raise UnknownClass(f"{m.class_name!r} missing from baseline table")
        total += 1
        if m.recall > base[m.class_name]:
            improved += 1
    return improved, total


def emit_report(report: ArchiveReport, out_dir: str | Path) -> list[Path]:
    """Write metrics.json, metrics.csv, per_class_recall.csv, distribution.csv.

    All content is built before any file is written, so a failure leaves
    no partial report behind. Output is byte-deterministic for identical
    inputs.
    """
    if not report.per_class:
        raise UnknownClass("report holds no classes; nothing to emit")
    out = Path(out_dir)

    doc = {
        "archive": report.archive,
        "method": report.method,
        "classes": {
            m.class_name: {
                "tp": m.tp,
                "fp": m.fp,
                "fn": m.fn,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
            }
            for m in report.per_class
        },
        "macro": report.macro,
        "micro": report.micro,
        "distribution": report.distribution,
    }
    metrics_json = json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def rows_to_csv(header, rows):
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()

    metrics_csv = rows_to_csv(
        ["class", "tp", "fp", "fn", "precision", "recall", "f1"],
        [
            [m.class_name, m.tp, m.fp, m.fn, m.precision, m.recall, m.f1]
            for m in report.per_class
        ]
        + [
            [
                "__macro__",
                "",
                "",
                "",
                report.macro["precision"],
                report.macro["recall"],
                report.macro["f1"],
            ]
        ],
    )
    recall_csv = rows_to_csv(
        ["class", "recall"], [[m.class_name, m.recall] for m in report.per_class]
    )
    dist_csv = rows_to_csv(
        ["query_class", "label_class", "fraction"],
        [
            [q, c, frac]
            for q, row in report.distribution.items()
            for c, frac in row.items()
        ],
    )

    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, content in [
        ("metrics.json", metrics_json),
        ("metrics.csv", metrics_csv),
        ("per_class_recall.csv", recall_csv),
        ("distribution.csv", dist_csv),
    ]:
        path = out / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        written.append(path)
    return written
