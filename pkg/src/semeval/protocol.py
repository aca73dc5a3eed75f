"""End-to-end evaluation pipelines and report rendering."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import statistics
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .corpus import AttributeLabels, HypothesisSet, Condition, Sample, TokenSequence, tokenize
from .ngram_metrics import (
    BleuConfig,
    DEFAULT_PREFIXES,
    SELF_BLEU_EPSILON,
    StopwordList,
    corpus_bleu,
    corpus_content_recall,
    dist_n,
    head_entropy,
    opening_bigram_counts,
    self_bleu,
    sentence_bleu,
    strip_prefixes,
)
from .semantic_space import (
    EmbeddingMatrix,
    RetrievalConfig,
    fit_gaussian,
    frechet_distance,
    nway_retrieval_accuracy,
    save_embeddings,
)

DEFAULT_SEED = 1234

DEFAULT_N_WAYS = (2, 4, 10, 24)

CONTENT_WORD_NOTE = (
    "content words approximated as non-stopword tokens (no POS tagging)"
)


@dataclass(frozen=True)
class EvalConfig:
    """All semantic knobs for one pipeline run.

    The fingerprint covers every setting that can change a metric value;
    execution details (thread count) are deliberately excluded so outputs
    stay byte-identical across parallelism levels.
    """

    bleu: BleuConfig = BleuConfig()
    seed: int = DEFAULT_SEED
    retrieval_runs: int = 10
    n_ways: tuple[int, ...] = DEFAULT_N_WAYS
    dist_denominator: str = "tokens"
    recall_aggregation: str = "micro"
    self_bleu_order: int = 4
    self_bleu_epsilon: float = SELF_BLEU_EPSILON
    stopwords: StopwordList = field(default_factory=StopwordList.default)
    prefixes: tuple[TokenSequence, ...] = tuple(DEFAULT_PREFIXES)
    # L2-normalize embedding rows before Gaussian fits (default: raw vectors)
    fd_normalize: bool = False
    threads: int = 1

    def fingerprint(self) -> str:
        knobs = {
            "bleu": {
                "max_order": self.bleu.max_order,
                "epsilon": self.bleu.epsilon,
                "reference_mode": self.bleu.reference_mode,
            },
            "seed": self.seed,
            "retrieval_runs": self.retrieval_runs,
            "n_ways": list(self.n_ways),
            "dist_denominator": self.dist_denominator,
            "recall_aggregation": self.recall_aggregation,
            "self_bleu_order": self.self_bleu_order,
            "self_bleu_epsilon": self.self_bleu_epsilon,
            "stopwords": sorted(self.stopwords.words),
            "prefixes": [list(p) for p in self.prefixes],
            "fd_normalize": self.fd_normalize,
        }
        canonical = json.dumps(knobs, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MetricReport:
    """Structured result of one pipeline run."""

    system_name: str
    condition: str
    metrics: dict[str, float]
    config_fingerprint: str
    warnings: tuple[str, ...] = ()
    verdict: bool | None = None

    def __post_init__(self) -> None:
        bad = [k for k, v in self.metrics.items() if not np.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite metric values: {', '.join(bad)}")


def _aligned_pairs(
    corpus: list[Sample], hyps: HypothesisSet
) -> tuple[list[str], list[TokenSequence], list[TokenSequence]]:
    """Corpus-ordered ids plus tokenized (hypothesis, reference) columns."""
    ids = [s.id for s in corpus]
    hyps.validate_ids(set(ids))
    missing = [sid for sid in ids if sid not in hyps.hypotheses]
    if missing:
        raise ValueError(
            f"hypotheses missing for ids: {', '.join(missing[:5])}"
            + (f" (+{len(missing) - 5} more)" if len(missing) > 5 else "")
        )
    hyp_tokens = [tokenize(hyps.hypotheses[sid]) for sid in ids]
    ref_tokens = [tokenize(s.ground_truth) for s in corpus]
    return ids, hyp_tokens, ref_tokens


def _maybe_normalized(matrix: EmbeddingMatrix, normalize: bool) -> EmbeddingMatrix:
    if not normalize:
        return matrix
    norms = np.linalg.norm(matrix.vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot L2-normalize zero-norm embedding rows")
    return EmbeddingMatrix(ids=matrix.ids, vectors=matrix.vectors / norms)


def _surface_metrics(
    hyp_tokens: list[TokenSequence],
    ref_tokens: list[TokenSequence],
    cfg: EvalConfig,
    warnings: list[str],
) -> dict[str, float]:
    metrics: dict[str, float] = {}
    metrics["content_recall"] = corpus_content_recall(
        list(zip(hyp_tokens, ref_tokens)), cfg.stopwords, cfg.recall_aggregation
    )
    metrics["dist_1"] = dist_n(hyp_tokens, 1, cfg.dist_denominator)
    metrics["dist_2"] = dist_n(hyp_tokens, 2, cfg.dist_denominator)
    _, skipped = opening_bigram_counts(hyp_tokens)
    if skipped:
        warnings.append(f"head entropy skipped {skipped} hypotheses shorter than 2 tokens")
    metrics["head_entropy"] = head_entropy(hyp_tokens)
    metrics["self_bleu"] = self_bleu(
        hyp_tokens, n=cfg.self_bleu_order, epsilon=cfg.self_bleu_epsilon
    )
    return metrics


def run_main_eval(
    corpus: list[Sample],
    hyps: HypothesisSet,
    embeddings: dict[str, EmbeddingMatrix],
    cfg: EvalConfig,
) -> MetricReport:
    """Full holistic evaluation of one system against the reference corpus.

    Produces the ten headline metrics: N-way retrieval accuracy at each
    configured pool size, content recall, Dist-1/2, head entropy,
    self-BLEU, and the Frechet distance between embedding distributions.
    """
    for key in ("hyp", "ref"):
        if key not in embeddings:
            raise ValueError(f"embeddings dict needs a {key!r} matrix")
    ids, hyp_tokens, ref_tokens = _aligned_pairs(corpus, hyps)
    hyp_rows = embeddings["hyp"].rows_for(ids)
    ref_rows = embeddings["ref"].rows_for(ids)
    queries = EmbeddingMatrix(ids=tuple(ids), vectors=hyp_rows)
    candidates = EmbeddingMatrix(ids=tuple(ids), vectors=ref_rows)

    warnings: list[str] = [CONTENT_WORD_NOTE]
    metrics: dict[str, float] = {}
    for n_way in cfg.n_ways:
        if n_way > len(ids):
            warnings.append(
                f"skipped {n_way}-way retrieval: corpus has only {len(ids)} samples"
            )
            continue
        result = nway_retrieval_accuracy(
            queries,
            candidates,
            RetrievalConfig(n_way=n_way, runs=cfg.retrieval_runs, seed=cfg.seed),
            threads=cfg.threads,
        )
        metrics[f"acc_{n_way}way"] = result.mean_accuracy
    metrics.update(_surface_metrics(hyp_tokens, ref_tokens, cfg, warnings))
    warnings.append(
        f"self_bleu computed at order {cfg.self_bleu_order}"
        f" with epsilon {cfg.self_bleu_epsilon:g}"
    )
    metrics["fd"] = frechet_distance(
        fit_gaussian(_maybe_normalized(candidates, cfg.fd_normalize)),
        fit_gaussian(_maybe_normalized(queries, cfg.fd_normalize)),
    )
    return MetricReport(
        system_name=hyps.system_name,
        condition=hyps.condition.value,
        metrics=metrics,
        config_fingerprint=cfg.fingerprint(),
        warnings=tuple(warnings),
    )


def bleu_trap_analysis(
    corpus: list[Sample], hyps: HypothesisSet, cfg: EvalConfig
) -> MetricReport:
    """BLEU-1/2 scored against the variant pool vs. the ground truth alone.

    The variant pool always includes the ground truth. Corpus-aggregated
    scores and sentence-score averages are both reported, labeled.
    """
    ids, hyp_tokens, ref_tokens = _aligned_pairs(corpus, hyps)
    missing_mtv = [s.id for s in corpus if not s.mtv_variants]
    if missing_mtv:
        raise ValueError(
            f"MTV scoring requires variants for every sample; missing for "
            f"{', '.join(missing_mtv[:5])}"
        )
    mtv_refs = [
        [ref] + [tokenize(v) for v in s.mtv_variants]
        for ref, s in zip(ref_tokens, corpus)
    ]
    single_refs = [[ref] for ref in ref_tokens]
    eps = cfg.bleu.epsilon
    metrics: dict[str, float] = {}
    for order in (1, 2):
        for mode, refs in (("mtv", mtv_refs), ("single", single_refs)):
            pairs = list(zip(hyp_tokens, refs))
            metrics[f"bleu{order}_{mode}"] = corpus_bleu(pairs, n=order, epsilon=eps)
            metrics[f"bleu{order}_{mode}_sent_avg"] = sum(
                sentence_bleu(h, r, n=order, epsilon=eps) for h, r in pairs
            ) / len(pairs)
    return MetricReport(
        system_name=hyps.system_name,
        condition=hyps.condition.value,
        metrics=metrics,
        config_fingerprint=cfg.fingerprint(),
        warnings=("variant pool includes the ground truth",),
    )


def noise_dependency_report(
    corpus: list[Sample],
    real_hyps: HypothesisSet,
    noise_hyps: HypothesisSet,
    embeddings: dict[str, EmbeddingMatrix],
    cfg: EvalConfig,
) -> MetricReport:
    """Paired real-vs-noise comparison with the collapse-signature verdict.

    The verdict (signal dependency) is true iff content recall drops AND
    the Frechet distance rises when the input is replaced by noise.
    """
    if real_hyps.condition is not Condition.REAL:
        raise ValueError(f"real_hyps tagged {real_hyps.condition.value!r}, expected 'real'")
    if noise_hyps.condition is not Condition.NOISE:
        raise ValueError(f"noise_hyps tagged {noise_hyps.condition.value!r}, expected 'noise'")
    for key in ("ref", "real", "noise"):
        if key not in embeddings:
            raise ValueError(f"embeddings dict needs a {key!r} matrix")
    ids, real_tokens, ref_tokens = _aligned_pairs(corpus, real_hyps)
    _, noise_tokens, _ = _aligned_pairs(corpus, noise_hyps)
    ref_gauss = fit_gaussian(
        _maybe_normalized(
            EmbeddingMatrix(ids=tuple(ids), vectors=embeddings["ref"].rows_for(ids)),
            cfg.fd_normalize,
        )
    )
    metrics: dict[str, float] = {}
    for label, tokens in (("real", real_tokens), ("noise", noise_tokens)):
        metrics[f"content_recall_{label}"] = corpus_content_recall(
            list(zip(tokens, ref_tokens)), cfg.stopwords, cfg.recall_aggregation
        )
        metrics[f"dist_2_{label}"] = dist_n(tokens, 2, cfg.dist_denominator)
        gauss = fit_gaussian(
            _maybe_normalized(
                EmbeddingMatrix(ids=tuple(ids), vectors=embeddings[label].rows_for(ids)),
                cfg.fd_normalize,
            )
        )
        metrics[f"fd_{label}"] = frechet_distance(ref_gauss, gauss)
    for name in ("content_recall", "dist_2", "fd"):
        metrics[f"{name}_delta"] = metrics[f"{name}_noise"] - metrics[f"{name}_real"]
    verdict = (
        metrics["content_recall_noise"] < metrics["content_recall_real"]
        and metrics["fd_noise"] > metrics["fd_real"]
    )
    return MetricReport(
        system_name=real_hyps.system_name,
        condition="real+noise",
        metrics=metrics,
        config_fingerprint=cfg.fingerprint(),
        warnings=(CONTENT_WORD_NOTE, "deltas are noise minus real"),
        verdict=verdict,
    )


def prefix_strip_analysis(
    corpus: list[Sample],
    hyps: HypothesisSet,
    prefixes: list[TokenSequence],
    cfg: EvalConfig,
) -> MetricReport:
    """Corpus BLEU-1..4 before and after removing listed opening templates.

    Prefixes are stripped from both the reference and the hypothesis; the
    relative change per order quantifies how much score the templates carry.
    """
    if not prefixes:
        raise ValueError("prefix list must be non-empty")
    ids, hyp_tokens, ref_tokens = _aligned_pairs(corpus, hyps)
    stripped_hyps = [strip_prefixes(h, prefixes) for h in hyp_tokens]
    stripped_refs = [strip_prefixes(r, prefixes) for r in ref_tokens]
    eps = cfg.bleu.epsilon
    warnings: list[str] = []
    metrics: dict[str, float] = {}
    for order in (1, 2, 3, 4):
        original = corpus_bleu(
            [(h, [r]) for h, r in zip(hyp_tokens, ref_tokens)], n=order, epsilon=eps
        )
        stripped = corpus_bleu(
            [(h, [r]) for h, r in zip(stripped_hyps, stripped_refs)], n=order, epsilon=eps
        )
        metrics[f"bleu{order}_original"] = original
        metrics[f"bleu{order}_stripped"] = stripped
        if original > 0:
            metrics[f"bleu{order}_rel_change"] = (stripped - original) / original
        else:
            metrics[f"bleu{order}_rel_change"] = 0.0
            warnings.append(f"bleu{order} original score is 0; relative change reported as 0")
    return MetricReport(
        system_name=hyps.system_name,
        condition=hyps.condition.value,
        metrics=metrics,
        config_fingerprint=cfg.fingerprint(),
        warnings=tuple(warnings),
    )


def _require_labels(labels: list[AttributeLabels], role: str) -> None:
    if not labels:
        raise ValueError(f"{role} label list is empty")
    for i, label in enumerate(labels):
        for name in ("sentiment", "topic", "length", "surprisal"):
            if getattr(label, name) is None:
                raise ValueError(f"{role} label {i} is missing {name!r} (no imputing)")


def attribute_baselines(
    train_labels: list[AttributeLabels], eval_labels: list[AttributeLabels]
) -> MetricReport:
    """Chance accuracy for the classification tasks and train-median MAE
    baselines for the regression tasks."""
    _require_labels(train_labels, "train")
    _require_labels(eval_labels, "eval")
    metrics: dict[str, float] = {}
    for task in ("sentiment", "topic"):
        classes = sorted({getattr(label, task) for label in train_labels})
        unknown = sorted(
            {getattr(label, task) for label in eval_labels} - set(classes)
        )
        if unknown:
            raise ValueError(f"eval {task} labels outside the train class set: {unknown}")
        metrics[f"chance_{task}"] = 1.0 / len(classes)
    for task in ("length", "surprisal"):
        median = statistics.median(getattr(label, task) for label in train_labels)
        mae = sum(abs(getattr(label, task) - median) for label in eval_labels) / len(
            eval_labels
        )
        metrics[f"baseline_mae_{task}"] = mae
    return MetricReport(
        system_name="baseline",
        condition="train_median",
        metrics=metrics,
        config_fingerprint=hashlib.sha256(b"attribute_baselines/v1").hexdigest(),
    )


def export_embeddings_for_projection(
    labeled: list[tuple[str, EmbeddingMatrix]],
    path: str | Path,
    format: str = "jsonl",
) -> None:
    """Write labeled embedding sets to one file for external projection tools.

    JSONL records carry {"label", "id", "v"}; the binary form reuses the
    embedding container with composite "label:id" record ids.
    """
    dims = {m.dim for _, m in labeled if m.n > 0}
    if len(dims) > 1:
        raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")
    if format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for label, matrix in labeled:
                for sid, row in zip(matrix.ids, matrix.vectors.astype(np.float32)):
                    record = {"label": label, "id": sid, "v": [float(x) for x in row]}
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    elif format == "binary":
        ids = []
        rows = []
        for label, matrix in labeled:
            if ":" in label:
                raise ValueError(f"label {label!r} must not contain ':' in binary mode")
            ids.extend(f"{label}:{sid}" for sid in matrix.ids)
            rows.append(matrix.vectors)
        dim = dims.pop() if dims else 0
        stacked = np.vstack(rows) if rows else np.empty((0, dim))
        save_embeddings(EmbeddingMatrix(ids=tuple(ids), vectors=stacked), path, "binary")
    else:
        raise ValueError(f"unsupported projection export format: {format!r}")


def load_projection_export(path: str | Path, format: str = "jsonl") -> list[tuple[str, EmbeddingMatrix]]:
    """Read a projection export back into per-label embedding matrices."""
    groups: dict[str, tuple[list[str], list[np.ndarray]]] = {}
    if format == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                ids, rows = groups.setdefault(record["label"], ([], []))
                ids.append(record["id"])
                rows.append(np.asarray(record["v"], dtype=np.float32).astype(np.float64))
    elif format == "binary":
        from .semantic_space import load_embeddings

        matrix = load_embeddings(path, "binary")
        for sid, row in zip(matrix.ids, matrix.vectors):
            label, _, rest = sid.partition(":")
            ids, rows = groups.setdefault(label, ([], []))
            ids.append(rest)
            rows.append(row)
    else:
        raise ValueError(f"unsupported projection export format: {format!r}")
    return [
        (label, EmbeddingMatrix(ids=tuple(ids), vectors=np.vstack(rows)))
        for label, (ids, rows) in groups.items()
    ]


# Lower values are improvements for these metric families.
_LOWER_BETTER_PREFIXES = ("self_bleu", "fd", "baseline_mae")


def relative_improvements(ours: MetricReport, base: MetricReport) -> dict[str, float]:
    """Signed relative improvement of one report over a baseline.

    Computed as (ours - base)/base for higher-better metrics and
    (base - ours)/base for lower-better ones, so a positive value always
    means improvement. Metrics missing from either report, or with a zero
    baseline, are omitted.
    """
    out: dict[str, float] = {}
    for name, base_value in base.metrics.items():
        if name not in ours.metrics or base_value == 0.0:
            continue
        ours_value = ours.metrics[name]
        if name.startswith(_LOWER_BETTER_PREFIXES):
            out[name] = (base_value - ours_value) / base_value
        else:
            out[name] = (ours_value - base_value) / base_value
    return out


# Display formatting -------------------------------------------------------

_DISPLAY_NAMES = {
    "acc_2way": "2-Way",
    "acc_4way": "4-Way",
    "acc_10way": "10-Way",
    "acc_24way": "24-Way",
    "content_recall": "C. Recall",
    "dist_1": "Dist-1",
    "dist_2": "Dist-2",
    "head_entropy": "H. Ent",
    "self_bleu": "S-BLEU",
    "fd": "FD",
}

def format_metric(name: str, value: float) -> str:
    """Render one metric for display; fractions become half-up percentages."""
    if name.startswith(("head_entropy", "baseline_mae")):
        return f"{value:.2f}"
    if name.startswith("fd"):
        return f"{value:.4f}"
    # fraction-valued metric: percent with one decimal, half-up
    percent = Decimal(repr(float(value))) * 100
    return f"{percent.quantize(Decimal('0.1'), rounding=ROUND_HALF_UP)}%"


def display_name(name: str) -> str:
    return _DISPLAY_NAMES.get(name, name)


def render_report(report: MetricReport, format: str = "json") -> bytes:
    """Serialize a report deterministically as JSON, CSV, or markdown."""
    if format == "json":
        payload: dict = {
            "system_name": report.system_name,
            "condition": report.condition,
            "metrics": report.metrics,
        }
        if report.verdict is not None:
            payload["verdict"] = report.verdict
        payload["config_fingerprint"] = report.config_fingerprint
        payload["warnings"] = list(report.warnings)
        return (json.dumps(payload, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        header = ["system_name", "condition", *report.metrics.keys()]
        row = [report.system_name, report.condition] + [
            repr(v) for v in report.metrics.values()
        ]
        if report.verdict is not None:
            header.append("verdict")
            row.append(str(report.verdict).lower())
        header.append("config_fingerprint")
        row.append(report.config_fingerprint)
        writer.writerow(header)
        writer.writerow(row)
        return buffer.getvalue().encode("utf-8")
    if format == "markdown":
        names = [display_name(k) for k in report.metrics]
        values = [format_metric(k, v) for k, v in report.metrics.items()]
        lines = [
            f"# {report.system_name} ({report.condition})",
            "",
            "| " + " | ".join(names) + " |",
            "|" + "|".join("---" for _ in names) + "|",
            "| " + " | ".join(values) + " |",
        ]
        if report.verdict is not None:
            lines += ["", f"Signal-dependency verdict: **{str(report.verdict).lower()}**"]
        if report.warnings:
            lines += ["", "Notes:"] + [f"- {w}" for w in report.warnings]
        lines += ["", f"Config fingerprint: `{report.config_fingerprint}`", ""]
        return "\n".join(lines).encode("utf-8")
    raise ValueError(f"unsupported report format: {format!r}")
