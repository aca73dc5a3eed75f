"""Command-line entry point wiring corpora, embeddings, and pipelines."""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import protocol
from .corpus import CorpusFormatError, load_corpus, load_hypotheses, tokenize
from .ngram_metrics import (
    BleuConfig,
    DEFAULT_PREFIXES,
    StopwordList,
    load_prefix_list,
    sentence_bleu,
)
from .protocol import DEFAULT_SEED, EvalConfig, MetricReport, render_report
from .semantic_space import (
    EmbeddingFormatError,
    EmbeddingMatrix,
    EmbeddingServiceError,
    RetrievalConfig,
    fetch_embeddings,
    fit_gaussian,
    frechet_distance,
    load_embeddings,
    nway_retrieval_accuracy,
    save_embeddings,
    sqrtm_psd,
)

ENDPOINT_ENV_VAR = "SEMEVAL_EMBED_ENDPOINT"

def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


_CONFIG_KEYS = {
    "seed": int,
    "threads": int,
    "runs": int,
    "format": str,
    "n_ways": str,
    "bleu_order": int,
    "bleu_smoothing": str,
    "dist_denominator": str,
    "recall_aggregation": str,
    "self_bleu_order": int,
    "self_bleu_epsilon": float,
    "stopwords": str,
    "prefixes": str,
    "fd_normalize": _parse_bool,
    "endpoint": str,
    "batch_size": int,
}


def _read_config_file(path: str) -> dict:
    """Parse 'key = value' lines; unknown keys are rejected, not ignored."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = _CONFIG_KEYS[key](raw.strip())
    return values


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--format", choices=("json", "csv", "markdown"), default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--runs", type=int, default=None, help="retrieval repetitions")
    parser.add_argument("--n-ways", default=None, help="comma-separated pool sizes")
    parser.add_argument("--bleu-order", type=int, default=None)
    parser.add_argument(
        "--bleu-smoothing", default=None, help="'none' or an epsilon value"
    )
    parser.add_argument("--dist-denominator", choices=("tokens", "ngrams"), default=None)
    parser.add_argument("--recall-aggregation", choices=("micro", "macro"), default=None)
    parser.add_argument("--self-bleu-order", type=int, default=None)
    parser.add_argument("--self-bleu-epsilon", type=float, default=None)
    parser.add_argument("--stopwords", default=None, help="stopword file path")
    parser.add_argument("--prefixes", default=None, help="prefix phrase file path")
    parser.add_argument(
        "--fd-normalize",
        action="store_const",
        const=True,
        default=None,
        help="L2-normalize embeddings before Gaussian fits",
    )


def _resolve(args: argparse.Namespace, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if args.config_values and key in args.config_values:
        return args.config_values[key]
    return default


def _parse_epsilon(raw) -> float | None:
    if raw is None or raw == "none":
        return None
    return float(raw)


def _build_config(args: argparse.Namespace) -> EvalConfig:
    args.config_values = _read_config_file(args.config) if args.config else {}
    n_ways_raw = _resolve(args, "n_ways", None)
    if isinstance(n_ways_raw, str):
        n_ways = tuple(int(part) for part in n_ways_raw.split(",") if part.strip())
    else:
        n_ways = protocol.DEFAULT_N_WAYS
    stopword_path = _resolve(args, "stopwords", None)
    prefix_path = _resolve(args, "prefixes", None)
    return EvalConfig(
        bleu=BleuConfig(
            max_order=_resolve(args, "bleu_order", 4),
            epsilon=_parse_epsilon(_resolve(args, "bleu_smoothing", None)),
        ),
        seed=_resolve(args, "seed", DEFAULT_SEED),
        retrieval_runs=_resolve(args, "runs", 10),
        n_ways=n_ways,
        dist_denominator=_resolve(args, "dist_denominator", "tokens"),
        recall_aggregation=_resolve(args, "recall_aggregation", "micro"),
        self_bleu_order=_resolve(args, "self_bleu_order", 4),
        self_bleu_epsilon=_resolve(args, "self_bleu_epsilon", 1e-9),
        stopwords=StopwordList.from_file(stopword_path)
        if stopword_path
        else StopwordList.default(),
        prefixes=tuple(load_prefix_list(prefix_path))
        if prefix_path
        else tuple(DEFAULT_PREFIXES),
        fd_normalize=_resolve(args, "fd_normalize", False),
        threads=_resolve(args, "threads", os.cpu_count() or 1),
    )


def _emit(report: MetricReport, args: argparse.Namespace) -> None:
    fmt = _resolve(args, "format", "json")
    payload = render_report(report, fmt)
    if args.out:
        Path(args.out).write_bytes(payload)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.buffer.write(payload)


def _emb_format(path: str, override: str | None) -> str:
    if override:
        return override
    return "jsonl" if path.endswith(".jsonl") else "binary"


def _load_emb(path: str, override: str | None) -> EmbeddingMatrix:
    return load_embeddings(path, _emb_format(path, override))


def _load_hyps(args: argparse.Namespace, path: str, corpus_ids: set[str]):
    return load_hypotheses(
        path,
        system_name=getattr(args, "system", None),
        condition=getattr(args, "condition", None),
        corpus_ids=corpus_ids,
    )


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    corpus = load_corpus(args.refs)
    ids = {s.id for s in corpus}
    hyps = _load_hyps(args, args.hyps, ids)
    embeddings = {
        "hyp": _load_emb(args.emb_hyps, args.emb_format),
        "ref": _load_emb(args.emb_refs, args.emb_format),
    }
    _emit(protocol.run_main_eval(corpus, hyps, embeddings, cfg), args)
    return 0


def cmd_bleu(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    corpus = load_corpus(args.refs)
    hyps = _load_hyps(args, args.hyps, {s.id for s in corpus})
    _emit(protocol.bleu_trap_analysis(corpus, hyps, cfg), args)
    return 0


def cmd_retrieval(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    queries = _load_emb(args.emb_queries, args.emb_format)
    candidates = _load_emb(args.emb_candidates, args.emb_format)
    metrics: dict[str, float] = {}
    for n_way in cfg.n_ways:
        result = nway_retrieval_accuracy(
            queries,
            candidates,
            RetrievalConfig(n_way=n_way, runs=cfg.retrieval_runs, seed=cfg.seed),
            threads=cfg.threads,
        )
        metrics[f"acc_{n_way}way"] = result.mean_accuracy
        metrics[f"acc_{n_way}way_std"] = result.std
    report = MetricReport(
        system_name=args.system or "retrieval",
        condition="real",
        metrics=metrics,
        config_fingerprint=cfg.fingerprint(),
    )
    _emit(report, args)
    return 0


def cmd_fd(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    a = fit_gaussian(
        protocol._maybe_normalized(_load_emb(args.emb_a, args.emb_format), cfg.fd_normalize)
    )
    b = fit_gaussian(
        protocol._maybe_normalized(_load_emb(args.emb_b, args.emb_format), cfg.fd_normalize)
    )
    report = MetricReport(
        system_name=args.system or "fd",
        condition="real",
        metrics={"fd": frechet_distance(a, b)},
        config_fingerprint=cfg.fingerprint(),
    )
    _emit(report, args)
    return 0


def cmd_noise(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    corpus = load_corpus(args.refs)
    ids = {s.id for s in corpus}
    real = load_hypotheses(args.hyps_real, system_name=args.system, condition="real", corpus_ids=ids)
    noise = load_hypotheses(args.hyps_noise, system_name=args.system, condition="noise", corpus_ids=ids)
    embeddings = {
        "ref": _load_emb(args.emb_refs, args.emb_format),
        "real": _load_emb(args.emb_real, args.emb_format),
        "noise": _load_emb(args.emb_noise, args.emb_format),
    }
    _emit(protocol.noise_dependency_report(corpus, real, noise, embeddings, cfg), args)
    return 0


def cmd_prefix(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    corpus = load_corpus(args.refs)
    hyps = _load_hyps(args, args.hyps, {s.id for s in corpus})
    _emit(protocol.prefix_strip_analysis(corpus, hyps, list(cfg.prefixes), cfg), args)
    return 0


def cmd_baselines(args: argparse.Namespace) -> int:
    _build_config(args)
    train = [s.attributes for s in load_corpus(args.train)]
    evals = [s.attributes for s in load_corpus(args.eval)]
    if any(a is None for a in train) or any(a is None for a in evals):
        raise CorpusFormatError("baselines need attribute labels on every sample")
    _emit(protocol.attribute_baselines(train, evals), args)
    return 0


def cmd_embed_export(args: argparse.Namespace) -> int:
    _build_config(args)
    if not args.out:
        raise ValueError("embed-export needs --out")
    fmt = args.emb_format or ("jsonl" if args.out.endswith(".jsonl") else "binary")
    if args.project:
        labeled = []
        for spec_item in args.project:
            label, _, path = spec_item.partition("=")
            if not path:
                raise ValueError(f"--project expects LABEL=PATH, got {spec_item!r}")
            labeled.append((label, _load_emb(path, None)))
        protocol.export_embeddings_for_projection(labeled, args.out, fmt)
    else:
        if not args.texts:
            raise ValueError("embed-export needs --texts (or --project)")
        endpoint = args.endpoint or _resolve(args, "endpoint", None) or os.environ.get(
            ENDPOINT_ENV_VAR
        )
        if not endpoint:
            raise ValueError(
                f"no embedding endpoint: pass --endpoint or set {ENDPOINT_ENV_VAR}"
            )
        corpus = load_corpus(args.texts)
        matrix = fetch_embeddings(
            [s.ground_truth for s in corpus],
            endpoint,
            batch_size=_resolve(args, "batch_size", 64),
            ids=[s.id for s in corpus],
            normalize=args.normalize,
        )
        save_embeddings(matrix, args.out, fmt)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


# Built-in oracle suite ----------------------------------------------------


def _naive_attention(h, memory, params):
    """Triple-loop forward pass kept deliberately independent of the library."""
    import math as _math

    stacked = [list(memory.global_vec)] + [list(row) for row in memory.sequence]
    d_model, d_k = params.d_model, params.d_k
    proj = [
        [sum(stacked[i][x] * params.w_proj[x][j] for x in range(d_model)) for j in range(d_model)]
        for i in range(len(stacked))
    ]
    q = [
        [sum(h[t][x] * params.w_q[x][j] for x in range(d_model)) for j in range(d_k)]
        for t in range(len(h))
    ]
    k = [
        [sum(proj[i][x] * params.w_k[x][j] for x in range(d_model)) for j in range(d_k)]
        for i in range(len(proj))
    ]
    v = [
        [sum(proj[i][x] * params.w_v[x][j] for x in range(d_model)) for j in range(d_k)]
        for i in range(len(proj))
    ]
    out = []
    for t in range(len(h)):
        logits = [
            sum(q[t][x] * k[i][x] for x in range(d_k)) / _math.sqrt(d_k)
            for i in range(len(k))
        ]
        peak = max(logits)
        exp = [_math.exp(z - peak) for z in logits]
        total = sum(exp)
        weights = [e / total for e in exp]
        out.append(
            [sum(weights[i] * v[i][j] for i in range(len(v))) for j in range(d_k)]
        )
    return np.asarray(out)


def _selftest_checks():
    from .reference_mechanism import (
        AttentionParams,
        NeuralMemory,
        PerTermLossWeights,
        attention_input_gradient,
        cross_entropy_loss,
        qkv_cross_attention,
        stage1_objective,
    )
    from .semantic_space import GaussianSummary

    def check_appendix_bleu():
        cases = [
            ("He was also a member of the Royal Family.",
             "He also was awarded the Presidential Medal of Freedom.", 0.556),
            ("The movie is surprisingly romanticized.",
             "The cumulative effect of the movie is repulsive and depressing.", 0.221),
            ("He was a follower of Ronald Reagan.",
             "Taylor was born with dual British and American citizenship.", 0.107),
            ("During his career, he married Joyce Halverson in 1951.",
             "He is married to singer Chynna Phillips.", 0.111),
        ]
        for hyp, ref, want in cases:
            got = sentence_bleu(tokenize(hyp), [tokenize(ref)], n=1)
            assert abs(got - want) <= 0.001, f"{hyp!r}: got {got:.4f}, want {want}"

    def check_fd_identity():
        rng = np.random.default_rng(7)
        mu = rng.normal(size=8)
        eye = np.eye(8)
        fd = frechet_distance(
            GaussianSummary(mean=np.zeros(8), covariance=eye, n=10),
            GaussianSummary(mean=mu, covariance=eye, n=10),
        )
        assert abs(fd - float(mu @ mu)) < 1e-9, f"fd={fd}, |mu|^2={mu @ mu}"

    def check_sqrtm():
        rng = np.random.default_rng(11)
        c = rng.normal(size=(6, 6))
        a = c.T @ c
        root = sqrtm_psd(a)
        err = np.linalg.norm(root @ root - a) / np.linalg.norm(a)
        assert err < 1e-10, f"sqrtm reconstruction error {err:.3e}"

    def check_attention_forward():
        rng = np.random.default_rng(13)
        params = AttentionParams(
            w_proj=rng.normal(size=(5, 5)),
            w_q=rng.normal(size=(5, 2)),
            w_k=rng.normal(size=(5, 2)),
            w_v=rng.normal(size=(5, 2)),
        )
        mem = NeuralMemory(global_vec=rng.normal(size=5), sequence=rng.normal(size=(4, 5)))
        h = rng.normal(size=(3, 5))
        result = qkv_cross_attention(h, mem, params)
        naive = _naive_attention(h.tolist(), mem, params)
        assert np.abs(result.output - naive).max() < 1e-12
        assert np.abs(result.weights.sum(axis=1) - 1.0).max() < 1e-12

    def check_attention_gradient():
        rng = np.random.default_rng(17)
        params = AttentionParams(
            w_proj=rng.normal(size=(4, 4)),
            w_q=rng.normal(size=(4, 3)),
            w_k=rng.normal(size=(4, 3)),
            w_v=rng.normal(size=(4, 3)),
        )
        mem = NeuralMemory(global_vec=rng.normal(size=4), sequence=rng.normal(size=(3, 4)))
        h = rng.normal(size=(2, 4))
        upstream = rng.normal(size=(2, 3))
        grads = attention_input_gradient(h, mem, params, upstream)

        def loss(h_val, seq_val):
            out = qkv_cross_attention(
                h_val, NeuralMemory(global_vec=mem.global_vec, sequence=seq_val), params
            ).output
            return float((upstream * out).sum())

        step = 1e-5
        for grad, base, which in ((grads.h_text, h, "h"), (grads.sequence, mem.sequence, "seq")):
            numeric = np.zeros_like(base)
            for idx in np.ndindex(base.shape):
                plus = base.copy()
                minus = base.copy()
                plus[idx] += step
                minus[idx] -= step
                if which == "h":
                    numeric[idx] = (loss(plus, mem.sequence) - loss(minus, mem.sequence)) / (2 * step)
                else:
                    numeric[idx] = (loss(h, plus) - loss(h, minus)) / (2 * step)
            rel = np.abs(grad - numeric).max() / max(np.abs(numeric).max(), 1e-12)
            assert rel < 1e-4, f"gradient mismatch for {which}: {rel:.3e}"

    def check_retrieval_alignment():
        rng = np.random.default_rng(19)
        vectors = rng.normal(size=(8, 4))
        ids = tuple(f"s{i}" for i in range(8))
        matrix = EmbeddingMatrix(ids=ids, vectors=vectors)
        result = nway_retrieval_accuracy(matrix, matrix, RetrievalConfig(n_way=4, runs=3, seed=1))
        assert result.mean_accuracy == 1.0

    def check_losses():
        assert abs(cross_entropy_loss(np.full(4, 0.25), 2) - math.log(4)) < 1e-12
        terms = {k: 1.0 for k in ("contrastive", "commitment", "recon", "stm", "tpc", "len", "spr")}
        assert stage1_objective(terms, PerTermLossWeights()) == 3.5

    return [
        ("appendix-bleu-vectors", check_appendix_bleu),
        ("fd-analytic-identity", check_fd_identity),
        ("sqrtm-reconstruction", check_sqrtm),
        ("attention-forward-oracle", check_attention_forward),
        ("attention-gradient-check", check_attention_gradient),
        ("retrieval-perfect-alignment", check_retrieval_alignment),
        ("loss-composition", check_losses),
    ]


def cmd_selftest(args: argparse.Namespace) -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            check()
        except AssertionError as exc:
            failures += 1
            print(f"fail {name}: {exc}")
        else:
            print(f"ok {name}")
    if failures:
        print(f"error: selftest: {failures} check(s) failed", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semeval",
        description="Holistic text-generation evaluation: retrieval, distribution, "
        "diversity, and substance metrics with BLEU-trap diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="full holistic evaluation (headline metrics)")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--emb-refs", required=True)
    p.add_argument("--emb-hyps", required=True)
    p.add_argument("--emb-format", choices=("binary", "jsonl"), default=None)
    p.add_argument("--system", default=None)
    p.add_argument("--condition", choices=("real", "noise"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bleu", help="BLEU under variant-pool vs single-reference scoring")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--system", default=None)
    p.add_argument("--condition", choices=("real", "noise"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_bleu)

    p = sub.add_parser("retrieval", help="N-way retrieval accuracy between embedding files")
    p.add_argument("--emb-queries", required=True)
    p.add_argument("--emb-candidates", required=True)
    p.add_argument("--emb-format", choices=("binary", "jsonl"), default=None)
    p.add_argument("--system", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_retrieval)

    p = sub.add_parser("fd", help="Frechet distance between two embedding files")
    p.add_argument("--emb-a", required=True)
    p.add_argument("--emb-b", required=True)
    p.add_argument("--emb-format", choices=("binary", "jsonl"), default=None)
    p.add_argument("--system", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_fd)

    p = sub.add_parser("noise", help="real-vs-noise signal dependency comparison")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps-real", required=True)
    p.add_argument("--hyps-noise", required=True)
    p.add_argument("--emb-refs", required=True)
    p.add_argument("--emb-real", required=True)
    p.add_argument("--emb-noise", required=True)
    p.add_argument("--emb-format", choices=("binary", "jsonl"), default=None)
    p.add_argument("--system", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("prefix", help="BLEU impact of stripping template prefixes")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--system", default=None)
    p.add_argument("--condition", choices=("real", "noise"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_prefix)

    p = sub.add_parser("baselines", help="chance and train-median attribute baselines")
    p.add_argument("--train", required=True)
    p.add_argument("--eval", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser(
        "embed-export",
        help="fetch embeddings from the service, or merge labeled sets for projection",
    )
    p.add_argument("--texts", default=None, help="corpus JSONL to embed")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument(
        "--project",
        action="append",
        default=None,
        metavar="LABEL=PATH",
        help="merge one embedding file per label into a projection export",
    )
    p.add_argument("--emb-format", choices=("binary", "jsonl"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_embed_export)

    p = sub.add_parser("selftest", help="run the built-in oracle suite")
    _add_common(p)
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.config_values = {}
    try:
        return args.func(args)
    except (
        CorpusFormatError,
        EmbeddingFormatError,
        EmbeddingServiceError,
        FloatingPointError,
        KeyError,
        OSError,
        ValueError,
    ) as exc:
        message = str(exc) or type(exc).__name__
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
