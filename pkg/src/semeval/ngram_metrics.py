"""Surface-form metrics: BLEU variants, Dist-n, head entropy, content recall."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import TokenSequence, ngrams

SELF_BLEU_EPSILON = 1e-9

REFERENCE_MODES = ("single", "multi_mtv")


@dataclass(frozen=True)
class BleuConfig:
    """Knobs shared by all BLEU-style scoring.

    epsilon=None means no smoothing: any zero n-gram precision zeroes the
    score. reference_mode selects whether pipelines score against the
    ground truth alone or the augmented variant pool.
    """

    max_order: int = 4
    epsilon: float | None = None
    reference_mode: str = "single"

    def __post_init__(self) -> None:
        if not 1 <= self.max_order <= 4:
            raise ValueError(f"max_order must be in [1, 4], got {self.max_order}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.reference_mode not in REFERENCE_MODES:
            raise ValueError(f"reference_mode must be one of {REFERENCE_MODES}")


@dataclass(frozen=True)
class StopwordList:
    """Lowercase words treated as non-content for recall purposes."""

    words: frozenset[str]

    @classmethod
    def from_file(cls, path: str | Path) -> "StopwordList":
        """Load one lowercase word per line; '#' starts a comment line."""
        words = set()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                word = line.strip()
                if word and not word.startswith("#"):
                    words.add(word.lower())
        return cls(frozenset(words))

    @classmethod
    def default(cls) -> "StopwordList":
        """The stop list shipped with the package (editable after install)."""
        text = resources.files("semeval").joinpath("data/stopwords_en.txt").read_text("utf-8")
        words = {
            line.strip().lower()
            for line in text.splitlines()
            if line.strip() and not line.startswith("#")
        }
        return cls(frozenset(words))


def _closest_ref_length(hyp_len: int, ref_lens: list[int]) -> int:
    # ties broken toward the shorter reference
    return min(ref_lens, key=lambda L: (abs(L - hyp_len), L))


def _clipped_matches(hyp: TokenSequence, refs: list[TokenSequence], k: int) -> tuple[int, int]:
    """(clipped match count, total hyp k-gram count) for one order."""
    hyp_counts = ngrams(hyp, k)
    total = sum(hyp_counts.values())
    if total == 0:
        return 0, 0
    max_counts: Counter = Counter()
    for ref in refs:
        for gram, count in ngrams(ref, k).items():
            if count > max_counts[gram]:
                max_counts[gram] = count
    matched = sum(min(count, max_counts[gram]) for gram, count in hyp_counts.items())
    return matched, total


def _combine(precisions: list[float], bp: float, epsilon: float | None) -> float:
    if epsilon is None and any(p == 0.0 for p in precisions):
        return 0.0
    smoothed = [max(p, epsilon) if epsilon is not None else p for p in precisions]
    log_mean = math.fsum(math.log(p) for p in smoothed) / len(smoothed)
    return bp * math.exp(log_mean)


def sentence_bleu(
    hyp: TokenSequence,
    refs: list[TokenSequence],
    n: int = 4,
    epsilon: float | None = None,
) -> float:
    """Sentence BLEU-n: clipped precisions, uniform geometric mean, brevity penalty.

    BP = 1 if len(hyp) > r else exp(1 - r/len(hyp)) with r the reference
    length closest to len(hyp) (ties toward the shorter). An empty
    hypothesis scores 0 rather than raising; callers that care should count
    empties themselves.
    """
    if not refs:
        raise ValueError("at least one reference is required")
    if not 1 <= n <= 4:
        raise ValueError(f"BLEU order must be in [1, 4], got {n}")
    if len(hyp) == 0:
        return 0.0
    precisions = []
    for k in range(1, n + 1):
        matched, total = _clipped_matches(hyp, refs, k)
        precisions.append(matched / total if total else 0.0)
    r = _closest_ref_length(len(hyp), [len(ref) for ref in refs])
    bp = 1.0 if len(hyp) > r else math.exp(1.0 - r / len(hyp))
    return _combine(precisions, bp, epsilon)


def corpus_bleu(
    pairs: list[tuple[TokenSequence, list[TokenSequence]]],
    n: int = 4,
    epsilon: float | None = None,
) -> float:
    """Corpus BLEU-n: matches and totals are summed over pairs before dividing.

    The brevity penalty uses the summed hypothesis length against the sum of
    per-pair closest reference lengths.
    """
    if not pairs:
        raise ValueError("at least one (hyp, refs) pair is required")
    if not 1 <= n <= 4:
        raise ValueError(f"BLEU order must be in [1, 4], got {n}")
    matched = [0] * n
    totals = [0] * n
    c_sum = 0
    r_sum = 0
    for hyp, refs in pairs:
        if not refs:
            raise ValueError("every pair needs at least one reference")
        c_sum += len(hyp)
        r_sum += _closest_ref_length(len(hyp), [len(ref) for ref in refs])
        for k in range(1, n + 1):
            m, t = _clipped_matches(hyp, refs, k)
            matched[k - 1] += m
            totals[k - 1] += t
    if c_sum == 0:
        return 0.0
    precisions = [m / t if t else 0.0 for m, t in zip(matched, totals)]
    bp = 1.0 if c_sum > r_sum else math.exp(1.0 - r_sum / c_sum)
    return _combine(precisions, bp, epsilon)


def self_bleu(
    hyps: list[TokenSequence],
    n: int = 4,
    epsilon: float | None = SELF_BLEU_EPSILON,
) -> float:
    """Mean BLEU of each hypothesis against all the others; low = diverse."""
    if len(hyps) < 2:
        raise ValueError("self-BLEU needs at least 2 hypotheses")
    total = 0.0
    for i, hyp in enumerate(hyps):
        others = hyps[:i] + hyps[i + 1 :]
        total += sentence_bleu(hyp, others, n=n, epsilon=epsilon)
    return total / len(hyps)


def dist_n(hyps: list[TokenSequence], n: int, denominator: str = "tokens") -> float:
    """Distinct n-grams across hypotheses over total tokens (or total n-grams).

    denominator="tokens" divides by the total generated token count;
    "ngrams" divides by the total n-gram count.
    """
    if not hyps:
        raise ValueError("dist-n needs a non-empty hypothesis list")
    if denominator not in ("tokens", "ngrams"):
        raise ValueError(f"denominator must be 'tokens' or 'ngrams', got {denominator!r}")
    distinct: set = set()
    total_tokens = 0
    total_ngrams = 0
    for hyp in hyps:
        total_tokens += len(hyp)
        grams = ngrams(hyp, n)
        total_ngrams += sum(grams.values())
        distinct.update(grams)
    denom = total_tokens if denominator == "tokens" else total_ngrams
    if denom == 0:
        raise ValueError("dist-n denominator is zero")
    return len(distinct) / denom


def opening_bigram_counts(hyps: list[TokenSequence]) -> tuple[Counter, int]:
    """Frequency table of each hypothesis' first two tokens, plus skipped count.

    Hypotheses shorter than 2 tokens are skipped (reported as the second
    element so pipelines can surface a diagnostic).
    """
    counts: Counter = Counter()
    skipped = 0
    for hyp in hyps:
        if len(hyp) < 2:
            skipped += 1
        else:
            counts[(hyp[0], hyp[1])] += 1
    return counts, skipped


def head_entropy(hyps: list[TokenSequence]) -> float:
    """Shannon entropy (bits) of the opening-bigram distribution."""
    counts, _ = opening_bigram_counts(hyps)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("head entropy needs at least one hypothesis with >= 2 tokens")
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


def content_recall_counts(
    hyp: TokenSequence, ref: TokenSequence, stop: StopwordList
) -> tuple[int, int]:
    """(recalled, total) over the reference's content tokens.

    Content tokens are reference tokens whose lowercase form is not in the
    stop list; they are counted with multiplicity. A content token is
    recalled iff its lowercase form appears anywhere in the hypothesis.
    """
    if not stop.words:
        raise ValueError("stop list is empty")
    hyp_lower = {t.lower() for t in hyp}
    recalled = 0
    total = 0
    for token in ref:
        low = token.lower()
        if low in stop.words:
            continue
        total += 1
        if low in hyp_lower:
            recalled += 1
    return recalled, total


def content_recall(hyp: TokenSequence, ref: TokenSequence, stop: StopwordList) -> float:
    """Fraction of the reference's content words present in the hypothesis."""
    recalled, total = content_recall_counts(hyp, ref, stop)
    if total == 0:
        raise ValueError("reference has no content words")
    return recalled / total


def corpus_content_recall(
    pairs: list[tuple[TokenSequence, TokenSequence]],
    stop: StopwordList,
    aggregation: str = "micro",
) -> float:
    """Corpus content recall: micro pools counts, macro averages per-sentence.

    References without content words contribute nothing (micro) or are
    skipped (macro).
    """
    if aggregation not in ("micro", "macro"):
        raise ValueError(f"aggregation must be 'micro' or 'macro', got {aggregation!r}")
    if not pairs:
        raise ValueError("content recall needs a non-empty pair list")
    if aggregation == "micro":
        recalled_sum = 0
        total_sum = 0
        for hyp, ref in pairs:
            recalled, total = content_recall_counts(hyp, ref, stop)
            recalled_sum += recalled
            total_sum += total
        if total_sum == 0:
            raise ValueError("no reference content words in the corpus")
        return recalled_sum / total_sum
    scores = []
    for hyp, ref in pairs:
        recalled, total = content_recall_counts(hyp, ref, stop)
        if total > 0:
            scores.append(recalled / total)
    if not scores:
        raise ValueError("no reference content words in the corpus")
    return sum(scores) / len(scores)


def strip_prefixes(seq: TokenSequence, prefixes: list[TokenSequence]) -> TokenSequence:
    """Remove the longest listed prefix the sequence starts with, once."""
    for prefix in sorted(prefixes, key=len, reverse=True):
        k = len(prefix)
        if k and seq[:k] == tuple(prefix):
            return seq[k:]
    return seq


def load_prefix_list(path: str | Path) -> list[TokenSequence]:
    """Load prefix phrases, one per line, tokenized with the shared tokenizer."""
    from .corpus import tokenize

    prefixes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            phrase = line.strip()
            if phrase and not phrase.startswith("#"):
                prefixes.append(tokenize(phrase))
    return prefixes


# Appendix-style default: the two recurrent opening templates.
DEFAULT_PREFIXES: list[TokenSequence] = [("The", "movie"), ("He", "was")]
