"""Toy-scale reference forward pass: attribute prompt, Q-K-V cross-attention
with neural keys/values, and the multi-task training objective."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PROMPT_TEMPLATE = (
    "System: Based on the following EEG signals, reconstruct the text. "
    "The length of the sentence is {length} words. "
    "The average surprisal value is {surprisal:.2f}. "
    "Sentiment: {sentiment}. Topic: {topic}."
)

PROBABILITY_FLOOR = 1e-12

GROUPED_TERM_KEYS = frozenset({"align", "recon", "stm", "tpc", "len", "spr"})
PER_TERM_KEYS = frozenset({"contrastive", "commitment", "recon", "stm", "tpc", "len", "spr"})


@dataclass(frozen=True)
class PredictedAttributes:
    """The four decoupled attribute predictions that fill the prompt."""

    length: int
    surprisal: float
    sentiment: str
    topic: str

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError(f"length must be >= 1, got {self.length}")
        if not math.isfinite(self.surprisal):
            raise ValueError("surprisal must be finite")


@dataclass(frozen=True)
class NeuralMemory:
    """Neural key/value source: one pooled global vector plus L sequence rows."""

    global_vec: np.ndarray  # (d_model,)
    sequence: np.ndarray  # (L, d_model)

    def __post_init__(self) -> None:
        g = np.asarray(self.global_vec, dtype=np.float64)
        seq = np.asarray(self.sequence, dtype=np.float64)
        if g.ndim != 1:
            raise ValueError(f"global vector must be 1-D, got shape {g.shape}")
        if seq.ndim != 2 or seq.shape[0] < 1:
            raise ValueError(f"sequence must be (L >= 1, d_model), got shape {seq.shape}")
        if seq.shape[1] != g.shape[0]:
            raise ValueError(
                f"sequence dim {seq.shape[1]} != global vector dim {g.shape[0]}"
            )
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(seq))):
            raise ValueError("neural memory must be finite")
        object.__setattr__(self, "global_vec", g)
        object.__setattr__(self, "sequence", seq)

    def stacked(self) -> np.ndarray:
        """Global row prepended to the sequence rows: (L+1, d_model)."""
        return np.vstack([self.global_vec[None, :], self.sequence])


@dataclass(frozen=True)
class AttentionParams:
    """Projection and Q/K/V weights for the single-head reference mechanism."""

    w_proj: np.ndarray  # (d_model, d_model)
    w_q: np.ndarray  # (d_model, d_k)
    w_k: np.ndarray  # (d_model, d_k)
    w_v: np.ndarray  # (d_model, d_k)

    def __post_init__(self) -> None:
        mats = {}
        for name in ("w_proj", "w_q", "w_k", "w_v"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim != 2:
                raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} must be finite")
            mats[name] = m
        d_model = mats["w_proj"].shape[0]
        if mats["w_proj"].shape != (d_model, d_model):
            raise ValueError(f"w_proj must be square, got {mats['w_proj'].shape}")
        d_k = mats["w_q"].shape[1]
        if d_k < 1:
            raise ValueError("d_k must be >= 1")
        for name in ("w_q", "w_k", "w_v"):
            if mats[name].shape != (d_model, d_k):
                raise ValueError(
                    f"{name} must be ({d_model}, {d_k}), got {mats[name].shape}"
                )
        for name, m in mats.items():
            object.__setattr__(self, name, m)

    @property
    def d_model(self) -> int:
        return self.w_proj.shape[0]

    @property
    def d_k(self) -> int:
        return self.w_q.shape[1]


@dataclass(frozen=True)
class AttentionOutput:
    output: np.ndarray  # (T, d_k)
    weights: np.ndarray  # (T, L+1), rows sum to 1


@dataclass(frozen=True)
class AttentionGradients:
    h_text: np.ndarray  # (T, d_model)
    sequence: np.ndarray  # (L, d_model)
    global_vec: np.ndarray  # (d_model,)


@dataclass(frozen=True)
class LossWeights:
    """Grouped objective weights: align, recon, one weight per task family."""

    align: float = 1.0
    recon: float = 1.0
    cls: float = 1.0
    reg: float = 1.0

    def __post_init__(self) -> None:
        for name in ("align", "recon", "cls", "reg"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be >= 0")


@dataclass(frozen=True)
class PerTermLossWeights:
    """One weight per individual loss term (the reported configuration)."""

    contrastive: float = 0.5
    commitment: float = 0.7
    reconstruction: float = 0.5
    sentiment: float = 0.3
    topic: float = 0.3
    length: float = 0.9
    surprisal: float = 0.3

    def __post_init__(self) -> None:
        for name in (
            "contrastive",
            "commitment",
            "reconstruction",
            "sentiment",
            "topic",
            "length",
            "surprisal",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be >= 0")


def render_prompt(attrs: PredictedAttributes) -> str:
    """Fill the instruction template with the four predicted attributes.

    Surprisal is formatted with two decimal places; no pluralization logic.
    """
    return PROMPT_TEMPLATE.format(
        length=attrs.length,
        surprisal=attrs.surprisal,
        sentiment=attrs.sentiment,
        topic=attrs.topic,
    )


def _check_finite(name: str, array: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise FloatingPointError(f"non-finite values at stage {name!r}")
    return array


def _row_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def qkv_cross_attention(
    h_text: np.ndarray, mem: NeuralMemory, params: AttentionParams
) -> AttentionOutput:
    """Single-head scaled dot-product attention with neural keys/values.

    Text hidden states become the queries; the projected memory rows
    (global vector prepended to the sequence) become keys and values, so
    every output row is a convex combination of neural content.
    """
    h = np.asarray(h_text, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != params.d_model:
        raise ValueError(f"h_text must be (T, {params.d_model}), got {h.shape}")
    _check_finite("h_text", h)
    memory = _check_finite("memory", mem.stacked())
    projected = _check_finite("projected_memory", memory @ params.w_proj)
    q = _check_finite("queries", h @ params.w_q)
    k = _check_finite("keys", projected @ params.w_k)
    v = _check_finite("values", projected @ params.w_v)
    logits = _check_finite("logits", q @ k.T / math.sqrt(params.d_k))
    weights = _check_finite("attention_weights", _row_softmax(logits))
    output = _check_finite("output", weights @ v)
    return AttentionOutput(output=output, weights=weights)


def attention_input_gradient(
    h_text: np.ndarray,
    mem: NeuralMemory,
    params: AttentionParams,
    upstream: np.ndarray,
) -> AttentionGradients:
    """Reverse-mode gradients of <upstream, output> w.r.t. the inputs."""
    h = np.asarray(h_text, dtype=np.float64)
    u = np.asarray(upstream, dtype=np.float64)
    memory = mem.stacked()
    projected = memory @ params.w_proj
    q = h @ params.w_q
    k = projected @ params.w_k
    v = projected @ params.w_v
    scale = 1.0 / math.sqrt(params.d_k)
    weights = _row_softmax(q @ k.T * scale)
    if u.shape != (h.shape[0], params.d_k):
        raise ValueError(f"upstream must be ({h.shape[0]}, {params.d_k}), got {u.shape}")
    _check_finite("upstream", u)

    d_v = weights.T @ u
    d_weights = u @ v.T
    # softmax backward, row-wise: dS = A * (dA - sum(dA * A))
    inner = (d_weights * weights).sum(axis=1, keepdims=True)
    d_logits = weights * (d_weights - inner)
    d_q = d_logits @ k * scale
    d_k = d_logits.T @ q * scale
    d_h = d_q @ params.w_q.T
    d_projected = d_k @ params.w_k.T + d_v @ params.w_v.T
    d_memory = d_projected @ params.w_proj.T
    return AttentionGradients(
        h_text=_check_finite("grad_h_text", d_h),
        sequence=_check_finite("grad_sequence", d_memory[1:]),
        global_vec=_check_finite("grad_global", d_memory[0]),
    )


def cross_entropy_loss(pred_probs: np.ndarray, target: int) -> float:
    """-log of the predicted probability of the target class.

    pred_probs must be a simplex vector (entries >= 0, summing to 1 within
    1e-9); the probability is floored at 1e-12 before the log.
    """
    p = np.asarray(pred_probs, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ValueError(f"pred_probs must be a 1-D vector, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError("invalid simplex: negative probability")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError(f"invalid simplex: probabilities sum to {p.sum()}")
    if not 0 <= target < p.size:
        raise ValueError(f"target index {target} out of range for {p.size} classes")
    return -math.log(max(float(p[target]), PROBABILITY_FLOOR))


def mse_loss(pred: list[float] | np.ndarray, target: list[float] | np.ndarray) -> float:
    """Mean squared difference between two equally long vectors."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1 or p.size < 1:
        raise ValueError(f"pred and target must be equal-length vectors, got {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def stage1_objective(
    terms: dict[str, float], weights: LossWeights | PerTermLossWeights
) -> float:
    """Weighted sum of the training loss terms.

    Grouped weights expect term keys {align, recon, stm, tpc, len, spr} and
    apply cls to stm+tpc and reg to len+spr. Per-term weights expect the
    alignment loss split into {contrastive, commitment} plus the five
    remaining terms, one weight each.
    """
    expected = GROUPED_TERM_KEYS if isinstance(weights, LossWeights) else PER_TERM_KEYS
    if set(terms) != expected:
        raise ValueError(f"expected term keys {sorted(expected)}, got {sorted(terms)}")
    for key, value in terms.items():
        if not math.isfinite(value):
            raise ValueError(f"term {key!r} must be finite")
        if value < 0:
            raise ValueError(f"term {key!r} must be >= 0, got {value}")
    if isinstance(weights, LossWeights):
        products = [
            weights.align * terms["align"],
            weights.recon * terms["recon"],
            weights.cls * terms["stm"],
            weights.cls * terms["tpc"],
            weights.reg * terms["len"],
            weights.reg * terms["spr"],
        ]
    else:
        products = [
            weights.contrastive * terms["contrastive"],
            weights.commitment * terms["commitment"],
            weights.reconstruction * terms["recon"],
            weights.sentiment * terms["stm"],
            weights.topic * terms["tpc"],
            weights.length * terms["len"],
            weights.surprisal * terms["spr"],
        ]
    return math.fsum(products)
