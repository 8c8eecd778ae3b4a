"""Cross-entropy loss, token accuracy, Adam, training/eval loops, checkpoints."""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bioes import (
    CATEGORIES,
    EntitySpan,
    Tag,
    decode_spans,
    id_to_tag,
    tag_strings,
    validate_sequence,
)
from .corpus import TaggedSentence, Vocabulary, build_vocab, encode_sentence
from .model import (
    ModelConfig,
    ModelParams,
    GruParams,
    LstmParams,
    LSTM,
    init_params,
    model_backward,
    model_forward,
    zero_gradients,
)
from .textnorm import NormalizationConfig, DEFAULT_CONFIG, normalize_text

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    iterations: int = 500
    batch_size: int = 8
    max_len: int | None = None  # None: longest training sentence
    seed: int = 0
    eval_every: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


class NonFiniteGradientError(ValueError):
    """A gradient tensor contains NaN or infinity; training must not proceed."""

    def __init__(self, tensor_name: str):
        super().__init__(f"non-finite gradient in tensor {tensor_name!r}")
        self.tensor_name = tensor_name


class TrainingDivergedError(RuntimeError):
    """Loss or gradients became non-finite; carries the last good checkpoint."""

    def __init__(self, step: int, reason: str, checkpoint: "Checkpoint"):
        super().__init__(f"training diverged at step {step}: {reason}")
        self.step = step
        self.checkpoint = checkpoint


def cross_entropy_loss(log_probs: np.ndarray, gold: np.ndarray, mask: np.ndarray):
    """Masked mean negative log-likelihood and its gradient w.r.t. log_probs.

    loss = -(sum_t mask_t * log_probs[t, gold_t]) / sum_t mask_t.  The
    gradient is -mask_t / sum(mask) at each gold index, zero elsewhere, so
    masked positions contribute nothing to either output.
    """
    T, K = log_probs.shape
    gold = np.asarray(gold, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.float64)
    total = mask.sum()
    if total == 0:
        raise ValueError("empty sentence: mask selects no positions")
    live = mask > 0
    if gold[live].min() < 0 or gold[live].max() >= K:
        raise ValueError(f"gold tag id outside [0, {K}) at a masked-in position")
    safe_gold = np.where(live, gold, 0)
    rows = np.arange(T)
    loss = -(mask * log_probs[rows, safe_gold]).sum() / total
    d_log_probs = np.zeros_like(log_probs)
    d_log_probs[rows, safe_gold] = -mask / total
    return loss, d_log_probs


def token_accuracy(log_probs: np.ndarray, gold: np.ndarray, mask: np.ndarray) -> float:
    """Fraction of masked positions whose argmax class equals gold.

    np.argmax takes the first maximum, so ties break toward the lowest
    class id.
    """
    gold = np.asarray(gold, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.float64)
    total = mask.sum()
    if total == 0:
        raise ValueError("empty sentence: mask selects no positions")
    pred = np.argmax(log_probs, axis=1)
    correct = ((pred == gold) & (mask > 0)).sum()
    return float(correct) / float(total)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={name: np.zeros_like(a) for name, a in params.named_tensors()},
            v={name: np.zeros_like(a) for name, a in params.named_tensors()},
        )


def adam_step(params: ModelParams, grads: dict, state: AdamState, cfg: TrainConfig):
    """One Adam update, in place, over every parameter tensor.

    All gradients are checked finite before any tensor is touched, so a
    failure leaves params and state exactly as they were.
    """
    for name, _ in params.named_tensors():
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradientError(name)
    state.t += 1
    t = state.t
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, arr in params.named_tensors():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        arr -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
    return params, state


@dataclass
class Checkpoint:
    """Self-describing snapshot: config, tag ordering, vocabulary, weights."""

    params: ModelParams
    vocab: Vocabulary
    tag_ordering: list[str] = field(default_factory=tag_strings)
    adam: AdamState | None = None
    iterations: int = 0
    seed: int = 0
    format_version: int = CHECKPOINT_VERSION

    @property
    def config(self) -> ModelConfig:
        return self.params.config


def tag_ordering_fingerprint(ordering: list[str]) -> str:
    return hashlib.sha256("\n".join(ordering).encode("utf-8")).hexdigest()


class CheckpointError(ValueError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


def _expected_tensor_names(cfg: ModelConfig) -> list[str]:
    cell = (
        [f"cell.w_{g}" for g in ("i", "f", "o", "c")]
        + [f"cell.r_{g}" for g in ("i", "f", "o", "c")]
        + [f"cell.b_{g}" for g in ("i", "f", "o", "c")]
        if cfg.cell_kind == LSTM
        else [f"cell.w_{g}" for g in ("r", "z", "n")]
        + [f"cell.u_{g}" for g in ("r", "z", "n")]
        + [f"cell.b_{g}" for g in ("r", "z", "n")]
    )
    return ["embedding"] + cell + ["dense_w", "dense_b"]


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write manifest line + raw little-endian float64 payloads.

    The manifest is a single JSON line holding the format version, model
    config, tag ordering, vocabulary, and a tensor directory (name, shape,
    byte offset into the payload, in payload order).  Tensors follow as
    C-order float64 bytes, so save/load round-trips bit-exactly.
    """
    tensors = list(ckpt.params.named_tensors())
    if ckpt.adam is not None:
        for name, _ in ckpt.params.named_tensors():
            tensors.append((f"adam.m.{name}", ckpt.adam.m[name]))
            tensors.append((f"adam.v.{name}", ckpt.adam.v[name]))
    directory = []
    offset = 0
    payload = []
    for name, arr in tensors:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload.append(data)
        offset += len(data)
    manifest = {
        "format_version": ckpt.format_version,
        "model": dataclasses.asdict(ckpt.config),
        "tag_ordering": ckpt.tag_ordering,
        "tag_fingerprint": tag_ordering_fingerprint(ckpt.tag_ordering),
        "vocab": ckpt.vocab.id_to_token[2:],
        "tensors": directory,
        "optimizer": {"step": ckpt.adam.t} if ckpt.adam is not None else None,
        "meta": {"iterations": ckpt.iterations, "seed": ckpt.seed},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, ensure_ascii=False).encode("utf-8"))
        fh.write(b"\n")
        for data in payload:
            fh.write(data)


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read and verify a checkpoint; every integrity failure is distinct."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing manifest line")
    try:
        manifest = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc})") from None
    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version!r} not supported (expected {CHECKPOINT_VERSION})"
        )
    try:
        cfg = ModelConfig(**manifest["model"])
    except (TypeError, ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: bad model config ({exc})") from None

    ordering = manifest.get("tag_ordering")
    if ordering != tag_strings() or manifest.get("tag_fingerprint") != tag_ordering_fingerprint(
        tag_strings()
    ):
        raise CheckpointError(f"{path}: tag ordering fingerprint mismatch")

    vocab = Vocabulary(manifest["vocab"])
    if len(vocab) != cfg.vocab_size:
        raise CheckpointError(
            f"{path}: vocabulary size {len(vocab)} does not match config {cfg.vocab_size}"
        )

    payload = raw[nl + 1 :]
    expected = _expected_tensor_names(cfg)
    optimizer = manifest.get("optimizer")
    if optimizer is not None:
        expected = expected + [f"adam.{mv}.{n}" for n in expected for mv in ("m", "v")]
    directory = manifest.get("tensors", [])
    names = [entry["name"] for entry in directory]
    if sorted(names) != sorted(expected):
        raise CheckpointError(
            f"{path}: tensor directory does not match a {cfg.cell_kind} model config"
        )
    base_shapes = _expected_shapes(cfg)
    shapes = dict(base_shapes)
    for n, shape in base_shapes.items():
        shapes[f"adam.m.{n}"] = shape
        shapes[f"adam.v.{n}"] = shape
    for entry in directory:
        if tuple(entry["shape"]) != shapes[entry["name"]]:
            raise CheckpointError(
                f"{path}: tensor {entry['name']!r} shape {tuple(entry['shape'])} does not "
                f"match config shape {shapes[entry['name']]}"
            )
    arrays = {}
    offset = 0
    for entry in directory:
        name, shape = entry["name"], tuple(entry["shape"])
        if entry["offset"] != offset:
            raise CheckpointError(
                f"{path}: tensor {name!r} offset {entry['offset']} inconsistent "
                f"(expected {offset})"
            )
        size = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + size > len(payload):
            raise CheckpointError(f"{path}: truncated payload at tensor {name!r}")
        arrays[name] = (
            np.frombuffer(payload, dtype="<f8", count=size // 8, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += size
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing payload bytes")

    params = _params_from_arrays(cfg, arrays)
    adam = None
    if optimizer is not None:
        adam = AdamState(
            m={n: arrays[f"adam.m.{n}"] for n in _expected_tensor_names(cfg)},
            v={n: arrays[f"adam.v.{n}"] for n in _expected_tensor_names(cfg)},
            t=int(optimizer["step"]),
        )
    meta = manifest.get("meta", {})
    return Checkpoint(
        params=params,
        vocab=vocab,
        tag_ordering=ordering,
        adam=adam,
        iterations=int(meta.get("iterations", 0)),
        seed=int(meta.get("seed", 0)),
    )


def _expected_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    V, E, H, K = cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.num_classes
    shapes = {"embedding": (V, E), "dense_w": (K, H), "dense_b": (K,)}
    gates = ("i", "f", "o", "c") if cfg.cell_kind == LSTM else ("r", "z", "n")
    rec = "r" if cfg.cell_kind == LSTM else "u"
    for g in gates:
        shapes[f"cell.w_{g}"] = (H, E)
        shapes[f"cell.{rec}_{g}"] = (H, H)
        shapes[f"cell.b_{g}"] = (H,)
    return shapes


def _params_from_arrays(cfg: ModelConfig, arrays: dict) -> ModelParams:
    if cfg.cell_kind == LSTM:
        cell = LstmParams(
            **{f"w_{g}": arrays[f"cell.w_{g}"] for g in ("i", "f", "o", "c")},
            **{f"r_{g}": arrays[f"cell.r_{g}"] for g in ("i", "f", "o", "c")},
            **{f"b_{g}": arrays[f"cell.b_{g}"] for g in ("i", "f", "o", "c")},
        )
    else:
        cell = GruParams(
            **{f"w_{g}": arrays[f"cell.w_{g}"] for g in ("r", "z", "n")},
            **{f"u_{g}": arrays[f"cell.u_{g}"] for g in ("r", "z", "n")},
            **{f"b_{g}": arrays[f"cell.b_{g}"] for g in ("r", "z", "n")},
        )
    return ModelParams(cfg, arrays["embedding"], cell, arrays["dense_w"], arrays["dense_b"])


@dataclass
class MetricRecord:
    step: int
    split: str
    loss: float
    accuracy: float

    def to_line(self) -> str:
        return (
            f"step={self.step} split={self.split} "
            f"loss={self.loss:.10g} accuracy={self.accuracy:.10g}"
        )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    records: list[MetricRecord]
    truncated_sentences: int = 0

    @property
    def valid_records(self):
        return [r for r in self.records if r.split == "valid"]

    def summary_lines(self) -> list[str]:
        lines = []
        valids = self.valid_records
        if valids:
            best = max(valids, key=lambda r: r.accuracy)
            last = valids[-1]
            lines.append(
                f"summary=valid best_accuracy={best.accuracy:.10g} best_step={best.step} "
                f"final_accuracy={last.accuracy:.10g} final_step={last.step}"
            )
        if self.truncated_sentences:
            lines.append(f"summary=train truncated_sentences={self.truncated_sentences}")
        return lines


def _shuffled_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless deterministic batch index stream, reshuffling every epoch."""
    queue: list[int] = []
    while True:
        while len(queue) < batch_size:
            queue.extend(rng.permutation(n).tolist())
        yield queue[:batch_size]
        del queue[:batch_size]


def _split_metrics(params: ModelParams, encoded) -> tuple[float, float]:
    """Mean-per-token loss and accuracy over a whole encoded split."""
    nll = 0.0
    correct = 0.0
    total = 0.0
    for token_ids, tag_ids, mask in encoded:
        log_probs, _ = model_forward(params, token_ids, mask)
        loss, _ = cross_entropy_loss(log_probs, tag_ids, mask)
        m = mask.sum()
        nll += loss * m
        correct += token_accuracy(log_probs, tag_ids, mask) * m
        total += m
    return nll / total, correct / total


def train(
    train_split: list[TaggedSentence],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    valid_split: list[TaggedSentence] | None = None,
) -> TrainResult:
    """Run `iterations` Adam steps over shuffled batches of the training split.

    The vocabulary is built from the training split; model_cfg.vocab_size
    is replaced by the real vocabulary size.  Batch loss is the mean over
    masked tokens of the whole batch.  Validation loss/accuracy are
    recorded every eval_every steps.  Non-finite loss or gradients abort
    with TrainingDivergedError carrying the last good checkpoint.
    """
    if not train_split:
        raise ValueError("training split is empty")
    vocab = build_vocab(train_split)
    max_len = train_cfg.max_len or max(len(s) for s in train_split)
    cfg = dataclasses.replace(model_cfg, vocab_size=len(vocab))
    params = init_params(cfg)
    adam = AdamState.for_params(params)

    encoded = [encode_sentence(s, vocab, max_len) for s in train_split]
    truncated = sum(1 for s in train_split if len(s) > max_len)
    encoded_valid = (
        [encode_sentence(s, vocab, len(s)) for s in valid_split] if valid_split else []
    )

    rng = np.random.default_rng(train_cfg.seed)
    batches = _shuffled_batches(len(encoded), train_cfg.batch_size, rng)
    records: list[MetricRecord] = []

    def snapshot(step):
        return Checkpoint(
            params=params, vocab=vocab, adam=adam, iterations=step, seed=train_cfg.seed
        )

    for step in range(1, train_cfg.iterations + 1):
        batch = next(batches)
        forwards = []
        batch_tokens = 0.0
        for idx in batch:
            token_ids, tag_ids, mask = encoded[idx]
            log_probs, caches = model_forward(params, token_ids, mask)
            forwards.append((idx, log_probs, caches))
            batch_tokens += mask.sum()
        grads = zero_gradients(params)
        nll = 0.0
        correct = 0.0
        for idx, log_probs, caches in forwards:
            _, tag_ids, mask = encoded[idx]
            loss, d_log_probs = cross_entropy_loss(log_probs, tag_ids, mask)
            m = mask.sum()
            nll += loss * m
            correct += token_accuracy(log_probs, tag_ids, mask) * m
            for name, g in model_backward(params, caches, d_log_probs * (m / batch_tokens)).items():
                grads[name] += g
        batch_loss = nll / batch_tokens
        if not np.isfinite(batch_loss):
            raise TrainingDivergedError(step, "non-finite loss", snapshot(step - 1))
        try:
            adam_step(params, grads, adam, train_cfg)
        except NonFiniteGradientError as exc:
            raise TrainingDivergedError(step, str(exc), snapshot(step - 1)) from exc
        records.append(MetricRecord(step, "train", batch_loss, correct / batch_tokens))
        if encoded_valid and step % train_cfg.eval_every == 0:
            vloss, vacc = _split_metrics(params, encoded_valid)
            records.append(MetricRecord(step, "valid", vloss, vacc))

    return TrainResult(snapshot(train_cfg.iterations), records, truncated)


@dataclass
class CategoryScore:
    gold: int = 0
    predicted: int = 0
    matched: int = 0

    @property
    def precision(self) -> float:
        return self.matched / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.matched / self.gold if self.gold else 0.0


@dataclass
class EvalResult:
    token_accuracy: float
    category_scores: dict[str, CategoryScore]
    confusion: np.ndarray  # [gold tag id, predicted tag id] counts

    def top_confusions(self, n: int = 5):
        """Largest off-diagonal confusion cells as (gold, predicted, count)."""
        cells = []
        K = self.confusion.shape[0]
        for gi in range(K):
            for pi in range(K):
                if gi != pi and self.confusion[gi, pi]:
                    cells.append((str(id_to_tag(gi)), str(id_to_tag(pi)), int(self.confusion[gi, pi])))
        cells.sort(key=lambda c: (-c[2], c[0], c[1]))
        return cells[:n]


def _spans_lenient(tags) -> list[EntitySpan]:
    """Spans from a possibly ill-formed sequence: a strict decode when the
    grammar holds, otherwise each maximal same-category run is one span."""
    if validate_sequence(tags) is None:
        return decode_spans(tags)
    spans = []
    start = None
    current = None
    for i, tag in enumerate(tags):
        cat = tag.category
        if cat != current:
            if current is not None:
                spans.append(EntitySpan(start, i - 1, current))
            start = i if cat is not None else None
            current = cat
    if current is not None:
        spans.append(EntitySpan(start, len(tags) - 1, current))
    return spans


def evaluate(ckpt: Checkpoint, sentences: list[TaggedSentence]) -> EvalResult:
    """Token accuracy, per-category span precision/recall, confusion counts.

    Token accuracy is micro-averaged over every token of the split.  Span
    scores compare exact (start, end, category) triples; predictions are
    decoded leniently since the model may emit ill-formed transitions.
    """
    if ckpt.tag_ordering != tag_strings():
        raise CheckpointError("checkpoint tag ordering does not match this codec")
    if not sentences:
        raise ValueError("evaluation split is empty")
    K = ckpt.config.num_classes
    confusion = np.zeros((K, K), dtype=np.int64)
    correct = 0.0
    total = 0.0
    scores = {c: CategoryScore() for c in CATEGORIES}
    for s in sentences:
        token_ids, tag_ids, mask = encode_sentence(s, ckpt.vocab, len(s))
        log_probs, _ = model_forward(ckpt.params, token_ids, mask)
        pred_ids = np.argmax(log_probs, axis=1)
        correct += token_accuracy(log_probs, tag_ids, mask) * mask.sum()
        total += mask.sum()
        for g, p in zip(tag_ids, pred_ids):
            confusion[g, p] += 1
        pred_tags = [id_to_tag(int(i)) for i in pred_ids]
        gold_spans = set(map(_span_key, _spans_lenient(s.tags)))
        pred_spans = set(map(_span_key, _spans_lenient(pred_tags)))
        for span in gold_spans:
            scores[span[2]].gold += 1
        for span in pred_spans:
            scores[span[2]].predicted += 1
            if span in gold_spans:
                scores[span[2]].matched += 1
    return EvalResult(correct / total, scores, confusion)


def _span_key(span: EntitySpan):
    return (span.start, span.end, span.category)


def predict_tags(
    ckpt: Checkpoint,
    raw_tokens: list[str],
    norm_cfg: NormalizationConfig = DEFAULT_CONFIG,
) -> list[Tag]:
    """Tag one pre-tokenized sentence; tokens are normalized before lookup."""
    if not raw_tokens:
        return []
    ids = np.array([ckpt.vocab.lookup(normalize_text(t, norm_cfg)) for t in raw_tokens])
    log_probs, _ = model_forward(ckpt.params, ids)
    return [id_to_tag(int(i)) for i in np.argmax(log_probs, axis=1)]
