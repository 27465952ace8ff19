"""Trainable softmax probes, per-layer sweeps, cross-modal alignment curves.

The probe is a desk-scale stand-in for LLM fine-tuning, not a claim of
equivalence with it; it measures how linearly recoverable a label is from a
pooled representation. Two kinds mirror the two pipelines' entry points:

    embedding_bag_discrete   token ids -> learned table -> mean pool -> softmax
    mean_pool_continuous     frames -> mean pool -> linear adapter -> softmax

Training is plain mini-batch SGD on cross-entropy (optional L2 on the two
weight matrices, never on biases), all in float64 with hand-written
gradients. If an epoch ends with a higher (or non-finite) loss than the last
recorded one, the epoch is rolled back and retried with the learning rate
halved, up to 10 halvings in total; after that training raises
DivergenceError. The recorded loss trace is therefore non-increasing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataValidationError, DivergenceError
from .feature_io import FeatureSequence, load_features, store_features
from .metrics import accuracy
from .quantizer import TokenSequence
from .seeding import derive_seed

PROBE_KINDS = ("embedding_bag_discrete", "mean_pool_continuous")

_PARAM_KEYS = {
    "embedding_bag_discrete": ("front_weight", "weight", "bias"),
    "mean_pool_continuous": ("front_weight", "front_bias", "weight", "bias"),
}


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 1e-5
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    l2: float = 0.0
    embed_dim: int = 32
    hidden: int = 64
    max_lr_halvings: int = 10

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if self.embed_dim < 1 or self.hidden < 1:
            raise ValueError("embed_dim and hidden must be >= 1")
        if self.max_lr_halvings < 0:
            raise ValueError("max_lr_halvings must be >= 0")


@dataclass(eq=False)
class ProbeModel:
    """Parameter bundle for one probe; params stay float64 in memory."""

    kind: str
    params: dict[str, np.ndarray]
    classes: list[str]

    def __post_init__(self) -> None:
        if self.kind not in PROBE_KINDS:
            raise ValueError(f"kind must be one of {PROBE_KINDS}, got {self.kind!r}")
        expected = set(_PARAM_KEYS[self.kind])
        if set(self.params) != expected:
            raise ValueError(f"params must have keys {sorted(expected)}, got {sorted(self.params)}")
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in self.params.items()}
        for name, value in self.params.items():
            if not np.isfinite(value).all():
                raise DataValidationError(f"parameter {name} contains non-finite values")
        if len(self.classes) < 2:
            raise ValueError(f"need at least 2 classes, got {len(self.classes)}")
        n_classes = self.params["weight"].shape[1]
        if n_classes != len(self.classes) or self.params["bias"].shape != (n_classes,):
            raise ValueError("classifier shapes do not match the class list")

    @property
    def pooled_width(self) -> int:
        return self.params["weight"].shape[0]

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


@dataclass
class ProbeTraining:
    """What train_probe returns: the model plus its loss history."""

    model: ProbeModel
    loss_trace: list[float]
    final_lr: float
    n_halvings: int


@dataclass
class _Prepared:
    """Label-indexed view of a dataset, ready for batching."""

    kind: str
    y: np.ndarray
    pooled: np.ndarray | None = None
    id_lists: list[np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx: np.ndarray) -> "_Prepared":
        return _Prepared(
            kind=self.kind,
            y=self.y[idx],
            pooled=None if self.pooled is None else self.pooled[idx],
            id_lists=None if self.id_lists is None else [self.id_lists[i] for i in idx],
        )


def _as_id_array(rep) -> np.ndarray:
    if isinstance(rep, TokenSequence):
        rep = rep.ids
    ids = np.asarray(rep, dtype=np.int64)
    if ids.ndim != 1 or len(ids) == 0:
        raise ValueError("discrete representation must be a non-empty 1-D id sequence")
    if (ids < 0).any():
        raise DataValidationError("negative token id in representation")
    return ids


def _as_pooled_vector(rep) -> np.ndarray:
    if isinstance(rep, FeatureSequence):
        rep = rep.frames
    arr = np.asarray(rep, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[0] == 0:
            raise ValueError("cannot mean-pool an empty frame sequence")
        arr = arr.mean(axis=0)
    if arr.ndim != 1 or len(arr) == 0:
        raise ValueError(f"continuous representation must be 1-D or 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataValidationError("non-finite value in continuous representation")
    return arr


def prepare_data(
    data: Sequence[tuple],
    kind: str,
    classes: list[str] | None = None,
) -> tuple[_Prepared, list[str]]:
    """Pool representations and index labels; infers the class list if None.

    Labels not in an explicitly supplied class list map to -1 (never matched
    by argmax), so evaluation counts them as errors instead of failing.
    """
    if kind not in PROBE_KINDS:
        raise ValueError(f"kind must be one of {PROBE_KINDS}, got {kind!r}")
    if not data:
        raise ValueError("dataset is empty")
    labels = [str(label) for _, label in data]
    if classes is None:
        classes = sorted(set(labels))
        if len(classes) < 2:
            raise ValueError(f"need at least 2 classes, found {classes}")
    index = {c: i for i, c in enumerate(classes)}
    y = np.asarray([index.get(label, -1) for label in labels], dtype=np.int64)
    if kind == "embedding_bag_discrete":
        prepared = _Prepared(kind=kind, y=y, id_lists=[_as_id_array(r) for r, _ in data])
    else:
        pooled = np.stack([_as_pooled_vector(r) for r, _ in data])
        prepared = _Prepared(kind=kind, y=y, pooled=pooled)
    return prepared, classes


def _pool_embeddings(id_lists: list[np.ndarray], table: np.ndarray) -> np.ndarray:
    out = np.empty((len(id_lists), table.shape[1]), dtype=np.float64)
    for i, ids in enumerate(id_lists):
        out[i] = table[ids].mean(axis=0)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _forward(model: ProbeModel, batch: _Prepared) -> tuple[np.ndarray, np.ndarray]:
    """Returns (pooled features entering the classifier, logits)."""
    p = model.params
    if model.kind == "embedding_bag_discrete":
        feats = _pool_embeddings(batch.id_lists, p["front_weight"])
    else:
        feats = batch.pooled @ p["front_weight"] + p["front_bias"]
    return feats, feats @ p["weight"] + p["bias"]


def predict_logits(model: ProbeModel, batch: _Prepared) -> np.ndarray:
    if batch.kind != model.kind:
        raise ValueError(f"data prepared for {batch.kind!r}, model is {model.kind!r}")
    if model.kind == "embedding_bag_discrete":
        vocab = model.params["front_weight"].shape[0]
        for ids in batch.id_lists:
            if ids.max() >= vocab:
                raise ValueError(f"token id {int(ids.max())} outside vocab of {vocab}")
    elif batch.pooled.shape[1] != model.params["front_weight"].shape[0]:
        raise ValueError(
            f"feature width {batch.pooled.shape[1]} does not match "
            f"adapter input {model.params['front_weight'].shape[0]}"
        )
    return _forward(model, batch)[1]


def loss_and_grads(
    model: ProbeModel, batch: _Prepared, l2: float = 0.0
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy (plus L2 on weight matrices) and its gradients.

    Gradients carry the same keys as model.params; they are checked against
    central finite differences in the test suite.
    """
    p = model.params
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    if (batch.y < 0).any():
        raise ValueError("batch contains labels outside the model's class list")
    feats, logits = _forward(model, batch)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted[np.arange(n), batch.y] - log_z
    loss = -log_probs.mean()
    loss += 0.5 * l2 * (np.sum(p["front_weight"] ** 2) + np.sum(p["weight"] ** 2))
    probs = softmax(logits)
    dlogits = probs
    dlogits[np.arange(n), batch.y] -= 1.0
    dlogits /= n
    grads = {
        "weight": feats.T @ dlogits + l2 * p["weight"],
        "bias": dlogits.sum(axis=0),
    }
    dfeats = dlogits @ p["weight"].T
    if model.kind == "embedding_bag_discrete":
        dtable = np.zeros_like(p["front_weight"])
        for i, ids in enumerate(batch.id_lists):
            np.add.at(dtable, ids, dfeats[i] / len(ids))
        grads["front_weight"] = dtable + l2 * p["front_weight"]
    else:
        grads["front_weight"] = batch.pooled.T @ dfeats + l2 * p["front_weight"]
        grads["front_bias"] = dfeats.sum(axis=0)
    return float(loss), grads


def init_probe(
    kind: str,
    classes: list[str],
    config: ProbeConfig,
    in_dim: int,
    rng: np.random.Generator,
) -> ProbeModel:
    """Fresh parameters; in_dim is the vocab (discrete) or feature width.

    Weights start uniform in +-1/sqrt(fan_in), biases at zero. Draw order is
    front_weight then weight, fixed so runs reproduce.
    """
    n_classes = len(classes)
    if kind == "embedding_bag_discrete":
        width = config.embed_dim
        front = rng.uniform(-1, 1, size=(in_dim, width)) / np.sqrt(width)
        params = {"front_weight": front}
    else:
        width = config.hidden
        front = rng.uniform(-1, 1, size=(in_dim, width)) / np.sqrt(in_dim)
        params = {"front_weight": front, "front_bias": np.zeros(width)}
    params["weight"] = rng.uniform(-1, 1, size=(width, n_classes)) / np.sqrt(width)
    params["bias"] = np.zeros(n_classes)
    return ProbeModel(kind=kind, params=params, classes=list(classes))


def train_probe(
    data: Sequence[tuple],
    config: ProbeConfig,
    kind: str,
    vocab: int | None = None,
) -> ProbeTraining:
    """Fit a probe with mini-batch SGD; deterministic for a fixed config.

    For the discrete kind, vocab defaults to max id + 1 over the data; pass
    it explicitly when evaluation data may contain unseen ids.
    """
    prepared, classes = prepare_data(data, kind)
    if kind == "embedding_bag_discrete":
        max_id = max(int(ids.max()) for ids in prepared.id_lists)
        if vocab is None:
            vocab = max_id + 1
        elif max_id >= vocab:
            raise ValueError(f"token id {max_id} outside declared vocab {vocab}")
        in_dim = vocab
    else:
        in_dim = prepared.pooled.shape[1]
    rng = np.random.default_rng(config.seed)
    model = init_probe(kind, classes, config, in_dim, rng)

    def full_loss() -> float:
        return loss_and_grads(model, prepared, config.l2)[0]

    trace = [full_loss()]
    if not np.isfinite(trace[0]):
        raise DivergenceError("initial loss is not finite")
    lr = config.lr
    halvings = 0
    n = len(prepared)
    for epoch in range(config.epochs):
        while True:
            rng_state = rng.bit_generator.state
            snapshot = model.copy_params()
            perm = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                batch = prepared.subset(perm[start : start + config.batch_size])
                _, grads = loss_and_grads(model, batch, config.l2)
                for name, grad in grads.items():
                    model.params[name] -= lr * grad
            epoch_loss = full_loss()
            if np.isfinite(epoch_loss) and epoch_loss <= trace[-1]:
                trace.append(epoch_loss)
                break
            model.params = snapshot
            rng.bit_generator.state = rng_state
            if halvings >= config.max_lr_halvings:
                raise DivergenceError(
                    f"loss rose to {epoch_loss!r} at epoch {epoch + 1} "
                    f"after {halvings} lr halvings"
                )
            halvings += 1
            lr /= 2
    return ProbeTraining(model=model, loss_trace=trace, final_lr=lr, n_halvings=halvings)


def predict(model: ProbeModel, representations: Sequence) -> list[str]:
    """Argmax class label per representation (ties go to the lower index)."""
    data = [(rep, model.classes[0]) for rep in representations]
    prepared, _ = prepare_data(data, model.kind, classes=model.classes)
    logits = predict_logits(model, prepared)
    return [model.classes[i] for i in np.argmax(logits, axis=1)]


def eval_probe(model: ProbeModel, data: Sequence[tuple]) -> float:
    """Accuracy of argmax predictions over (representation, label) pairs."""
    prepared, _ = prepare_data(data, model.kind, classes=model.classes)
    logits = predict_logits(model, prepared)
    predictions = np.argmax(logits, axis=1)
    return float((predictions == prepared.y).mean())


def holdout_split(
    ids: Sequence[str], eval_fraction: float, seed: int
) -> tuple[list[str], list[str]]:
    """Deterministic utterance-level (train_ids, eval_ids) split.

    Shuffles the sorted id list with the given seed; the eval side gets
    round(eval_fraction * n), clamped so both sides stay non-empty.
    """
    if not 0 < eval_fraction < 1:
        raise ValueError(f"eval_fraction must be in (0,1), got {eval_fraction}")
    ordered = sorted(ids)
    if len(ordered) != len(set(ordered)):
        raise ValueError("ids contain duplicates")
    if len(ordered) < 2:
        raise ValueError("need at least 2 ids to split")
    rng = np.random.default_rng(seed)
    shuffled = list(rng.permutation(ordered))
    n_eval = max(1, round(eval_fraction * len(shuffled)))
    n_eval = min(n_eval, len(shuffled) - 1)
    eval_ids = set(shuffled[:n_eval])
    return [i for i in ordered if i not in eval_ids], [i for i in ordered if i in eval_ids]


@dataclass(frozen=True)
class LayerScore:
    layer_id: int
    score: float
    metric: str


@dataclass
class LayerSweepResult:
    records: list[LayerScore]

    def __post_init__(self) -> None:
        ids = [r.layer_id for r in self.records]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate layer ids in {ids}")
        for r in self.records:
            if not np.isfinite(r.score):
                raise DataValidationError(f"layer {r.layer_id}: non-finite score")

    def scores(self) -> dict[int, float]:
        return {r.layer_id: r.score for r in self.records}


def layer_sweep(
    per_layer_data: dict[int, list[tuple[str, object, str]]],
    config: ProbeConfig,
    kind: str,
    task_metric: Callable[[Sequence, Sequence], float] = accuracy,
    metric_name: str = "accuracy",
    eval_fraction: float = 0.2,
    vocab: int | None = None,
) -> LayerSweepResult:
    """Train one probe per layer (identical config and seed) and score each.

    per_layer_data maps layer_id to (source_id, representation, label)
    triples. All layers must cover the same utterances with the same labels.
    The train/eval split is by utterance, derived from config.seed, and
    shared across layers so scores are comparable.
    """
    if not per_layer_data:
        raise ValueError("need at least one layer")
    if not 0 < eval_fraction < 1:
        raise ValueError(f"eval_fraction must be in (0,1), got {eval_fraction}")
    ref_ids: dict[str, str] | None = None
    for layer_id, triples in per_layer_data.items():
        mapping = {}
        for source_id, _, label in triples:
            if source_id in mapping:
                raise ValueError(f"layer {layer_id}: duplicate source_id {source_id!r}")
            mapping[source_id] = str(label)
        if ref_ids is None:
            ref_ids = mapping
        elif mapping != ref_ids:
            raise ValueError(f"layer {layer_id} covers different utterances or labels")
    train_ids, eval_ids = holdout_split(
        list(ref_ids), eval_fraction, derive_seed(config.seed, "layer-sweep-split")
    )
    records = []
    for layer_id in sorted(per_layer_data):
        by_id = {source_id: (rep, label) for source_id, rep, label in per_layer_data[layer_id]}
        train = [by_id[i] for i in train_ids]
        held = [by_id[i] for i in eval_ids]
        training = train_probe(train, config, kind, vocab=vocab)
        refs = [label for _, label in held]
        hyps = predict(training.model, [rep for rep, _ in held])
        records.append(LayerScore(layer_id, float(task_metric(refs, hyps)), metric_name))
    return LayerSweepResult(records)


def render_sweep_tsv(result: LayerSweepResult) -> str:
    lines = ["layer\tscore\tmetric"]
    for r in result.records:
        lines.append(f"{r.layer_id}\t{r.score!r}\t{r.metric}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AlignmentRecord:
    layer_id: int
    similarity: float
    speech_excluded: int
    text_excluded: int


def _drop_zero_rows(vectors: np.ndarray) -> tuple[np.ndarray, int]:
    norms = np.linalg.norm(vectors, axis=1)
    keep = norms > 0
    return vectors[keep], int((~keep).sum())


def alignment_similarity(
    speech_states: dict[int, np.ndarray],
    text_states: dict[int, np.ndarray],
) -> list[AlignmentRecord]:
    """Per layer: mean over speech vectors of the max cosine to any text vector.

    Zero vectors carry no direction, so they are dropped and counted in the
    record instead of poisoning the mean. Both sides must cover the same
    layer ids and share dimension within each layer.
    """
    if set(speech_states) != set(text_states):
        raise ValueError(
            f"layer sets differ: {sorted(speech_states)} vs {sorted(text_states)}"
        )
    if not speech_states:
        raise ValueError("no layers given")
    records = []
    for layer_id in sorted(speech_states):
        speech = np.asarray(speech_states[layer_id], dtype=np.float64)
        text = np.asarray(text_states[layer_id], dtype=np.float64)
        if speech.ndim != 2 or text.ndim != 2:
            raise ValueError(f"layer {layer_id}: states must be 2-D")
        if speech.shape[1] != text.shape[1]:
            raise ValueError(
                f"layer {layer_id}: dimension mismatch {speech.shape[1]} vs {text.shape[1]}"
            )
        if not (np.isfinite(speech).all() and np.isfinite(text).all()):
            raise DataValidationError(f"layer {layer_id}: non-finite state values")
        speech, s_dropped = _drop_zero_rows(speech)
        text, t_dropped = _drop_zero_rows(text)
        if len(speech) == 0 or len(text) == 0:
            raise ValueError(f"layer {layer_id}: no nonzero vectors left on one side")
        s_unit = speech / np.linalg.norm(speech, axis=1, keepdims=True)
        t_unit = text / np.linalg.norm(text, axis=1, keepdims=True)
        best = (s_unit @ t_unit.T).max(axis=1)
        records.append(
            AlignmentRecord(layer_id, float(best.mean()), s_dropped, t_dropped)
        )
    return records


def render_alignment_tsv(records: list[AlignmentRecord]) -> str:
    lines = ["layer\tsimilarity\tspeech_excluded\ttext_excluded"]
    for r in records:
        lines.append(f"{r.layer_id}\t{r.similarity!r}\t{r.speech_excluded}\t{r.text_excluded}")
    return "\n".join(lines) + "\n"


def save_probe(model: ProbeModel, directory: str | Path) -> None:
    """Write parameters as SRF1 matrices plus a JSON shape/class manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spec = {
        "kind": model.kind,
        "classes": model.classes,
        "params": {name: list(value.shape) for name, value in sorted(model.params.items())},
    }
    (directory / "probe.json").write_text(
        json.dumps(spec, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    for name, value in model.params.items():
        matrix = value if value.ndim == 2 else value[None, :]
        store_features(
            FeatureSequence(frames=matrix, frame_rate_hz=Fraction(1), source_id=name),
            directory / f"{name}.srf",
        )


def load_probe(directory: str | Path) -> ProbeModel:
    directory = Path(directory)
    spec = json.loads((directory / "probe.json").read_text(encoding="utf-8"))
    params = {}
    for name, shape in spec["params"].items():
        seq = load_features(directory / f"{name}.srf")
        arr = seq.frames.astype(np.float64)
        if len(shape) == 1:
            arr = arr[0]
        if list(arr.shape) != shape:
            raise DataValidationError(
                f"{name}: stored shape {list(arr.shape)} does not match manifest {shape}"
            )
        params[name] = arr
    return ProbeModel(kind=spec["kind"], params=params, classes=list(spec["classes"]))
