"""De-duplication and byte-pair encoding over cluster-id sequences.

The pipeline order is fixed: quantize -> deduplicate -> BPE. Merges are
learned per corpus but never cross utterance boundaries, and a pair must
occur at least twice to be merged. Pair-frequency ties break toward the
lower left id, then the lower right id, so training is deterministic.

Model file format "BPE1", UTF-8 text:

    BPE1 <base_vocab>
    <left> <right> <new>        (one line per merge, in merge order)
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from pathlib import Path

from .errors import CorruptionError, DataValidationError, FormatError, StageError
from .quantizer import TokenSequence

MIN_PAIR_FREQ = 2


@dataclass(eq=False)
class BpeModel:
    """Ordered merge list over a base vocabulary of cluster ids.

    Merge i rewrites (merges[i][0], merges[i][1]) to id base_vocab + i.
    `exhausted` is set when training stopped early because no pair occurred
    at least twice; it does not affect equality or the saved file.
    """

    merges: list[tuple[int, int]]
    base_vocab: int
    exhausted: bool = False
    merge_counts: list[int] | None = None

    def __post_init__(self) -> None:
        if self.base_vocab < 1:
            raise ValueError(f"base_vocab must be >= 1, got {self.base_vocab}")
        self.merges = [(int(a), int(b)) for a, b in self.merges]
        for idx, (a, b) in enumerate(self.merges):
            new_id = self.base_vocab + idx
            if not (0 <= a < new_id and 0 <= b < new_id):
                raise DataValidationError(
                    f"merge {idx} ({a},{b})->{new_id} references an id out of range"
                )
        self._expansions: dict[int, list[int]] = {}

    @property
    def vocab_size(self) -> int:
        return self.base_vocab + len(self.merges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BpeModel):
            return NotImplemented
        return self.merges == other.merges and self.base_vocab == other.base_vocab

    def expand(self, token_id: int) -> list[int]:
        """Base-id expansion of one (possibly meta) token."""
        if not 0 <= token_id < self.vocab_size:
            raise DataValidationError(f"id {token_id} outside vocab of {self.vocab_size}")
        if token_id < self.base_vocab:
            return [token_id]
        cached = self._expansions.get(token_id)
        if cached is None:
            a, b = self.merges[token_id - self.base_vocab]
            cached = self.expand(a) + self.expand(b)
            self._expansions[token_id] = cached
        return list(cached)


def deduplicate(tokens: TokenSequence) -> TokenSequence:
    """Collapse runs of equal adjacent ids to a single occurrence."""
    if tokens.stage != "raw":
        raise StageError(f"deduplicate expects stage 'raw', got {tokens.stage!r}")
    out: list[int] = []
    for i in tokens.ids:
        if not out or out[-1] != i:
            out.append(i)
    return TokenSequence(ids=out, stage="dedup", source_id=tokens.source_id)


def _check_base_ids(seqs: list[TokenSequence], base_vocab: int) -> None:
    for seq in seqs:
        for pos, i in enumerate(seq.ids):
            if i >= base_vocab:
                raise DataValidationError(
                    f"{seq.source_id or 'sequence'}: id {i} at position {pos} "
                    f">= base vocab {base_vocab}"
                )


def train_bpe(
    corpus: list[TokenSequence],
    target_vocab: int,
    base_vocab: int,
) -> BpeModel:
    """Greedy pair merging until target_vocab or no pair occurs twice.

    Counts are maintained incrementally (linked positions plus a lazy heap),
    which matches a full recount after every merge; the recount version lives
    in the tests as an oracle.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    for seq in corpus:
        if seq.stage != "dedup":
            raise StageError(f"train_bpe expects stage 'dedup', got {seq.stage!r}")
    if target_vocab <= base_vocab:
        raise ValueError(f"target_vocab {target_vocab} must exceed base_vocab {base_vocab}")
    _check_base_ids(corpus, base_vocab)

    # one flat symbol array with doubly linked neighbors; -1 marks a sequence
    # boundary (prv/nxt) or a dead slot (sym)
    sym: list[int] = []
    prv: list[int] = []
    nxt: list[int] = []
    for seq in corpus:
        start = len(sym)
        n = len(seq.ids)
        sym.extend(seq.ids)
        prv.extend(start + j - 1 if j > 0 else -1 for j in range(n))
        nxt.extend(start + j + 1 if j < n - 1 else -1 for j in range(n))

    positions: dict[tuple[int, int], set[int]] = {}
    for i in range(len(sym)):
        j = nxt[i]
        if j != -1:
            positions.setdefault((sym[i], sym[j]), set()).add(i)

    heap: list[tuple[int, int, int]] = [
        (-len(pos), a, b) for (a, b), pos in positions.items() if len(pos) >= MIN_PAIR_FREQ
    ]
    heapq.heapify(heap)

    def retire(pair: tuple[int, int], left: int) -> None:
        pos = positions.get(pair)
        if pos is not None:
            pos.discard(left)
            if not pos:
                del positions[pair]

    def enroll(pair: tuple[int, int], left: int) -> None:
        pos = positions.setdefault(pair, set())
        pos.add(left)
        heapq.heappush(heap, (-len(pos), pair[0], pair[1]))

    merges: list[tuple[int, int]] = []
    merge_counts: list[int] = []
    exhausted = False
    while base_vocab + len(merges) < target_vocab:
        pair = None
        while heap:
            negc, a, b = heapq.heappop(heap)
            live = positions.get((a, b))
            count = len(live) if live else 0
            if count != -negc:
                if count >= MIN_PAIR_FREQ:
                    heapq.heappush(heap, (-count, a, b))
                continue
            if count >= MIN_PAIR_FREQ:
                pair = (a, b)
                break
        if pair is None:
            exhausted = True
            break
        new_id = base_vocab + len(merges)
        merge_counts.append(len(positions[pair]))
        a, b = pair
        for i in sorted(positions[pair]):
            if sym[i] != a:
                continue
            j = nxt[i]
            if j == -1 or sym[j] != b:
                continue
            p, q = prv[i], nxt[j]
            retire(pair, i)
            if p != -1:
                retire((sym[p], a), p)
            if q != -1:
                retire((b, sym[q]), j)
            sym[i], sym[j] = new_id, -1
            nxt[i] = q
            if q != -1:
                prv[q] = i
                enroll((new_id, sym[q]), i)
            if p != -1:
                enroll((sym[p], new_id), p)
        merges.append(pair)
    return BpeModel(
        merges=merges,
        base_vocab=base_vocab,
        exhausted=exhausted,
        merge_counts=merge_counts,
    )


def _merge_once(ids: list[int], pair: tuple[int, int], new_id: int) -> list[int]:
    out: list[int] = []
    i = 0
    n = len(ids)
    while i < n:
        if i + 1 < n and ids[i] == pair[0] and ids[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(ids[i])
            i += 1
    return out


def apply_bpe(tokens: TokenSequence, model: BpeModel) -> TokenSequence:
    """Rewrite a dedup sequence with the model's merges, earliest merge first."""
    if tokens.stage != "dedup":
        raise StageError(f"apply_bpe expects stage 'dedup', got {tokens.stage!r}")
    _check_base_ids([tokens], model.base_vocab)
    ranks = {pair: idx for idx, pair in enumerate(model.merges)}
    ids = list(tokens.ids)
    while len(ids) >= 2:
        best = min(
            (ranks[p] for p in zip(ids, ids[1:]) if p in ranks),
            default=None,
        )
        if best is None:
            break
        ids = _merge_once(ids, model.merges[best], model.base_vocab + best)
    return TokenSequence(ids=ids, stage="bpe", source_id=tokens.source_id)


def decode_bpe(tokens: TokenSequence, model: BpeModel) -> TokenSequence:
    """Expand meta tokens back to base cluster ids (inverse of apply_bpe)."""
    if tokens.stage != "bpe":
        raise StageError(f"decode_bpe expects stage 'bpe', got {tokens.stage!r}")
    out: list[int] = []
    for i in tokens.ids:
        out.extend(model.expand(i))
    return TokenSequence(ids=out, stage="dedup", source_id=tokens.source_id)


def length_reduction_ratio(before: TokenSequence, after: TokenSequence) -> float:
    """|after| / |before|; how much shorter the stream got (1.0 = unchanged)."""
    if len(before) == 0:
        raise ValueError("before sequence is empty")
    if before.source_id and after.source_id and before.source_id != after.source_id:
        raise ValueError(
            f"sequences come from different sources: "
            f"{before.source_id!r} vs {after.source_id!r}"
        )
    return len(after) / len(before)


def save_bpe(model: BpeModel, path: str | Path) -> None:
    lines = [f"BPE1 {model.base_vocab}"]
    for idx, (a, b) in enumerate(model.merges):
        lines.append(f"{a} {b} {model.base_vocab + idx}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_bpe(path: str | Path) -> BpeModel:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("BPE1 "):
        raise FormatError(f"{path}: missing BPE1 header")
    try:
        base_vocab = int(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: bad BPE1 header {lines[0]!r}") from exc
    merges: list[tuple[int, int]] = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise CorruptionError(f"{path}:{lineno}: expected 'left right new'")
        try:
            a, b, new_id = (int(p) for p in parts)
        except ValueError as exc:
            raise CorruptionError(f"{path}:{lineno}: non-integer merge ids") from exc
        if new_id != base_vocab + len(merges):
            raise CorruptionError(
                f"{path}:{lineno}: new id {new_id}, expected {base_vocab + len(merges)}"
            )
        merges.append((a, b))
    try:
        return BpeModel(merges=merges, base_vocab=base_vocab)
    except DataValidationError as exc:
        raise CorruptionError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class PipelineResult:
    """All three stages of one utterance, kept together for reporting."""

    raw: TokenSequence
    dedup: TokenSequence
    bpe: TokenSequence | None = None

    @property
    def final(self) -> TokenSequence:
        return self.bpe if self.bpe is not None else self.dedup


def save_token_corpus(corpus: list[TokenSequence], path: str | Path) -> None:
    """One line per utterance: source_id TAB space-separated ids TAB stage."""
    lines = []
    for seq in corpus:
        if not seq.source_id or "\t" in seq.source_id or "\n" in seq.source_id:
            raise DataValidationError(f"unusable source_id {seq.source_id!r}")
        lines.append(f"{seq.source_id}\t{' '.join(str(i) for i in seq.ids)}\t{seq.stage}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_token_corpus(path: str | Path) -> list[TokenSequence]:
    path = Path(path)
    corpus = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CorruptionError(f"{path}:{lineno}: expected 3 tab-separated fields")
        source_id, id_text, stage = parts
        if source_id in seen:
            raise DataValidationError(f"{path}:{lineno}: duplicate source_id {source_id!r}")
        seen.add(source_id)
        try:
            ids = [int(tok) for tok in id_text.split()] if id_text.strip() else []
        except ValueError as exc:
            raise CorruptionError(f"{path}:{lineno}: non-integer token id") from exc
        try:
            corpus.append(TokenSequence(ids=ids, stage=stage, source_id=source_id))
        except (ValueError, DataValidationError) as exc:
            raise CorruptionError(f"{path}:{lineno}: {exc}") from exc
    return corpus
