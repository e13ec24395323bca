"""Joint POS tagging and graph-based dependency parsing.

The model follows the jPTDP family: word plus character-BiLSTM
embeddings feed a first BiLSTM whose states drive the tagger; the
second BiLSTM consumes the same token embeddings concatenated with a
POS embedding (predicted or gold, policy below) plus a learned root
vector at position 0, and its states drive a pairwise arc scorer and
an arc labeler. Decoding is the single-root maximum arborescence from
the decoder module.

Training minimizes, per sentence, the unweighted sum of
  tagging cross-entropy
  + structured hinge on trees (cost = 1 per wrong head)
  + labeling cross-entropy at gold heads,
with one Adam update per sentence. During training each token's POS
embedding comes from the gold tag with probability 0.5 and from the
current tagger argmax otherwise, so the parser sees its own tagging
noise; at inference only predicted tags exist. Rare words (training
frequency <= unk_threshold) are stochastically replaced by the unknown
token during training with probability alpha / (alpha + freq).
"""

from __future__ import annotations

import copy
import enum
import io
import json
import struct
import zlib
from collections.abc import Callable
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import neuralnet as nn
from .decoder import decode_tree
from .evaluation import evaluate
from .treebank import Sentence, Treebank, validate_sentence

__all__ = [
    "UNK",
    "Mode",
    "ModelConfig",
    "Vocab",
    "ParserModel",
    "TrainingLog",
    "EpochStats",
    "GridRow",
    "GridResult",
    "ModelFormatError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedFileError",
    "ChecksumMismatchError",
    "build_vocab",
    "initialize_model",
    "embed_tokens",
    "tag_sentence",
    "score_arcs",
    "label_arcs",
    "sentence_loss",
    "train",
    "grid_search",
    "save_model",
    "load_model",
    "predict",
]

UNK = "<unk>"

MAGIC = b"SLAVPARSE"
FORMAT_VERSION = 1


class Mode(str, enum.Enum):
    TRAIN = "train"
    INFER = "infer"


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters. Defaults are the reference configuration."""

    d_char: int = 50
    d_word: int = 100
    d_pos: int = 100
    n_bilstm_layers: int = 2
    d_lstm: int = 128
    d_mlp: int = 100
    epochs: int = 30
    seed: int = 1
    word_dropout_alpha: float = 0.25
    unk_threshold: int = 1

    def __post_init__(self):
        for name in ("d_char", "d_word", "d_pos", "d_lstm", "d_mlp"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_char % 2:
            raise ValueError("d_char must be even (split across char BiLSTM "
                             "directions)")
        if self.n_bilstm_layers < 2:
            raise ValueError("need at least 2 BiLSTM layers: one for tagging, "
                             "one for parsing")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.word_dropout_alpha < 0:
            raise ValueError("word_dropout_alpha must be non-negative")
        if self.unk_threshold < 0:
            raise ValueError("unk_threshold must be non-negative")


@dataclass
class Vocab:
    """Closed vocabularies built from the training section only.

    Index 0 of the word and character maps is the unknown symbol; every
    out-of-vocabulary item resolves there. The word frequency table
    drives stochastic UNK replacement during training.
    """

    words: list[str]
    chars: list[str]
    upos: list[str]
    deprels: list[str]
    word_freq: dict[str, int]

    def __post_init__(self):
        if not self.words or self.words[0] != UNK:
            raise ValueError(f"word list must start with {UNK!r}")
        if not self.chars or self.chars[0] != UNK:
            raise ValueError(f"char list must start with {UNK!r}")
        self._word_idx = {w: i for i, w in enumerate(self.words)}
        self._char_idx = {c: i for i, c in enumerate(self.chars)}
        self._upos_idx = {u: i for i, u in enumerate(self.upos)}
        self._deprel_idx = {d: i for i, d in enumerate(self.deprels)}

    def word_index(self, form: str) -> int:
        return self._word_idx.get(form, 0)

    def char_index(self, ch: str) -> int:
        return self._char_idx.get(ch, 0)

    def upos_index(self, tag: str) -> int:
        try:
            return self._upos_idx[tag]
        except KeyError:
            raise ValueError(f"UPOS tag {tag!r} not in the training "
                             f"inventory") from None

    def deprel_index(self, rel: str) -> int:
        try:
            return self._deprel_idx[rel]
        except KeyError:
            raise ValueError(f"deprel {rel!r} not in the training "
                             f"inventory") from None

    def __eq__(self, other):
        if not isinstance(other, Vocab):
            return NotImplemented
        return (self.words, self.chars, self.upos, self.deprels,
                self.word_freq) == (other.words, other.chars, other.upos,
                                    other.deprels, other.word_freq)


def build_vocab(train: Treebank, config: ModelConfig) -> Vocab:
    if not train.sentences:
        raise ValueError("cannot build a vocabulary from an empty treebank")
    freq: dict[str, int] = {}
    chars: set[str] = set()
    upos: set[str] = set()
    deprels: set[str] = set()
    for sent in train.sentences:
        for tok in sent.tokens:
            freq[tok.form] = freq.get(tok.form, 0) + 1
            chars.update(tok.form)
            upos.add(tok.upos)
            deprels.add(tok.deprel)
    words = [UNK] + sorted(set(freq) - {UNK})
    return Vocab(
        words=words,
        chars=[UNK] + sorted(chars - {UNK}),
        upos=sorted(upos),
        deprels=sorted(deprels),
        word_freq=freq,
    )


@dataclass
class ParserModel:
    config: ModelConfig
    vocab: Vocab
    params: nn.ParamStore


def _expected_shapes(config: ModelConfig, vocab: Vocab) -> dict[str, tuple]:
    """Every parameter name and shape, derived from config + vocab sizes."""
    d_half = config.d_char // 2
    d_tok = config.d_word + config.d_char
    d_parse_in = d_tok + config.d_pos
    shapes: dict[str, tuple] = {}
    shapes["word_emb"] = (len(vocab.words), config.d_word)
    shapes["char_emb"] = (len(vocab.chars), config.d_char)

    def lstm(name: str, d_in: int, d_h: int) -> None:
        shapes[f"{name}.w"] = (4 * d_h, d_in + d_h)
        shapes[f"{name}.b"] = (4 * d_h,)

    lstm("char_fwd", config.d_char, d_half)
    lstm("char_bwd", config.d_char, d_half)
    lstm("tag_fwd", d_tok, config.d_lstm)
    lstm("tag_bwd", d_tok, config.d_lstm)
    shapes["pos_emb"] = (len(vocab.upos), config.d_pos)
    shapes["root_vec"] = (1, d_parse_in)
    d_in = d_parse_in
    for layer in range(2, config.n_bilstm_layers + 1):
        base = "parse" if layer == 2 else f"parse{layer}"
        lstm(f"{base}_fwd", d_in, config.d_lstm)
        lstm(f"{base}_bwd", d_in, config.d_lstm)
        d_in = 2 * config.d_lstm
    d_state = 2 * config.d_lstm

    def mlp(name: str, d_in: int, d_out: int) -> None:
        shapes[f"{name}.w1"] = (config.d_mlp, d_in)
        shapes[f"{name}.b1"] = (config.d_mlp,)
        shapes[f"{name}.w2"] = (d_out, config.d_mlp)
        shapes[f"{name}.b2"] = (d_out,)

    mlp("tag_mlp", d_state, len(vocab.upos))
    shapes["arc_mlp.w1"] = (config.d_mlp, 2 * d_state)
    shapes["arc_mlp.b1"] = (config.d_mlp,)
    shapes["arc_mlp.w2"] = (config.d_mlp,)
    shapes["arc_mlp.b2"] = (1,)
    mlp("label_mlp", 2 * d_state, len(vocab.deprels))
    return shapes


def initialize_model(config: ModelConfig, vocab: Vocab,
                     rng: np.random.Generator | None = None) -> ParserModel:
    """Fresh parameters: Glorot-uniform matrices, zero biases, LSTM
    forget-gate biases at 1.0."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    store = nn.ParamStore()
    d_half = config.d_char // 2
    d_tok = config.d_word + config.d_char
    d_parse_in = d_tok + config.d_pos
    d_state = 2 * config.d_lstm

    def emb(name: str, rows: int, cols: int) -> None:
        store.add(name, nn.glorot_uniform(rng, (rows, cols), rows, cols))

    def lstm(name: str, d_in: int, d_h: int) -> None:
        cell = nn.LstmParams.create(rng, d_in, d_h)
        store.add(f"{name}.w", cell.w)
        store.add(f"{name}.b", cell.b)

    def mlp(name: str, d_in: int, d_out: int) -> None:
        m = nn.MlpParams.create(rng, d_in, config.d_mlp, d_out)
        store.add(f"{name}.w1", m.w1)
        store.add(f"{name}.b1", m.b1)
        store.add(f"{name}.w2", m.w2)
        store.add(f"{name}.b2", m.b2)

    emb("word_emb", len(vocab.words), config.d_word)
    emb("char_emb", len(vocab.chars), config.d_char)
    lstm("char_fwd", config.d_char, d_half)
    lstm("char_bwd", config.d_char, d_half)
    lstm("tag_fwd", d_tok, config.d_lstm)
    lstm("tag_bwd", d_tok, config.d_lstm)
    emb("pos_emb", len(vocab.upos), config.d_pos)
    store.add("root_vec",
              nn.glorot_uniform(rng, (1, d_parse_in), 1, d_parse_in))
    d_in = d_parse_in
    for layer in range(2, config.n_bilstm_layers + 1):
        base = "parse" if layer == 2 else f"parse{layer}"
        lstm(f"{base}_fwd", d_in, config.d_lstm)
        lstm(f"{base}_bwd", d_in, config.d_lstm)
        d_in = d_state
    mlp("tag_mlp", d_state, len(vocab.upos))
    store.add("arc_mlp.w1",
              nn.glorot_uniform(rng, (config.d_mlp, 2 * d_state),
                                2 * d_state, config.d_mlp))
    store.add("arc_mlp.b1", np.zeros(config.d_mlp))
    store.add("arc_mlp.w2",
              nn.glorot_uniform(rng, (config.d_mlp,), config.d_mlp, 1))
    store.add("arc_mlp.b2", np.zeros(1))
    mlp("label_mlp", 2 * d_state, len(vocab.deprels))
    return ParserModel(config, vocab, store)


# ---------------------------------------------------------------------------
# Forward passes. Every builder takes an optional tape; with tape=None the
# same code runs as pure inference.


def _embed_nodes(model: ParserModel, sentence: Sentence, tape: nn.Tape | None,
                 drop_rng: np.random.Generator | None) -> nn.Node:
    cfg, vocab, P = model.config, model.vocab, model.params
    tokens = sentence.tokens
    widx = np.array([vocab.word_index(t.form) for t in tokens], dtype=np.intp)
    if drop_rng is not None:
        for k, tok in enumerate(tokens):
            f = vocab.word_freq.get(tok.form, 0)
            if f <= cfg.unk_threshold:
                p = cfg.word_dropout_alpha / (cfg.word_dropout_alpha + f)
                if drop_rng.random() < p:
                    widx[k] = 0
    wemb = nn.lookup(tape, nn.use(P["word_emb"]), widx)

    char_table = nn.use(P["char_emb"])
    wf, bf = nn.use(P["char_fwd.w"]), nn.use(P["char_fwd.b"])
    wb, bb = nn.use(P["char_bwd.w"]), nn.use(P["char_bwd.b"])
    summaries = []
    for tok in tokens:
        cidx = np.array([vocab.char_index(c) for c in tok.form],
                        dtype=np.intp)
        ce = nn.lookup(tape, char_table, cidx)
        hf = nn.lstm_seq(tape, wf, bf, ce)
        hb = nn.lstm_seq(tape, wb, bb, ce, reverse=True)
        # final states of each direction: last forward row, first
        # (re-aligned) backward row
        summaries.append(nn.hstack(tape, [
            nn.row(tape, hf, len(cidx) - 1),
            nn.row(tape, hb, 0),
        ]))
    cemb = nn.vcat(tape, summaries)
    return nn.hstack(tape, [wemb, cemb])


def _tag_states(model: ParserModel, emb: nn.Node,
                tape: nn.Tape | None) -> nn.Node:
    P = model.params
    hf = nn.lstm_seq(tape, nn.use(P["tag_fwd.w"]), nn.use(P["tag_fwd.b"]),
                     emb)
    hb = nn.lstm_seq(tape, nn.use(P["tag_bwd.w"]), nn.use(P["tag_bwd.b"]),
                     emb, reverse=True)
    return nn.hstack(tape, [hf, hb])


def _tag_scores(model: ParserModel, states: nn.Node,
                tape: nn.Tape | None) -> nn.Node:
    P = model.params
    hid = nn.tanh(tape, nn.affine(tape, states, nn.use(P["tag_mlp.w1"]),
                                  nn.use(P["tag_mlp.b1"])))
    return nn.affine(tape, hid, nn.use(P["tag_mlp.w2"]),
                     nn.use(P["tag_mlp.b2"]))


def _parse_states(model: ParserModel, emb: nn.Node, tags: np.ndarray,
                  tape: nn.Tape | None) -> nn.Node:
    """Encoder states over positions 0..n (0 is the root vector)."""
    cfg, P = model.config, model.params
    pos = nn.lookup(tape, nn.use(P["pos_emb"]),
                    np.asarray(tags, dtype=np.intp))
    seq = nn.hstack(tape, [emb, pos])
    seq = nn.prepend_row(tape, nn.use(P["root_vec"]), seq)
    for layer in range(2, cfg.n_bilstm_layers + 1):
        base = "parse" if layer == 2 else f"parse{layer}"
        hf = nn.lstm_seq(tape, nn.use(P[f"{base}_fwd.w"]),
                         nn.use(P[f"{base}_fwd.b"]), seq)
        hb = nn.lstm_seq(tape, nn.use(P[f"{base}_bwd.w"]),
                         nn.use(P[f"{base}_bwd.b"]), seq, reverse=True)
        seq = nn.hstack(tape, [hf, hb])
    return seq


def _arc_scores(model: ParserModel, states: nn.Node,
                tape: nn.Tape | None) -> nn.Node:
    P = model.params
    return nn.pairwise_arc_scores(
        tape, states, nn.use(P["arc_mlp.w1"]), nn.use(P["arc_mlp.b1"]),
        nn.use(P["arc_mlp.w2"]), nn.use(P["arc_mlp.b2"]))


def _label_scores(model: ParserModel, states: nn.Node, heads: np.ndarray,
                  tape: nn.Tape | None) -> nn.Node:
    P = model.params
    n = states.data.shape[0] - 1
    head_states = nn.gather_rows(tape, states,
                                 np.asarray(heads, dtype=np.intp))
    dep_states = nn.gather_rows(tape, states, np.arange(1, n + 1))
    pair = nn.hstack(tape, [head_states, dep_states])
    hid = nn.tanh(tape, nn.affine(tape, pair, nn.use(P["label_mlp.w1"]),
                                  nn.use(P["label_mlp.b1"])))
    return nn.affine(tape, hid, nn.use(P["label_mlp.w2"]),
                     nn.use(P["label_mlp.b2"]))


# ---------------------------------------------------------------------------
# Public inference API.


def embed_tokens(model: ParserModel, sentence: Sentence,
                 mode: Mode = Mode.INFER,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-token vectors, shape (n, d_word + d_char).

    TRAIN mode applies stochastic UNK replacement and therefore needs
    an rng; INFER mode is deterministic.
    """
    mode = Mode(mode)
    if mode is Mode.TRAIN and rng is None:
        raise ValueError("TRAIN mode needs an rng for word dropout")
    drop_rng = rng if mode is Mode.TRAIN else None
    return _embed_nodes(model, sentence, None, drop_rng).data


def tag_sentence(model: ParserModel, sentence: Sentence,
                 mode: Mode = Mode.INFER,
                 rng: np.random.Generator | None = None,
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Predicted UPOS indices and the raw tag score rows."""
    mode = Mode(mode)
    if mode is Mode.TRAIN and rng is None:
        raise ValueError("TRAIN mode needs an rng for word dropout")
    drop_rng = rng if mode is Mode.TRAIN else None
    emb = _embed_nodes(model, sentence, None, drop_rng)
    scores = _tag_scores(model, _tag_states(model, emb, None), None)
    return scores.data.argmax(axis=1), scores.data


def score_arcs(model: ParserModel, sentence: Sentence,
               tags: np.ndarray) -> np.ndarray:
    """Arc score matrix, shape (n+1, n+1); entry (h, d) scores h -> d."""
    tags = np.asarray(tags)
    if len(tags) != len(sentence.tokens):
        raise ValueError(f"got {len(tags)} tags for {len(sentence.tokens)} "
                         f"tokens")
    emb = _embed_nodes(model, sentence, None, None)
    states = _parse_states(model, emb, tags, None)
    return _arc_scores(model, states, None).data


def label_arcs(model: ParserModel, sentence: Sentence, tags: np.ndarray,
               heads: np.ndarray) -> np.ndarray:
    """Deprel index per dependent, argmax with lowest-index ties."""
    emb = _embed_nodes(model, sentence, None, None)
    states = _parse_states(model, emb, np.asarray(tags), None)
    scores = _label_scores(model, states, heads, None)
    return scores.data.argmax(axis=1)


def predict(model: ParserModel, tb: Treebank) -> Treebank:
    """Copy of the input with UPOS, HEAD, and DEPREL replaced.

    Everything else (lemmas, feats, misc, comments, multiword ranges)
    passes through verbatim. Sentences are independent given the frozen
    parameters, so processing order cannot affect any output.
    """
    out = []
    for sent in tb.sentences:
        tags, _ = tag_sentence(model, sent)
        arc = score_arcs(model, sent, tags)
        heads = decode_tree(arc)
        labels = label_arcs(model, sent, tags, heads)
        new_sent = copy.deepcopy(sent)
        for k, tok in enumerate(new_sent.tokens):
            tok.upos = model.vocab.upos[tags[k]]
            tok.head = int(heads[k])
            tok.deprel = model.vocab.deprels[labels[k]]
        out.append(new_sent)
    return Treebank(sentences=out)


# ---------------------------------------------------------------------------
# Training.


def sentence_loss(model: ParserModel, sentence: Sentence,
                  tape: nn.Tape | None = None,
                  rng: np.random.Generator | None = None) -> nn.Node:
    """Joint loss: tag cross-entropy + tree hinge + label cross-entropy.

    With rng=None the computation is fully deterministic: no word
    dropout and gold tags feed the parser. With an rng, dropout applies
    and each token's parser tag is gold or predicted with equal
    probability.
    """
    problems = [v for v in validate_sentence(sentence)
                if v.severity == "error"]
    if problems:
        raise ValueError(f"gold tree invalid: {problems[0].message}")
    vocab = model.vocab
    tokens = sentence.tokens
    n = len(tokens)
    gold_tags = np.array([vocab.upos_index(t.upos) for t in tokens],
                         dtype=np.intp)
    gold_deprels = np.array([vocab.deprel_index(t.deprel) for t in tokens],
                            dtype=np.intp)
    gold_heads = np.array([t.head for t in tokens], dtype=np.intp)

    emb = _embed_nodes(model, sentence, tape, rng)
    tag_scores = _tag_scores(model, _tag_states(model, emb, tape), tape)
    tag_loss = nn.softmax_xent(tape, tag_scores, gold_tags)

    if rng is None:
        fed_tags = gold_tags
    else:
        predicted = tag_scores.data.argmax(axis=1)
        fed_tags = np.where(rng.random(n) < 0.5, gold_tags, predicted)
    states = _parse_states(model, emb, fed_tags, tape)

    arc = _arc_scores(model, states, tape)
    augmented = arc.data.copy()
    deps = np.arange(1, n + 1)
    augmented[:, deps] += 1.0
    augmented[gold_heads, deps] -= 1.0
    pred_heads = decode_tree(augmented)
    hinge = nn.hinge_on_trees(tape, arc, pred_heads, gold_heads)

    label_scores = _label_scores(model, states, gold_heads, tape)
    label_loss = nn.softmax_xent(tape, label_scores, gold_deprels)
    return nn.add_scalars(tape, [tag_loss, hinge, label_loss])


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_train_loss: float
    dev_uas: float | None
    dev_las: float | None
    dev_upos: float | None


@dataclass
class TrainingLog:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0


def _snapshot(store: nn.ParamStore) -> dict[str, np.ndarray]:
    return {p.name: p.data.copy() for p in store}


def _restore(store: nn.ParamStore, snap: dict[str, np.ndarray]) -> None:
    for p in store:
        np.copyto(p.data, snap[p.name])


def train(config: ModelConfig, train_tb: Treebank,
          dev_tb: Treebank,
          on_epoch: Callable[[EpochStats], None] | None = None,
          ) -> tuple[ParserModel, TrainingLog]:
    """Train from scratch; returns the best-dev-LAS snapshot.

    One Adam update per sentence, sentence order reshuffled each epoch.
    Dev scores are computed after every epoch; the snapshot with the
    highest dev LAS wins, earlier epoch on ties. An empty dev set skips
    scoring and the final epoch wins. ``on_epoch`` is called with each
    epoch's stats as it completes, for progress reporting.
    """
    if not train_tb.sentences:
        raise ValueError("training treebank is empty")
    if config.epochs == 0:
        raise ValueError("epochs must be at least 1 to train")
    vocab = build_vocab(train_tb, config)
    rng = np.random.default_rng(config.seed)
    model = initialize_model(config, vocab, rng)
    store = model.params
    log = TrainingLog()
    has_dev = bool(dev_tb.sentences)
    best_las = float("-inf")
    best_snap: dict[str, np.ndarray] | None = None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_tb.sentences))
        total_loss = 0.0
        for si in order:
            tape = nn.Tape()
            store.zero_grads()
            loss = sentence_loss(model, train_tb.sentences[si], tape, rng)
            total_loss += float(loss.data)
            nn.backward(loss, tape)
            store.check_finite()
            nn.adam_update(store, store.grads())
        mean_loss = total_loss / len(train_tb.sentences)
        if has_dev:
            res = evaluate(dev_tb, predict(model, dev_tb))
            log.epochs.append(EpochStats(epoch, mean_loss, res.uas, res.las,
                                         res.upos_acc))
            if res.las > best_las:
                best_las = res.las
                best_snap = _snapshot(store)
                log.best_epoch = epoch
        else:
            log.epochs.append(EpochStats(epoch, mean_loss, None, None, None))
            log.best_epoch = epoch
        if on_epoch is not None:
            on_epoch(log.epochs[-1])
    if best_snap is not None:
        _restore(store, best_snap)
    return model, log


@dataclass(frozen=True)
class GridRow:
    d_lstm: int
    d_mlp: int
    dev_las: float
    dev_uas: float
    dev_upos: float
    n_params: int
    best_epoch: int


@dataclass
class GridResult:
    rows: list[GridRow]
    best_model: ParserModel
    best_log: TrainingLog

    def format_table(self) -> str:
        lines = [f"{'d_lstm':>7} {'d_mlp':>6} {'LAS':>7} {'UAS':>7} "
                 f"{'UPOS':>7} {'params':>10}"]
        for r in self.rows:
            lines.append(f"{r.d_lstm:>7} {r.d_mlp:>6} {r.dev_las:>7.2f} "
                         f"{r.dev_uas:>7.2f} {r.dev_upos:>7.2f} "
                         f"{r.n_params:>10}")
        return "\n".join(lines)


def grid_search(base_config: ModelConfig, train_tb: Treebank,
                dev_tb: Treebank,
                lstm_grid: tuple[int, ...] = (128, 256),
                mlp_grid: tuple[int, ...] = (100, 200, 300)) -> GridResult:
    """Train every (d_lstm, d_mlp) combination with identical seed/data.

    Rows are ranked by dev LAS descending, then dev UAS descending,
    then smaller model (fewer parameter entries).
    """
    if not lstm_grid or not mlp_grid:
        raise ValueError("grids must be non-empty")
    entries = []
    for d_lstm in sorted(set(lstm_grid)):
        for d_mlp in sorted(set(mlp_grid)):
            cfg = replace(base_config, d_lstm=d_lstm, d_mlp=d_mlp)
            model, tlog = train(cfg, train_tb, dev_tb)
            res = evaluate(dev_tb, predict(model, dev_tb))
            row = GridRow(d_lstm, d_mlp, res.las, res.uas, res.upos_acc,
                          model.params.n_entries(), tlog.best_epoch)
            entries.append((row, model, tlog))
    entries.sort(key=lambda e: (-e[0].dev_las, -e[0].dev_uas,
                                e[0].n_params))
    rows = [e[0] for e in entries]
    return GridResult(rows=rows, best_model=entries[0][1],
                      best_log=entries[0][2])


# ---------------------------------------------------------------------------
# Serialization. Container layout, all little-endian:
#   magic "SLAVPARSE" | u32 format version | u64 payload length |
#   u32 config JSON length + bytes | u32 vocab JSON length + bytes |
#   u32 parameter count | per parameter:
#     u16 name length + name bytes | u8 ndim | u64 * ndim dims |
#     float64 row-major data
#   | u32 CRC32 of everything before it
# The payload length covers magic through the last parameter byte, so
# truncation is detectable independently of the checksum.


class ModelFormatError(Exception):
    """The file is not a readable model container."""


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedFileError(ModelFormatError):
    pass


class ChecksumMismatchError(ModelFormatError):
    pass


def _vocab_payload(vocab: Vocab) -> dict:
    return {
        "words": vocab.words,
        "chars": vocab.chars,
        "upos": vocab.upos,
        "deprels": vocab.deprels,
        "word_freq": vocab.word_freq,
    }


def save_model(model: ParserModel, path: str) -> None:
    body = io.BytesIO()
    body.write(MAGIC)
    body.write(struct.pack("<I", FORMAT_VERSION))
    length_pos = body.tell()
    body.write(struct.pack("<Q", 0))  # payload length, patched below
    for payload in (asdict(model.config), _vocab_payload(model.vocab)):
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        body.write(struct.pack("<I", len(blob)))
        body.write(blob)
    names = sorted(model.params.names())
    body.write(struct.pack("<I", len(names)))
    for name in names:
        arr = model.params[name].data
        nb = name.encode("utf-8")
        body.write(struct.pack("<H", len(nb)))
        body.write(nb)
        body.write(struct.pack("<B", arr.ndim))
        body.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        body.write(arr.astype("<f8", copy=False).tobytes(order="C"))
    payload = bytearray(body.getvalue())
    payload[length_pos:length_pos + 8] = struct.pack("<Q", len(payload))
    payload = bytes(payload)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


class _Cursor:
    def __init__(self, data: bytes, start: int):
        self.data = data
        self.pos = start

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            raise TruncatedFileError(
                f"file ends {self.pos + k - len(self.data)} bytes early")
        out = self.data[self.pos:self.pos + k]
        self.pos += k
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_model(path: str) -> ParserModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(
            f"not a model file: expected the {MAGIC.decode()} header")
    if len(data) < len(MAGIC) + 12:
        raise TruncatedFileError("file ends inside the fixed header")
    version = struct.unpack_from("<I", data, len(MAGIC))[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"format version {version}, this reader handles "
            f"{FORMAT_VERSION}")
    payload_len = struct.unpack_from("<Q", data, len(MAGIC) + 4)[0]
    if len(data) < payload_len + 4:
        raise TruncatedFileError(
            f"payload declares {payload_len} bytes plus checksum, file has "
            f"{len(data)}")
    stored_crc = struct.unpack_from("<I", data, payload_len)[0]
    actual_crc = zlib.crc32(data[:payload_len])
    if stored_crc != actual_crc:
        raise ChecksumMismatchError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed "
            f"{actual_crc:#010x}")

    cur = _Cursor(data[:payload_len], len(MAGIC) + 12)
    config_blob = cur.take(cur.u32())
    vocab_blob = cur.take(cur.u32())
    try:
        config = ModelConfig(**json.loads(config_blob))
        vocab = Vocab(**json.loads(vocab_blob))
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad config/vocab block: {exc}") from exc
    store = nn.ParamStore()
    n_params = cur.u32()
    for _ in range(n_params):
        name = cur.take(cur.u16()).decode("utf-8")
        ndim = cur.take(1)[0]
        shape = struct.unpack(f"<{ndim}Q", cur.take(8 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        raw = cur.take(8 * count)
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        store.add(name, arr)
    expected = _expected_shapes(config, vocab)
    found = set(store.names())
    if found != set(expected):
        missing = sorted(set(expected) - found)
        extra = sorted(found - set(expected))
        raise ModelFormatError(
            f"parameter set mismatch: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if store[name].data.shape != shape:
            raise ModelFormatError(
                f"parameter {name} has shape {store[name].data.shape}, "
                f"expected {shape}")
    return ParserModel(config, vocab, store)
