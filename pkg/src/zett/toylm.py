"""A small causal transformer LM on nanograd.

Pre-LN blocks, learned absolute positions, tied or untied embeddings.
Every position is scored: a learned start vector feeds position 0, so
position i predicts token i from tokens < i. Embedding matrices can be
overridden at loss time, which is how predicted embeddings are swapped
in for tokenizer transfer; the inner ("psi") parameters stay frozen in
that case simply by not handing them to the optimizer.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import nanograd as ng
from .embio import FLAG_MATRIX, ROLE_INPUT, ROLE_OUTPUT, ROLE_TIED, load_checkpoint, save_checkpoint
from .errors import DataError, EmptyCorpus, IdOutOfRange, SequenceTooLong, TokenOutsideSubset
from .rng import stream
from .tokenizer.segment import encode


@dataclass
class LmConfig:
    layers: int = 2
    d_model: int = 64
    heads: int = 2
    ffn_dim: int = 256
    max_seq_len: int = 128
    tied_embeddings: bool = True
    vocab_size: int = 512

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise DataError("d_model must be divisible by heads")
        if self.layers < 0:  # 0 layers: degenerate but useful for FLOPs checks
            raise DataError("layers must be >= 0")
        if min(self.d_model, self.heads, self.ffn_dim,
               self.max_seq_len, self.vocab_size) < 1:
            raise DataError("all LmConfig dimensions must be positive")


class LmParams:
    """Embeddings plus inner (non-embedding) parameters.

    Tied mode keeps a single tensor for both embedding roles, so any
    update through one role is observed through the other.
    """

    def __init__(self, cfg: LmConfig, tensors: dict):
        self.cfg = cfg
        self.tensors = tensors

    @property
    def emb_in(self) -> ng.Tensor:
        return self.tensors["emb" if self.cfg.tied_embeddings else "emb_in"]

    @property
    def emb_out(self) -> ng.Tensor:
        return self.tensors["emb" if self.cfg.tied_embeddings else "emb_out"]

    def inner(self) -> dict:
        """The psi parameters: everything except the embedding matrices."""
        return {k: v for k, v in self.tensors.items() if not k.startswith("emb")}

    def save(self, path):
        flags = {}
        if self.cfg.tied_embeddings:
            flags["emb"] = ROLE_TIED
        else:
            flags["emb_in"] = ROLE_INPUT
            flags["emb_out"] = ROLE_OUTPUT
        save_checkpoint(path, self.tensors, {**flags})

    @classmethod
    def load(cls, path, cfg: LmConfig):
        arrays = load_checkpoint(path)
        expected = set(init_lm_params(cfg, np.random.default_rng(0)).tensors)
        if set(arrays) != expected:
            raise DataError(f"checkpoint names do not match config: {sorted(set(arrays) ^ expected)}")
        return cls(cfg, {k: ng.param(v) for k, v in arrays.items()})


def init_lm_params(cfg: LmConfig, rng) -> LmParams:
    d, f, v = cfg.d_model, cfg.ffn_dim, cfg.vocab_size
    sd = 0.02
    t = {}
    if cfg.tied_embeddings:
        t["emb"] = ng.param(rng.normal(0, sd, (v, d)))
    else:
        t["emb_in"] = ng.param(rng.normal(0, sd, (v, d)))
        t["emb_out"] = ng.param(rng.normal(0, sd, (v, d)))
    t["pos"] = ng.param(rng.normal(0, sd, (cfg.max_seq_len, d)))
    t["start"] = ng.param(rng.normal(0, sd, (d,)))
    proj_sd = sd / math.sqrt(2 * cfg.layers)
    for i in range(cfg.layers):
        p = f"h{i}."
        t[p + "ln1_g"] = ng.param(np.ones(d))
        t[p + "ln1_b"] = ng.param(np.zeros(d))
        t[p + "wq"] = ng.param(rng.normal(0, sd, (d, d)))
        t[p + "wk"] = ng.param(rng.normal(0, sd, (d, d)))
        t[p + "wv"] = ng.param(rng.normal(0, sd, (d, d)))
        t[p + "wo"] = ng.param(rng.normal(0, proj_sd, (d, d)))
        t[p + "bo"] = ng.param(np.zeros(d))
        t[p + "ln2_g"] = ng.param(np.ones(d))
        t[p + "ln2_b"] = ng.param(np.zeros(d))
        t[p + "w1"] = ng.param(rng.normal(0, sd, (d, f)))
        t[p + "b1"] = ng.param(np.zeros(f))
        t[p + "w2"] = ng.param(rng.normal(0, proj_sd, (f, d)))
        t[p + "b2"] = ng.param(np.zeros(d))
    t["lnf_g"] = ng.param(np.ones(d))
    t["lnf_b"] = ng.param(np.zeros(d))
    return LmParams(cfg, t)


def causal_mask(T: int) -> np.ndarray:
    return np.triu(np.full((T, T), -1e30), k=1)


def _attention(x, t, prefix, cfg, mask):
    B, T, d = x.data.shape
    h = cfg.heads
    hd = d // h
    q = x @ t[prefix + "wq"]
    k = x @ t[prefix + "wk"]
    v = x @ t[prefix + "wv"]

    def split(z):  # [B,T,d] -> [B,h,T,hd]
        return ng.transpose(ng.reshape(z, (B, T, h, hd)), (0, 2, 1, 3))

    q, k, v = split(q), split(k), split(v)
    att = ng.mul(q @ ng.transpose(k, (0, 1, 3, 2)), 1.0 / math.sqrt(hd))
    att = ng.add(att, ng.tensor(mask))
    a = ng.softmax(att, axis=-1)
    y = a @ v
    y = ng.reshape(ng.transpose(y, (0, 2, 1, 3)), (B, T, d))
    return ng.add(y @ t[prefix + "wo"], t[prefix + "bo"])


def lm_hidden(params: LmParams, ids: np.ndarray, emb_in: ng.Tensor | None = None) -> ng.Tensor:
    """Final hidden states [B,T,d] for predicting every position's token."""
    cfg = params.cfg
    ids = np.asarray(ids)
    B, T = ids.shape
    if T > cfg.max_seq_len:
        raise SequenceTooLong(f"{T} > max_seq_len {cfg.max_seq_len}")
    table = emb_in if emb_in is not None else params.emb_in
    if ids.min() < 0 or ids.max() >= table.data.shape[0]:
        raise IdOutOfRange(f"token id outside vocabulary of {table.data.shape[0]}")
    t = params.tensors
    tok = ng.gather(table, ids)
    start = ng.add(ng.tensor(np.zeros((B, 1, table.data.shape[1]))),
                   ng.reshape(t["start"], (1, 1, -1)))
    inp = ng.concat([start, tok[:, : T - 1, :]], axis=1) if T > 1 else start
    x = ng.add(inp, t["pos"][:T, :])
    mask = causal_mask(T)
    for i in range(cfg.layers):
        p = f"h{i}."
        a = _attention(ng.layer_norm(x, t[p + "ln1_g"], t[p + "ln1_b"]), t, p, cfg, mask)
        x = ng.add(x, a)
        m = ng.layer_norm(x, t[p + "ln2_g"], t[p + "ln2_b"])
        m = ng.add(ng.gelu(ng.add(m @ t[p + "w1"], t[p + "b1"])) @ t[p + "w2"], t[p + "b2"])
        x = ng.add(x, m)
    return ng.layer_norm(x, t["lnf_g"], t["lnf_b"])


def lm_loss(params: LmParams, ids, mask=None, emb_in=None, emb_out=None) -> ng.Tensor:
    """Mean next-token cross-entropy in nats over unmasked positions."""
    ids = np.asarray(ids)
    B, T = ids.shape
    x = lm_hidden(params, ids, emb_in=emb_in)
    out_table = emb_out if emb_out is not None else params.emb_out
    logits = x @ ng.transpose(out_table, (1, 0))
    flat_mask = None if mask is None else np.asarray(mask).reshape(-1)
    return ng.cross_entropy(
        ng.reshape(logits, (B * T, out_table.data.shape[0])), ids.reshape(-1), flat_mask
    )


def lm_loss_subset(params: LmParams, ids, subset_ids, mask=None, emb_in=None, emb_out=None) -> ng.Tensor:
    """Cross-entropy normalized over a token subset only.

    Every batch token must be in subset_ids; logits and labels live in
    the subset index space, so only subset embedding rows are needed.
    """
    ids = np.asarray(ids)
    subset_ids = np.asarray(subset_ids)
    B, T = ids.shape
    remap = -np.ones(int(subset_ids.max()) + 2, dtype=np.int64)
    remap[subset_ids] = np.arange(len(subset_ids))
    flat = ids.reshape(-1)
    if flat.max() >= len(remap) - 1 or np.any(remap[flat] < 0):
        raise TokenOutsideSubset("batch contains tokens outside the subset")
    labels = remap[flat]

    out_table = emb_out if emb_out is not None else params.emb_out
    if out_table.data.shape[0] == len(subset_ids):
        sub_out = out_table  # already subset-sized (e.g. predicted rows)
    else:
        sub_out = out_table[subset_ids]  # gather rows, grads flow to the table
    if emb_in is None:
        x = lm_hidden(params, ids)
    else:
        # emb_in may itself be subset-sized: remap input ids
        if emb_in.data.shape[0] == len(subset_ids):
            x = lm_hidden(params, labels.reshape(B, T), emb_in=emb_in)
        else:
            x = lm_hidden(params, ids, emb_in=emb_in)
    logits = x @ ng.transpose(sub_out, (1, 0))
    flat_mask = None if mask is None else np.asarray(mask).reshape(-1)
    return ng.cross_entropy(ng.reshape(logits, (B * T, len(subset_ids))), labels, flat_mask)


def make_batch(docs: list, seq_len: int, batch_size: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Sample documents into a padded (ids, mask) batch."""
    ids = np.zeros((batch_size, seq_len), dtype=np.int64)
    mask = np.zeros((batch_size, seq_len))
    for b in range(batch_size):
        doc = docs[int(rng.integers(len(docs)))]
        if len(doc) > seq_len:
            lo = int(rng.integers(len(doc) - seq_len + 1))
            doc = doc[lo : lo + seq_len]
        ids[b, : len(doc)] = doc
        mask[b, : len(doc)] = 1.0
    return ids, mask


def split_heldout(docs: list, every: int = 20) -> tuple[list, list]:
    train = [d for i, d in enumerate(docs) if i % every != 0]
    held = [d for i, d in enumerate(docs) if i % every == 0]
    return train, held


def eval_loss(params: LmParams, docs, seq_len: int, batch_size: int = 16) -> float:
    """Deterministic mean cross-entropy over documents (no grad)."""
    total, weight = 0.0, 0.0
    with ng.no_grad():
        for lo in range(0, len(docs), batch_size):
            chunk = docs[lo : lo + batch_size]
            ids = np.zeros((len(chunk), seq_len), dtype=np.int64)
            mask = np.zeros((len(chunk), seq_len))
            for b, doc in enumerate(chunk):
                doc = doc[:seq_len]
                ids[b, : len(doc)] = doc
                mask[b, : len(doc)] = 1.0
            loss = lm_loss(params, ids, mask)
            n = mask.sum()
            total += float(loss.data) * n
            weight += n
    return total / max(weight, 1.0)


@dataclass
class TrainResult:
    params: LmParams
    history: list
    heldout_loss: float


def train_lm(
    corpus_texts,
    tokenizer,
    cfg: LmConfig,
    steps: int,
    seed: int = 0,
    batch_size: int = 16,
    seq_len: int | None = None,
    peak_lr: float = 1e-3,
    warmup: int = 100,
    clip: float = 1.0,
) -> TrainResult:
    """Train from scratch on a corpus; returns params and loss history."""
    seq_len = seq_len or cfg.max_seq_len
    docs = []
    for text in corpus_texts:
        enc = encode(text, tokenizer)
        if len(enc) >= 2:
            docs.append(np.array(enc, dtype=np.int64))
    if not docs:
        raise EmptyCorpus("no encodable documents")
    train_docs, held_docs = split_heldout(docs)
    rng = stream(seed, "toylm.batches")
    params = init_lm_params(cfg, stream(seed, "toylm.init"))
    opt = ng.AdamW(params.tensors, lr=peak_lr, weight_decay=0.01)
    history = []
    for step in range(1, steps + 1):
        ids, mask = make_batch(train_docs, seq_len, batch_size, rng)
        opt.zero_grad()
        loss = lm_loss(params, ids, mask)
        ng.backward(loss)
        ng.clip_global_norm(params.tensors.values(), clip)
        lr = ng.lr_schedule(step, peak=peak_lr, total_steps=steps, warmup_steps=warmup,
                            floor=peak_lr / 10)
        opt.step(lr=lr)
        history.append(float(loss.data))
    held = eval_loss(params, held_docs or train_docs, seq_len)
    return TrainResult(params=params, history=history, heldout_loss=held)
