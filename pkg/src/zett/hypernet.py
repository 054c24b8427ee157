"""The embedding-prediction hypernetwork.

Each target token is decomposed with the byte-level source tokenizer,
embedded with the (frozen) source embeddings plus trainable rows for
the byte-completion extras, and run through a small bidirectional
post-LayerNorm transformer; the position-0 representation feeds one
prediction head per embedding role. The tokenization function of the
target is deliberately not an input: predictions depend only on the
token bytes, so one embedding serves any scoring of the same
vocabulary.

Training follows the rolling-queue sampler: a mimic warmup toward the
source embeddings, then the main loop minimizing LM cross-entropy under
predicted embeddings plus an auxiliary drift penalty on tokens shared
with the source vocabulary.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import nanograd as ng
from .convert import to_byte_level
from .embio import load_checkpoint, save_checkpoint
from .errors import DataError, ShapeMismatch
from .rng import stream
from .sampler import SamplerConfig, training_stream
from .tokenizer.segment import encode, segment_pretoken
from .tokenizer.types import TokenizerSpec, Vocabulary
from .toylm import LmParams, lm_loss_subset, make_batch


@dataclass
class HypernetConfig:
    d_model: int
    layers: int = 3
    ffn_dim: int = 0  # 0: use 2 * d_model
    heads: int = 0  # 0: use min(d_model / 64, 32), at least 1
    max_decomp_len: int = 7
    aux_weight: float = 0.5
    lang_embeddings: int = 0  # optional language-id vectors; 0 disables

    def __post_init__(self):
        if self.ffn_dim == 0:
            self.ffn_dim = 2 * self.d_model
        if self.heads == 0:
            self.heads = max(1, min(self.d_model // 64, 32))
        if self.d_model % self.heads != 0:
            raise DataError("d_model must be divisible by heads")
        if self.aux_weight < 0:
            raise DataError("aux_weight must be >= 0")


class Hypernet:
    """Config, parameters, byte-level source tokenizer, frozen source rows."""

    def __init__(self, cfg: HypernetConfig, tok_a_bl: TokenizerSpec, n_base: int,
                 emb_in_a: np.ndarray, emb_out_a: np.ndarray | None, params: dict):
        self.cfg = cfg
        self.tok_a = tok_a_bl
        self.n_base = n_base  # source vocab size before byte completion
        self.emb_in_a = ng.tensor(np.asarray(emb_in_a, dtype=np.float64))
        self.tied = emb_out_a is None
        self.emb_out_a = self.emb_in_a if self.tied else ng.tensor(np.asarray(emb_out_a, dtype=np.float64))
        self.params = params
        self._decomp_cache = {}

    @property
    def n_extra(self) -> int:
        return self.params["extra_emb"].data.shape[0]

    def trainable(self) -> dict:
        return self.params

    def save(self, path):
        save_checkpoint(path, self.params)

    def decompose(self, token: bytes) -> list[int]:
        """T_a(token) truncated to the first max_decomp_len pieces."""
        got = self._decomp_cache.get(token)
        if got is None:
            got = segment_pretoken(token, self.tok_a)[: self.cfg.max_decomp_len]
            self._decomp_cache[token] = got
        return got

    def decomp_matrix(self, tokens) -> tuple[np.ndarray, np.ndarray]:
        """(ids, mask) matrices [N, L] over the byte-level source vocab."""
        L = self.cfg.max_decomp_len
        ids = np.zeros((len(tokens), L), dtype=np.int64)
        mask = np.zeros((len(tokens), L))
        for i, tok in enumerate(tokens):
            d = self.decompose(tok)
            ids[i, : len(d)] = d
            mask[i, : len(d)] = 1.0
        return ids, mask

    def forward(self, tokens, lang_id: int | None = None):
        """Predict embedding rows for byte-string tokens.

        Returns (pred_in, pred_out) tensors [N, d]; for tied sources both
        are the same tensor. Per-token pure: a row depends only on its
        own token.
        """
        cfg = self.cfg
        t = self.params
        ids, mask = self.decomp_matrix(tokens)
        N, L = ids.shape
        table = ng.concat([self.emb_in_a, t["extra_emb"]], axis=0)
        x = ng.gather(table, ids)
        x = ng.mul(x, mask[:, :, None])  # zero padding rows (and their grads)
        x = ng.add(x, t["pos"][:L, :])
        if lang_id is not None:
            if cfg.lang_embeddings == 0:
                raise DataError("language embeddings are disabled")
            x = ng.add(x, ng.reshape(t["lang_emb"][lang_id], (1, 1, cfg.d_model)))
        att_bias = (1.0 - mask)[:, None, None, :] * -1e30
        h = cfg.heads
        hd = cfg.d_model // h
        for i in range(cfg.layers):
            p = f"h{i}."
            q = x @ t[p + "wq"]
            k = x @ t[p + "wk"]
            v = x @ t[p + "wv"]

            def split(z):
                return ng.transpose(ng.reshape(z, (N, L, h, hd)), (0, 2, 1, 3))

            att = ng.mul(split(q) @ ng.transpose(split(k), (0, 1, 3, 2)), 1.0 / math.sqrt(hd))
            att = ng.add(att, ng.tensor(att_bias))
            y = ng.softmax(att, axis=-1) @ split(v)
            y = ng.reshape(ng.transpose(y, (0, 2, 1, 3)), (N, L, cfg.d_model))
            y = ng.add(y @ t[p + "wo"], t[p + "bo"])
            x = ng.layer_norm(ng.add(x, y), t[p + "ln1_g"], t[p + "ln1_b"])  # post-LN
            m = ng.add(ng.gelu(ng.add(x @ t[p + "w1"], t[p + "b1"])) @ t[p + "w2"], t[p + "b2"])
            x = ng.layer_norm(ng.add(x, m), t[p + "ln2_g"], t[p + "ln2_b"])
        pooled = x[:, 0, :]
        pred_in = ng.add(pooled @ t["head_in"], t["head_in_b"])
        if self.tied:
            return pred_in, pred_in
        pred_out = ng.add(pooled @ t["head_out"], t["head_out_b"])
        return pred_in, pred_out


def init_hypernet(lm: LmParams, lm_tokenizer: TokenizerSpec, cfg: HypernetConfig | None = None,
                  seed: int = 0) -> Hypernet:
    """Byte-complete the LM tokenizer and initialize hypernet parameters."""
    tok_a_bl, n_extra = to_byte_level(lm_tokenizer)
    cfg = cfg or HypernetConfig(d_model=lm.cfg.d_model)
    if cfg.d_model != lm.cfg.d_model:
        raise ShapeMismatch("hypernet d_model must match the base LM")
    d, f = cfg.d_model, cfg.ffn_dim
    rng = stream(seed, "hypernet.init")
    sd = 0.02
    t = {"extra_emb": ng.param(rng.normal(0, sd, (n_extra, d))),
         "pos": ng.param(rng.normal(0, sd, (cfg.max_decomp_len, d)))}
    if cfg.lang_embeddings:
        t["lang_emb"] = ng.param(rng.normal(0, sd, (cfg.lang_embeddings, d)))
    proj_sd = sd / math.sqrt(2 * cfg.layers)
    for i in range(cfg.layers):
        p = f"h{i}."
        t[p + "wq"] = ng.param(rng.normal(0, sd, (d, d)))
        t[p + "wk"] = ng.param(rng.normal(0, sd, (d, d)))
        t[p + "wv"] = ng.param(rng.normal(0, sd, (d, d)))
        t[p + "wo"] = ng.param(rng.normal(0, proj_sd, (d, d)))
        t[p + "bo"] = ng.param(np.zeros(d))
        t[p + "ln1_g"] = ng.param(np.ones(d))
        t[p + "ln1_b"] = ng.param(np.zeros(d))
        t[p + "w1"] = ng.param(rng.normal(0, sd, (d, f)))
        t[p + "b1"] = ng.param(np.zeros(f))
        t[p + "w2"] = ng.param(rng.normal(0, proj_sd, (f, d)))
        t[p + "b2"] = ng.param(np.zeros(d))
        t[p + "ln2_g"] = ng.param(np.ones(d))
        t[p + "ln2_b"] = ng.param(np.zeros(d))
    t["head_in"] = ng.param(rng.normal(0, sd, (d, d)))
    t["head_in_b"] = ng.param(np.zeros(d))
    tied = lm.cfg.tied_embeddings
    if not tied:
        t["head_out"] = ng.param(rng.normal(0, sd, (d, d)))
        t["head_out_b"] = ng.param(np.zeros(d))
    emb_out = None if tied else lm.emb_out.data
    return Hypernet(cfg, tok_a_bl, len(lm_tokenizer.vocab), lm.emb_in.data, emb_out, t)


def load_hypernet(path, lm: LmParams, lm_tokenizer: TokenizerSpec,
                  cfg: HypernetConfig | None = None) -> Hypernet:
    hn = init_hypernet(lm, lm_tokenizer, cfg)
    arrays = load_checkpoint(path)
    if set(arrays) != set(hn.params):
        raise DataError(f"hypernet checkpoint mismatch: {sorted(set(arrays) ^ set(hn.params))}")
    for k, v in arrays.items():
        if hn.params[k].data.shape != v.shape:
            raise ShapeMismatch(f"{k}: {hn.params[k].data.shape} vs {v.shape}")
        hn.params[k] = ng.param(v)
    return hn


# ---------------------------------------------------------------------------
# losses


def warmup_loss(hn: Hypernet, token_ids: np.ndarray) -> ng.Tensor:
    """Mean row distance between predictions and source rows for V_a tokens.

    Summed over the input and output roles when the source is untied.
    """
    tokens = [hn.tok_a.vocab.tokens[i] for i in token_ids]
    pred_in, pred_out = hn.forward(tokens)
    target_in = ng.tensor(hn.emb_in_a.data[token_ids])
    loss = ng.l2_rows(pred_in, target_in)
    if not hn.tied:
        target_out = ng.tensor(hn.emb_out_a.data[token_ids])
        loss = ng.add(loss, ng.l2_rows(pred_out, target_out))
    return loss


def aux_loss(hn: Hypernet, tokens, pred_in, pred_out,
             target_in=None, target_out=None, target_rows=None) -> ng.Tensor:
    """Drift penalty on predicted rows of tokens shared with the source.

    Targets default to the source embedding rows (indexed by source id);
    continued training swaps in the zero-shot predictions, indexed by
    the target-vocabulary ids in `target_rows`. Returns 0 when the
    overlap is empty.
    """
    vocab_a = hn.tok_a.vocab
    rows_b, rows_a = [], []
    for i, tok in enumerate(tokens):
        j = vocab_a.index.get(tok)
        if j is not None and j < hn.n_base:
            rows_b.append(i)
            rows_a.append(j)
    if not rows_b:
        return ng.tensor(0.0)
    rows_b = np.array(rows_b)
    rows_a = np.array(rows_a)
    if target_in is None:
        tgt_in = hn.emb_in_a.data[rows_a]
    else:
        tgt_in = target_in[np.asarray(target_rows)[rows_b]]
    loss = ng.l2_rows(pred_in[rows_b, :], ng.tensor(tgt_in))
    if not hn.tied:
        if target_out is None:
            tgt_out = hn.emb_out_a.data[rows_a]
        else:
            tgt_out = target_out[np.asarray(target_rows)[rows_b]]
        loss = ng.add(loss, ng.l2_rows(pred_out[rows_b, :], ng.tensor(tgt_out)))
    return loss


def final_loss(hn: Hypernet, lm: LmParams, spec_b: TokenizerSpec, ids: np.ndarray,
               mask: np.ndarray, subset_ids: np.ndarray, alpha: float,
               aux_target_in=None, aux_target_out=None):
    """LM cross-entropy under predicted embeddings plus alpha * aux drift.

    `ids` are token ids under spec_b; `subset_ids` select the vocabulary
    slice scored by the loss (the subset-vocabulary trick; pass the full
    range for exact loss). Returns (total, main, aux) tensors.
    """
    tokens = [spec_b.vocab.tokens[i] for i in subset_ids]
    pred_in, pred_out = hn.forward(tokens)
    main = lm_loss_subset(lm, ids, subset_ids, mask, emb_in=pred_in, emb_out=pred_out)
    aux = aux_loss(hn, tokens, pred_in, pred_out, aux_target_in, aux_target_out,
                   target_rows=subset_ids)
    total = ng.add(main, ng.mul(aux, alpha)) if alpha else main
    return total, main, aux


def pick_subset(ids_in_batch: np.ndarray, vocab_size: int, subset_size: int, rng) -> np.ndarray:
    """Tokens occurring in the batch plus a uniform sample of the rest."""
    present = np.unique(ids_in_batch)
    if subset_size >= vocab_size:
        return np.arange(vocab_size)
    if len(present) >= subset_size:
        return present
    absent = np.setdiff1d(np.arange(vocab_size), present, assume_unique=True)
    extra = rng.choice(absent, size=subset_size - len(present), replace=False)
    return np.sort(np.concatenate([present, extra]))


def encode_batch(texts, spec: TokenizerSpec, seq_len: int) -> tuple[np.ndarray, np.ndarray]:
    ids = np.zeros((len(texts), seq_len), dtype=np.int64)
    mask = np.zeros((len(texts), seq_len))
    for b, text in enumerate(texts):
        enc = encode(text, spec)[:seq_len]
        ids[b, : len(enc)] = enc
        mask[b, : len(enc)] = 1.0
    return ids, mask


# ---------------------------------------------------------------------------
# training


@dataclass
class HypernetTrainResult:
    hypernet: Hypernet
    warmup_history: list = field(default_factory=list)
    main_history: list = field(default_factory=list)
    aux_history: list = field(default_factory=list)


def train_hypernetwork(
    corpus_texts,
    lm: LmParams,
    lm_tokenizer: TokenizerSpec,
    scfg: SamplerConfig,
    hcfg: HypernetConfig | None = None,
    steps: int = 3000,
    warmup_steps: int = 300,
    seed: int = 0,
    seq_len: int = 64,
    subset_size: int = 512,
    warmup_peak_lr: float = 3e-4,
    main_peak_lr: float = 6e-5,
    main_floor_lr: float = 6e-6,
    main_warmup_frac: float = 0.05,
    warmup_batch: int = 256,
    clip: float = 0.1,
    hypernet: Hypernet | None = None,
    log_every: int = 0,
) -> HypernetTrainResult:
    """Mimic-style warmup, then the sampled-tokenizer training loop."""
    hn = hypernet or init_hypernet(lm, lm_tokenizer, hcfg, seed=seed)
    res = HypernetTrainResult(hypernet=hn)
    opt = ng.AdamW(hn.trainable(), lr=warmup_peak_lr, weight_decay=0.01)
    vocab_rng = stream(seed, "hypernet.warmup")

    n_vocab_a = hn.n_base
    for step in range(1, warmup_steps + 1):
        batch = vocab_rng.choice(n_vocab_a, size=min(warmup_batch, n_vocab_a), replace=False)
        opt.zero_grad()
        loss = warmup_loss(hn, batch)
        ng.backward(loss)
        ng.clip_global_norm(hn.trainable().values(), clip)
        lr = ng.lr_schedule(step, peak=warmup_peak_lr, total_steps=warmup_steps,
                            warmup_steps=warmup_steps)
        opt.step(lr=lr)
        res.warmup_history.append(float(loss.data))
        if log_every and step % log_every == 0:
            print(f"warmup {step}: {float(loss.data):.4f}")

    opt = ng.AdamW(hn.trainable(), lr=main_peak_lr, weight_decay=0.01)
    subset_rng = stream(seed, "hypernet.subset")
    stream_it = training_stream(corpus_texts, scfg)
    main_warmup = max(1, int(main_warmup_frac * steps))
    for step in range(1, steps + 1):
        texts, model = next(stream_it)
        spec_b = TokenizerSpec("unigram", model, scfg.pretok,
                               byte_level=all(bytes([b]) in model.vocab for b in range(256)))
        ids, mask = encode_batch(texts, spec_b, seq_len)
        subset = pick_subset(ids[mask > 0], len(model.vocab), subset_size, subset_rng)
        opt.zero_grad()
        total, main, aux = final_loss(hn, lm, spec_b, ids, mask, subset,
                                      alpha=hn.cfg.aux_weight)
        ng.backward(total)
        ng.clip_global_norm(hn.trainable().values(), clip)
        lr = ng.lr_schedule(step, peak=main_peak_lr, total_steps=steps,
                            warmup_steps=main_warmup, floor=main_floor_lr)
        opt.step(lr=lr)
        res.main_history.append(float(main.data))
        res.aux_history.append(float(aux.data))
        if log_every and step % log_every == 0:
            print(f"main {step}: lm {float(main.data):.4f} aux {float(aux.data):.4f}")
    return res


def zett_transfer(lm: LmParams, hn: Hypernet, new_tok: TokenizerSpec,
                  chunk: int = 1024):
    """Predict embeddings for an arbitrary tokenizer, no gradient pass.

    Returns (emb_in, emb_out, converted_tok). The tokenizer is byte-
    level-completed first so the returned pair can encode anything.
    """
    tok_b, _ = to_byte_level(new_tok)
    tokens = tok_b.vocab.tokens
    d = hn.cfg.d_model
    out_in = np.empty((len(tokens), d))
    out_out = np.empty((len(tokens), d))
    with ng.no_grad():
        for lo in range(0, len(tokens), chunk):
            pred_in, pred_out = hn.forward(tokens[lo : lo + chunk])
            out_in[lo : lo + chunk] = pred_in.data
            out_out[lo : lo + chunk] = pred_out.data
    return out_in, out_out, tok_b


def continued_training(
    lm: LmParams,
    hn: Hypernet,
    target_tok: TokenizerSpec,
    corpus_texts,
    steps: int,
    lr: float = 3e-6,
    seed: int = 0,
    seq_len: int = 64,
    batch_size: int = 16,
    subset_size: int = 1024,
    clip: float = 0.1,
) -> tuple[LmParams, Hypernet]:
    """Joint (theta, psi) training on one fixed target tokenizer.

    Uses the subset-vocabulary trick and the zero-shot predictions as
    the auxiliary-loss target; constant learning rate.
    """
    z_in, z_out, tok_b = zett_transfer(lm, hn, target_tok)
    docs = []
    for text in corpus_texts:
        enc = encode(text, tok_b)
        if len(enc) >= 2:
            docs.append(np.array(enc, dtype=np.int64))
    rng = stream(seed, "continued.batches")
    subset_rng = stream(seed, "continued.subset")
    joint = dict(hn.trainable())
    joint.update({f"lm.{k}": v for k, v in lm.inner().items()})
    opt = ng.AdamW(joint, lr=lr, weight_decay=0.01)
    for _ in range(steps):
        ids, mask = make_batch(docs, seq_len, batch_size, rng)
        subset = pick_subset(ids[mask > 0], len(tok_b.vocab), subset_size, subset_rng)
        opt.zero_grad()
        total, main, aux = final_loss(hn, lm, tok_b, ids, mask, subset,
                                      alpha=hn.cfg.aux_weight,
                                      aux_target_in=z_in, aux_target_out=z_out)
        ng.backward(total)
        ng.clip_global_norm(joint.values(), clip)
        opt.step()
    return lm, hn
