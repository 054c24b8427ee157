"""Unified command line: tokenizer algebra, training, transfer, eval.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
ZETT_THREADS caps BLAS parallelism (must be set before numpy loads,
which is why the env handling sits above the heavy imports).
"""

import os

if "ZETT_THREADS" in os.environ:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, os.environ["ZETT_THREADS"])

import argparse
import json
import sys

import numpy as np

from . import config as cfgmod
from . import embio
from .corpus import load_corpus
from .errors import DataError, NumericError, ZettError


def _load_tokenizer_any(path):
    from .tokenizer import io as tokio

    with open(path, encoding="utf-8") as f:
        head = json.load(f)
    if isinstance(head, dict) and "model" in head and "kind" not in head:
        return tokio.load_community_tokenizer(path)
    return tokio.load_tokenizer(path)


def cmd_convert_byte_level(args):
    from .convert import to_byte_level
    from .tokenizer.io import save_tokenizer

    spec = _load_tokenizer_any(args.infile)
    out, extra = to_byte_level(spec)
    save_tokenizer(out, args.out)
    cfgmod.write_manifest(args.out, seed=0, config={"cmd": "convert-byte-level"},
                          outputs=[args.out])
    print(f"byte-level tokenizer written to {args.out} (extra tokens: {extra})")
    return 0


def cmd_unigramify(args):
    from .convert import unigramify
    from .tokenizer.io import save_tokenizer

    spec = _load_tokenizer_any(args.infile)
    corpus = load_corpus(args.corpus)
    result, report = unigramify(spec, corpus, top_n=args.top_n, cap=args.cap,
                                backend=args.backend, subgrad_iters=args.iters)
    save_tokenizer(result, args.out)
    report_obj = {
        "residual_loss": report.residual_loss,
        "preserved": report.preserved,
        "skipped": report.skipped,
    }
    if args.report:
        with open(args.report, "w", encoding="ascii") as f:
            json.dump(report_obj, f)
    cfgmod.write_manifest(args.out, seed=0,
                          config={"cmd": "unigramify", "top_n": args.top_n, "cap": args.cap},
                          outputs=[args.out] + ([args.report] if args.report else []))
    print(json.dumps(report_obj))
    return 0


def cmd_sample(args):
    from .sampler import SamplerConfig, training_stream
    from .tokenizer.io import save_tokenizer
    from .tokenizer.types import TokenizerSpec

    corpus = load_corpus(args.corpus)
    cfg = SamplerConfig(pool_size=args.pool, batch_size=args.batch,
                        max_token_len=args.max_token_len, vocab_size=args.k,
                        noise_mu=args.mu, noise_sigma=args.sigma, seed=args.seed)
    _, model = next(training_stream(corpus, cfg))
    byte_complete = all(bytes([b]) in model.vocab for b in range(256))
    spec = TokenizerSpec("unigram", model, cfg.pretok, byte_level=byte_complete)
    save_tokenizer(spec, args.out)
    cfgmod.write_manifest(args.out, seed=args.seed,
                          config={"cmd": "sample", "k": args.k, "mu": args.mu,
                                  "sigma": args.sigma, "pool": args.pool,
                                  "batch": args.batch,
                                  "max_token_len": args.max_token_len},
                          outputs=[args.out])
    print(f"sampled tokenizer ({len(model.vocab)} tokens) written to {args.out}")
    return 0


def _load_lm(args):
    from .toylm import LmParams

    lm_cfg = cfgmod.lm_config_from(cfgmod.load_json(args.lm_config).get("lm",
                                   cfgmod.load_json(args.lm_config)))
    return LmParams.load(args.lm, lm_cfg), lm_cfg


def cmd_train_lm(args):
    from .toylm import train_lm

    obj = cfgmod.load_json(args.config)
    lm_cfg = cfgmod.lm_config_from(cfgmod.section(obj, "lm"))
    train = cfgmod.train_section(obj, cfgmod.TRAIN_LM_DEFAULTS)
    corpus = load_corpus(args.corpus)
    tok = _load_tokenizer_any(args.tokenizer)
    res = train_lm(corpus, tok, lm_cfg, steps=train["steps"], seed=args.seed,
                   batch_size=train["batch_size"], seq_len=train["seq_len"],
                   peak_lr=train["peak_lr"], warmup=train["warmup"], clip=train["clip"])
    res.params.save(args.out)
    cfgmod.write_manifest(args.out, seed=args.seed, config=obj, outputs=[args.out])
    print(f"heldout loss {res.heldout_loss:.4f}; checkpoint written to {args.out}")
    return 0


def cmd_train_hypernet(args):
    from .hypernet import train_hypernetwork
    from .toylm import LmParams

    lm, lm_cfg = _load_lm(args)
    obj = cfgmod.load_json(args.config)
    hn_cfg = cfgmod.hypernet_config_from(
        cfgmod.section(obj, "hypernet", required=False), d_model=lm_cfg.d_model)
    s_cfg = cfgmod.sampler_config_from(cfgmod.section(obj, "sampler"), seed=args.seed)
    train = cfgmod.train_section(obj, cfgmod.TRAIN_HN_DEFAULTS)
    corpus = load_corpus(args.corpus)
    tok = _load_tokenizer_any(args.tokenizer)
    res = train_hypernetwork(
        corpus, lm, tok, s_cfg, hn_cfg, steps=train["steps"],
        warmup_steps=train["warmup_steps"], seed=args.seed, seq_len=train["seq_len"],
        subset_size=train["subset_size"], warmup_peak_lr=train["warmup_peak_lr"],
        main_peak_lr=train["main_peak_lr"], main_floor_lr=train["main_floor_lr"],
        main_warmup_frac=train["main_warmup_frac"], warmup_batch=train["warmup_batch"],
        clip=train["clip"], log_every=args.log_every)
    res.hypernet.save(args.out)
    cfgmod.write_manifest(args.out, seed=args.seed, config=obj, outputs=[args.out])
    tail = np.mean(res.main_history[-50:]) if res.main_history else float("nan")
    print(f"final main loss (50-step mean) {tail:.4f}; checkpoint written to {args.out}")
    return 0


def cmd_transfer(args):
    from .embio import ROLE_INPUT, ROLE_OUTPUT, ROLE_TIED, save_embeddings
    from .rng import stream
    from .transfer import train_aux_embeddings, transfer_focus, transfer_fvt, transfer_lexical

    lm, lm_cfg = _load_lm(args)
    tok_a = _load_tokenizer_any(args.tokenizer_a)
    tok_b = _load_tokenizer_any(args.tokenizer)
    outputs = []

    if args.method == "hypernet":
        from .hypernet import load_hypernet, zett_transfer
        from .transfer import embedding_compatibility

        hn_cfg = None
        if args.hypernet_config:
            hn_cfg = cfgmod.hypernet_config_from(
                cfgmod.section(cfgmod.load_json(args.hypernet_config), "hypernet",
                               required=False), d_model=lm_cfg.d_model)
        hn = load_hypernet(args.hypernet, lm, tok_a, hn_cfg)
        emb_in, emb_out, _ = zett_transfer(lm, hn, tok_b)
        if args.lm_ft:
            from .toylm import LmParams

            ft = LmParams.load(args.lm_ft, lm_cfg)
            rc, mc = embedding_compatibility(lm.emb_in.data, ft.emb_in.data)
            print(json.dumps({"rowwise_cosine": rc, "mean_row_cosine": mc}))
    else:
        from .convert import to_byte_level

        tok_a_bl, _ = to_byte_level(tok_a)
        emb_a = lm.emb_in.data
        if emb_a.shape[0] != len(tok_a_bl.vocab):
            emb_a = emb_a[: len(tok_a.vocab)]
            tok_a_bl = tok_a  # fall back: use the uncompleted source
        if args.method == "lexical":
            emb_in = transfer_lexical(lm.emb_in.data, tok_a.vocab, tok_b.vocab,
                                      stream(args.seed, "transfer.lexical"))
            emb_out = emb_in if lm_cfg.tied_embeddings else transfer_lexical(
                lm.emb_out.data, tok_a.vocab, tok_b.vocab, stream(args.seed, "transfer.lexical.out"))
        elif args.method == "fvt":
            emb_in = transfer_fvt(emb_a, tok_a_bl, tok_b.vocab)
            emb_out = emb_in if lm_cfg.tied_embeddings else transfer_fvt(
                lm.emb_out.data[: len(tok_a_bl.vocab)], tok_a_bl, tok_b.vocab)
        else:  # focus
            aux_corpus = load_corpus(args.aux_corpus) if args.aux_corpus else None
            if not aux_corpus:
                raise DataError("--aux-corpus is required for --method focus")
            aux = train_aux_embeddings(aux_corpus, tok_b, dim=args.aux_dim)
            emb_in = transfer_focus(emb_a, tok_a_bl, tok_b.vocab, aux)
            emb_out = emb_in if lm_cfg.tied_embeddings else transfer_focus(
                lm.emb_out.data[: len(tok_a_bl.vocab)], tok_a_bl, tok_b.vocab, aux)

    if lm_cfg.tied_embeddings:
        save_embeddings(args.out, emb_in, ROLE_TIED)
        outputs.append(args.out)
    else:
        save_embeddings(args.out, emb_in, ROLE_INPUT)
        out2 = args.out + ".out"
        save_embeddings(out2, emb_out, ROLE_OUTPUT)
        outputs += [args.out, out2]
    cfgmod.write_manifest(args.out, seed=args.seed,
                          config={"cmd": "transfer", "method": args.method},
                          outputs=outputs)
    print(f"{args.method} embeddings ({emb_in.shape[0]} rows) written to {args.out}")
    return 0


def cmd_continue_train(args):
    from .hypernet import continued_training, load_hypernet

    lm, lm_cfg = _load_lm(args)
    hn = load_hypernet(args.hypernet, lm, _load_tokenizer_any(args.tokenizer_a))
    target = _load_tokenizer_any(args.tokenizer)
    corpus = load_corpus(args.corpus)
    if args.lr not in cfgmod.CONTINUE_LR_SWEEP:
        print(f"note: lr {args.lr} outside the default sweep set "
              f"{cfgmod.CONTINUE_LR_SWEEP}", file=sys.stderr)
    lm, hn = continued_training(lm, hn, target, corpus, steps=args.steps, lr=args.lr,
                                seed=args.seed, subset_size=args.subset_size)
    lm.save(args.out_lm)
    hn.save(args.out_hypernet)
    cfgmod.write_manifest(args.out_lm, seed=args.seed,
                          config={"cmd": "continue-train", "steps": args.steps, "lr": args.lr},
                          outputs=[args.out_lm, args.out_hypernet])
    print(f"continued training done: {args.out_lm}, {args.out_hypernet}")
    return 0


def cmd_merge(args):
    from .transfer import task_arithmetic

    base = embio.load_checkpoint(args.base)
    ft = embio.load_checkpoint(args.ft)
    target = embio.load_checkpoint(args.target_base)
    merged = task_arithmetic(base, ft, target, args.lam)
    embio.save_checkpoint(args.out, merged)
    cfgmod.write_manifest(args.out, seed=0,
                          config={"cmd": "merge", "lam": args.lam}, outputs=[args.out])
    print(f"merged checkpoint written to {args.out}")
    return 0


def cmd_eval(args):
    from .convert import preservation_rate
    from .evalmetrics import bits_per_byte, bits_per_char, delta_length
    from .transfer import p_overlap, vocab_overlap

    tok = _load_tokenizer_any(args.tokenizer)
    corpus = load_corpus(args.corpus) if args.corpus else None
    result = {"metric": args.metric}
    if args.metric in ("bpc", "bpb"):
        lm, lm_cfg = _load_lm(args)
        emb_in = emb_out = None
        if args.embeddings:
            from . import nanograd as ng

            mat, role = embio.load_embeddings(args.embeddings)
            emb_in = ng.tensor(mat)
            emb_out = emb_in
            if role == embio.ROLE_INPUT and os.path.exists(args.embeddings + ".out"):
                mat2, _ = embio.load_embeddings(args.embeddings + ".out")
                emb_out = ng.tensor(mat2)
        fn = bits_per_char if args.metric == "bpc" else bits_per_byte
        result["value"] = fn(lm, tok, corpus, emb_in=emb_in, emb_out=emb_out)
    elif args.metric == "dlen":
        tok_b = _load_tokenizer_any(args.tokenizer_b)
        result["value"] = delta_length(tok, tok_b, corpus)
    elif args.metric == "preserve":
        tok_b = _load_tokenizer_any(args.tokenizer_b)
        result["value"] = preservation_rate(tok, tok_b, corpus, n=args.n, seed=args.seed)
    else:  # overlap
        tok_b = _load_tokenizer_any(args.tokenizer_b)
        result["vocab_overlap"] = vocab_overlap(tok.vocab, tok_b.vocab)
        result["p_overlap"] = p_overlap(tok, tok_b, corpus)
        result["value"] = result["p_overlap"]
    print(json.dumps(result))
    if args.json:
        with open(args.json, "w", encoding="ascii") as f:
            json.dump(result, f)
        cfgmod.write_manifest(args.json, seed=args.seed,
                              config={"cmd": "eval", "metric": args.metric},
                              outputs=[args.json])
    return 0


def cmd_flops(args):
    from .evalmetrics import flops_batch, flops_estimate

    obj = cfgmod.load_json(args.config)
    if "lm" in obj:
        cfg = cfgmod.lm_config_from(obj["lm"])
    elif "hypernet" in obj:
        cfg = cfgmod.hypernet_config_from(obj["hypernet"])
    else:
        raise DataError("flops config needs an 'lm' or 'hypernet' section")
    params, per_token = flops_estimate(cfg)
    result = {"params": params, "flops_per_token": per_token}
    if args.batch:
        n, s, k, t = (int(x) for x in args.batch.split(","))
        main_t, hyper_t = flops_batch(n, s, k, t, per_token, args.hyper_flops or per_token)
        result["batch_main_flops"] = main_t
        result["batch_hypernet_flops"] = hyper_t
    print(json.dumps(result))
    if args.json:
        with open(args.json, "w", encoding="ascii") as f:
            json.dump(result, f)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zett", description=__doc__)
    sub = p.add_subparsers(dest="cmd")

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(fn=fn)
        sp.add_argument("--seed", type=int, default=0)
        return sp

    sp = add("convert-byte-level", cmd_convert_byte_level)
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", required=True)

    sp = add("unigramify", cmd_unigramify)
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--top-n", type=int, default=100_000)
    sp.add_argument("--cap", type=int, default=32)
    sp.add_argument("--backend", default="auto", choices=["auto", "simplex", "subgradient"])
    sp.add_argument("--iters", type=int, default=4000)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")

    sp = add("sample", cmd_sample)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--k", type=int, default=32768)
    sp.add_argument("--mu", type=float, default=float(np.log(1e-5)))
    sp.add_argument("--sigma", type=float, default=4.0)
    sp.add_argument("--pool", type=int, default=4096)
    sp.add_argument("--batch", type=int, default=2048)
    sp.add_argument("--max-token-len", type=int, default=16)
    sp.add_argument("--out", required=True)

    sp = add("train-lm", cmd_train_lm)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--tokenizer", required=True)
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)

    sp = add("train-hypernet", cmd_train_hypernet)
    sp.add_argument("--lm", required=True)
    sp.add_argument("--lm-config", required=True)
    sp.add_argument("--tokenizer", required=True, help="the LM's own tokenizer file")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log-every", type=int, default=0)

    sp = add("transfer", cmd_transfer)
    sp.add_argument("--method", required=True, choices=["lexical", "fvt", "focus", "hypernet"])
    sp.add_argument("--lm", required=True)
    sp.add_argument("--lm-config", required=True)
    sp.add_argument("--tokenizer-a", required=True, help="the LM's own tokenizer file")
    sp.add_argument("--tokenizer", required=True, help="the target tokenizer file")
    sp.add_argument("--hypernet")
    sp.add_argument("--hypernet-config")
    sp.add_argument("--aux-corpus")
    sp.add_argument("--aux-dim", type=int, default=64)
    sp.add_argument("--lm-ft", help="fine-tuned checkpoint: report embedding compatibility")
    sp.add_argument("--out", required=True)

    sp = add("continue-train", cmd_continue_train)
    sp.add_argument("--lm", required=True)
    sp.add_argument("--lm-config", required=True)
    sp.add_argument("--hypernet", required=True)
    sp.add_argument("--tokenizer-a", required=True)
    sp.add_argument("--tokenizer", required=True, help="the fixed target tokenizer")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--steps", type=int, default=1000)
    sp.add_argument("--lr", type=float, default=3e-6)
    sp.add_argument("--subset-size", type=int, default=1024)
    sp.add_argument("--out-lm", required=True)
    sp.add_argument("--out-hypernet", required=True)

    sp = add("merge", cmd_merge)
    sp.add_argument("--base", required=True)
    sp.add_argument("--ft", required=True)
    sp.add_argument("--target-base", required=True)
    sp.add_argument("--lam", type=float, required=True)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval)
    sp.add_argument("--metric", required=True, choices=["bpc", "bpb", "dlen", "preserve", "overlap"])
    sp.add_argument("--lm")
    sp.add_argument("--lm-config")
    sp.add_argument("--tokenizer", required=True)
    sp.add_argument("--tokenizer-b")
    sp.add_argument("--corpus")
    sp.add_argument("--embeddings")
    sp.add_argument("--n", type=int, default=10_000)
    sp.add_argument("--json")

    sp = add("flops", cmd_flops)
    sp.add_argument("--config", required=True)
    sp.add_argument("--batch", help="n,s,k,t for the per-batch identity")
    sp.add_argument("--hyper-flops", type=float, help="hypernet flops/token override")
    sp.add_argument("--json")

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if not getattr(args, "cmd", None):
        parser.print_usage()
        return 1
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, ZettError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
