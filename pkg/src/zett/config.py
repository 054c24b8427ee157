"""Run configuration and reproducibility plumbing.

Config files are strict JSON: unknown keys are rejected, defaults come
from the published hyperparameter table (sampler noise, optimizer
settings, hypernet shape). Every CLI run writes a manifest next to its
outputs recording the config hash, seed, versions and output digests;
identical manifests mean byte-identical artifacts.
"""

import dataclasses
import hashlib
import json
import os
import platform
import sys

import numpy as np

from . import __version__
from .errors import DataError
from .hypernet import HypernetConfig
from .sampler import SamplerConfig
from .tokenizer.types import PretokenizerConfig
from .toylm import LmConfig


def from_dict(cls, d: dict, **overrides):
    """Instantiate a dataclass from a dict, rejecting unknown keys."""
    if not isinstance(d, dict):
        raise DataError(f"expected an object for {cls.__name__}, got {type(d).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise DataError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    merged = {**d, **overrides}
    try:
        return cls(**merged)
    except TypeError as exc:
        raise DataError(f"bad {cls.__name__}: {exc}") from exc


def sampler_config_from(d: dict, **overrides) -> SamplerConfig:
    d = dict(d)
    if "pretok" in d:
        d["pretok"] = from_dict(PretokenizerConfig, d["pretok"])
    return from_dict(SamplerConfig, d, **overrides)


def load_json(path) -> dict:
    if not os.path.exists(path):
        raise DataError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc


def section(obj: dict, name: str, required=True) -> dict:
    if name not in obj:
        if required:
            raise DataError(f"config is missing the '{name}' section")
        return {}
    return obj[name]


TRAIN_LM_DEFAULTS = {
    "steps": 2000, "batch_size": 16, "seq_len": None, "peak_lr": 1e-3,
    "warmup": 100, "clip": 1.0,
}
TRAIN_HN_DEFAULTS = {
    "steps": 3000, "warmup_steps": 300, "seq_len": 64, "subset_size": 512,
    "warmup_peak_lr": 3e-4, "main_peak_lr": 6e-5, "main_floor_lr": 6e-6,
    "main_warmup_frac": 0.05, "warmup_batch": 256, "clip": 0.1,
}
CONTINUE_LR_SWEEP = (1e-6, 3e-6, 6e-6, 1e-5, 3e-5)


def train_section(obj: dict, defaults: dict) -> dict:
    d = section(obj, "train", required=False)
    unknown = set(d) - set(defaults)
    if unknown:
        raise DataError(f"unknown train keys: {sorted(unknown)}")
    return {**defaults, **d}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("ascii")).hexdigest()[:16]


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(anchor_path, *, seed, config, outputs) -> str:
    """Write <anchor>.manifest.json describing a finished run."""
    manifest = {
        "config_hash": config_hash(config),
        "config": config,
        "seed": seed,
        "versions": {
            "zett": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "outputs": {os.path.basename(p): _sha256_file(p) for p in outputs},
    }
    path = str(anchor_path) + ".manifest.json"
    with open(path, "w", encoding="ascii") as f:
        f.write(canonical_json(manifest))
    return path


def lm_config_from(d: dict, **overrides) -> LmConfig:
    return from_dict(LmConfig, d, **overrides)


def hypernet_config_from(d: dict, **overrides) -> HypernetConfig:
    return from_dict(HypernetConfig, d, **overrides)
