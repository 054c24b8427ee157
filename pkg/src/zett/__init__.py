"""zett: tokenizer algebra and zero-shot tokenizer transfer, desk scale.

Subpackages map onto the main concerns: tokenizer data model and
segmentation (zett.tokenizer), byte-level / UnigramLM conversion
(zett.convert), tokenizer sampling (zett.sampler), embedding transfer
heuristics (zett.transfer), a small reverse-mode autodiff engine
(zett.nanograd), a toy causal LM (zett.toylm), the embedding-prediction
hypernetwork (zett.hypernet), and evaluation metrics (zett.evalmetrics).
"""

__version__ = "0.1.0"
