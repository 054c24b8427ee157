"""Hot-loop kernels: compiled extension when available, pure Python otherwise.

Set ZETT_KERNELS=pure to force the fallback (e.g. for benchmarking).
`BACKEND` reports which implementation was selected at import time.
"""

import os

from . import pure as _pure

BACKEND = "pure"
_impl = _pure

if os.environ.get("ZETT_KERNELS", "").lower() != "pure":
    try:
        from . import _speed as _compiled

        BACKEND = "compiled"
        _impl = _compiled
    except ImportError:
        pass

viterbi_segment = _impl.viterbi_segment
count_substrings = _impl.count_substrings
bpe_apply = _impl.bpe_apply
