"""Hot-kernel dispatch: compiled extension if available, numpy fallback otherwise.

Both implementations are bit-identical (randomness is drawn by the caller),
so the selection never changes simulation output.  Set THZFL_PURE_PYTHON=1
to force the fallback; ``IMPLEMENTATION`` reports which one is active.
"""

import os

from . import _fallback

if os.environ.get("THZFL_PURE_PYTHON") == "1":
    _impl = _fallback
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback

IMPLEMENTATION = _impl.IMPLEMENTATION
quantize_blocks = _impl.quantize_blocks
apply_channel_blocks = _impl.apply_channel_blocks

__all__ = ["IMPLEMENTATION", "quantize_blocks", "apply_channel_blocks"]
