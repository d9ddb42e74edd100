"""Pure-numpy implementations of the link hot kernels.

Kept bit-identical to the compiled versions in ``_core.pyx``: both apply
the same IEEE operations per element in the same order, and all random
inputs are drawn by the caller.
"""

import numpy as np

IMPLEMENTATION = "python"


def quantize_blocks(x, scale, inv_scale, u):
    """Per-row stochastic rounding onto a sign/magnitude level grid.

    out[i, j] = copysign(floor(|x[i, j]| * scale[i] + u[i, j]), x[i, j]) * inv_scale[i]
    """
    q = np.floor(np.abs(x) * scale[:, None] + u)
    return np.copysign(q, x) * inv_scale[:, None]


def apply_channel_blocks(x, gain, noise_std, z):
    """Per-row scalar gain plus additive noise.

    out[i, j] = gain[i] * x[i, j] + noise_std[i] * z[i, j]
    """
    return gain[:, None] * x + noise_std[:, None] * z
