"""Small shared numeric helpers."""
from __future__ import annotations

import numpy as np


def order_quantile(values: np.ndarray, p: float) -> float:
    """Empirical quantile as the ceil(p*m)-th order statistic (1-based).

    This deliberately avoids interpolation so that, e.g., the bootstrap
    critical value is an actually-realized statistic.
    """
    v = np.sort(np.asarray(values, dtype=float))
    m = v.shape[0]
    if m == 0:
        raise ValueError("cannot take a quantile of an empty sample")
    k = int(np.ceil(p * m))
    k = min(max(k, 1), m)
    return float(v[k - 1])
