"""State checkpoints as ``.npz`` archives.

Arrays ``u0, u1[, u2]`` and ``q11, q12, q13, q22, q23`` are little-endian
float64 in C order; ``time`` is a scalar and ``params`` a JSON string, so
files load without pickle.
"""
import json

import numpy as np

from .timestepper import State

Q_NAMES = ("q11", "q12", "q13", "q22", "q23")


def save(path, state, params=None):
    arrays = {f"u{a}": np.ascontiguousarray(state.u[a], dtype="<f8")
              for a in range(state.u.shape[0])}
    arrays.update({name: np.ascontiguousarray(state.q[i], dtype="<f8")
                   for i, name in enumerate(Q_NAMES)})
    arrays["time"] = np.array(float(state.t))
    arrays["params"] = np.array(json.dumps(params or {}, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load(path):
    """Return ``(state, params)``."""
    with np.load(path, allow_pickle=False) as z:
        names = [f"u{a}" for a in range(3) if f"u{a}" in z.files]
        missing = [n for n in ("u0", "u1", "time", "params") + Q_NAMES
                   if n not in z.files]
        if missing:
            raise ValueError(f"{path}: checkpoint lacks {', '.join(missing)}")
        u = np.stack([z[n] for n in names])
        q = np.stack([z[n] for n in Q_NAMES])
        if u.shape[1:] != q.shape[1:] or q.ndim - 1 != u.shape[0]:
            raise ValueError(f"{path}: inconsistent array shapes")
        t = float(z["time"])
        params = json.loads(str(z["params"]))
    return State(t, u, q), params
