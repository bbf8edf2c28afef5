"""Central finite-difference checks of the hand-written backward passes."""

from __future__ import annotations

from typing import Callable

import numpy as np

FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR) -> float:
    """Largest elementwise ``|a - n| / max(|a| + |n|, floor)``."""
    a, n = np.asarray(analytic, float), np.asarray(numeric, float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)))


def numeric_gradient(loss: Callable[[], float], array: np.ndarray, h: float = 1e-5, entries=None) -> np.ndarray:
    """Central differences of ``loss`` w.r.t. ``array``, perturbed in place."""
    flat = array.reshape(-1)
    if not np.shares_memory(flat, array):
        raise ValueError("array must be contiguous so it can be perturbed in place")
    out = np.zeros(flat.size)
    for i in range(flat.size) if entries is None else entries:
        old = flat[i]
        flat[i] = old + h
        up = loss()
        flat[i] = old - h
        down = loss()
        flat[i] = old
        out[i] = (up - down) / (2 * h)
    return out.reshape(array.shape)


def check(loss: Callable[[], float], grads: Callable[[], dict], arrays: dict, h: float = 1e-5,
          max_entries: int | None = None, rng=None) -> dict:
    """Relative error per named array.

    ``grads()`` runs forward + backward and returns analytic gradients for every
    key of ``arrays``; ``loss()`` runs forward only.  With ``max_entries`` a
    random subset of entries of each array is compared.
    """
    analytic = {k: np.array(v, dtype=float, copy=True) for k, v in grads().items()}
    errors = {}
    for name, arr in arrays.items():
        entries = None
        if max_entries is not None and arr.size > max_entries:
            entries = (rng or np.random.default_rng(0)).choice(arr.size, max_entries, replace=False)
        num = numeric_gradient(loss, arr, h, entries)
        a = analytic[name]
        if entries is not None:
            a, num = a.reshape(-1)[entries], num.reshape(-1)[entries]
        errors[name] = relative_error(a, num)
    return errors


def check_module(module, inputs: dict, forward: Callable, rng, h: float = 1e-5, max_entries: int | None = None,
                 min_margin: float = 1e-4):
    """Check a module's parameter and input gradients on the loss ``sum(out * r)``.

    ``forward(**inputs)`` returns the module output; ``module.backward(r)`` must
    return the input gradient (or a tuple matching ``inputs`` order, or ``None``
    when inputs are not differentiable).  Returns ``None`` when the
    configuration sits within ``min_margin`` of a non-differentiable point,
    otherwise the worst relative error over every array.
    """
    out = forward(**inputs)
    margin = module.kink_margin() if hasattr(module, "kink_margin") else np.inf
    if margin < min_margin:
        return None
    r = rng.standard_normal(np.shape(out))

    def loss():
        return float(np.sum(forward(**inputs) * r))

    def grads():
        if hasattr(module, "zero_all"):
            module.zero_all()
        forward(**inputs)
        g_in = module.backward(r)
        g = dict(module.named_grads()) if hasattr(module, "named_grads") else {}
        g = {"param." + k: v for k, v in g.items()}
        if g_in is not None:
            g_in = g_in if isinstance(g_in, tuple) else (g_in,)
            for name, gi in zip(inputs, g_in):
                g["input." + name] = gi
        return g

    arrays = {"param." + k: v for k, v in module.named_params()} if hasattr(module, "named_params") else {}
    analytic_keys = grads().keys()
    arrays.update({"input." + k: v for k, v in inputs.items() if "input." + k in analytic_keys})
    errors = check(loss, grads, arrays, h, max_entries, rng)
    return max(errors.values(), default=0.0)
