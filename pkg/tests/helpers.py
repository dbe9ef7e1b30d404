"""Finite-difference gradient checking shared by several test modules."""

import numpy as np

from gluq.autodiff import Tape

REL_TOL = 1e-4
ABS_FLOOR = 1e-6


def analytic_grads(loss_fn, params):
    with Tape() as tape:
        loss = loss_fn()
    return tape.gradient(loss, params)


def central_difference(loss_fn, param, index, eps=1e-5):
    old = param.data[index]
    param.data[index] = old + eps
    up = loss_fn().item()
    param.data[index] = old - eps
    down = loss_fn().item()
    param.data[index] = old
    return (up - down) / (2 * eps)


def sample_coordinates(params, n, rng):
    """``n`` random (parameter index, flat index) pairs, weighted by parameter size."""
    sizes = np.array([p.data.size for p in params], dtype=float)
    which = rng.choice(len(params), size=n, p=sizes / sizes.sum())
    return [(int(i), int(rng.integers(params[i].data.size))) for i in which]


def check_gradients(loss_fn, params, n_coords, rng, eps=1e-5):
    """Return the worst scaled error ``|a - n| / max(|n|, floor)`` over sampled coordinates.

    Agreement within ``REL_TOL`` relative (``ABS_FLOOR`` absolute near zero)
    means the returned value is below ``REL_TOL``.
    """
    grads = analytic_grads(loss_fn, params)
    worst = 0.0
    for i, flat in sample_coordinates(params, n_coords, rng):
        idx = np.unravel_index(flat, params[i].data.shape)
        num = central_difference(loss_fn, params[i], idx, eps)
        ana = grads[i][idx]
        err = abs(ana - num) / max(abs(num), ABS_FLOOR / REL_TOL)
        worst = max(worst, err)
    return worst


# -- acceptance verdicts ------------------------------------------------------

ACCEPTANCE_LINES = []


def verdict(number, title, ok, detail):
    """Record and print one PASS/FAIL line, then fail the test if ``ok`` is false."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    assert ok, line
