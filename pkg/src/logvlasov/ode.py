"""Embedded Dormand-Prince 5(4) stepping with PI step-size control."""

from __future__ import annotations

import numpy as np

# Dormand & Prince (1980), FSAL tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _B_LOW


def dp_step(f, t, y, h, k1=None):
    """One Dormand-Prince step.

    Returns ``(y_new, err, k_last)``; ``k_last`` is f(t+h, y_new) and can be
    reused as the first stage of the next step.
    """
    if k1 is None:
        k1 = f(t, y)
    k = [k1]
    for i in range(1, 7):
        yi = y.copy()
        for j, a in enumerate(_A[i]):
            if a != 0.0:
                yi += h * a * k[j]
        k.append(f(t + _C[i] * h, yi))
    # stage 7 is evaluated at y_new (FSAL)
    y_new = y + h * sum(b * kj for b, kj in zip(_B, k) if b != 0.0)
    err = h * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
    return y_new, err, k[6]


def error_norm(err, y_old, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


class IntegrationError(RuntimeError):
    """Non-finite state or step-size collapse; carries the last valid state."""

    def __init__(self, message, t_last, y_last):
        super().__init__(message)
        self.t_last = t_last
        self.y_last = y_last


def integrate(f, t0, y0, t_end, rtol, atol, stops=(), stop_if=None, h0=None,
              h_min_rel=1e-14, max_steps=10_000_000):
    """Adaptive integration from ``t0`` to ``t_end``.

    Steps are clipped so every time in ``stops`` is hit exactly. ``stop_if``
    is called on each accepted state; a truthy return ends integration early.

    Returns ``(ts, ys, reason, h_last)`` where ``reason`` is ``"done"``,
    ``"stop"`` or ``"underflow"``.
    """
    safety, fac_min, fac_max = 0.9, 0.2, 5.0
    alpha, beta = 0.7 / 5, 0.4 / 5  # PI gains for a 5th-order error estimate

    y = np.asarray(y0, dtype=float).copy()
    t = float(t0)
    stops = sorted(s for s in stops if t0 < s < t_end) + [t_end]
    ts, ys = [t], [y.copy()]
    k1 = f(t, y)
    if h0 is None:
        d0 = np.linalg.norm(y) + 1e-12
        d1 = np.linalg.norm(k1) + 1e-12
        h0 = min(0.01 * d0 / d1, (t_end - t0))
    h = float(h0)
    err_prev = 1e-4
    stop_idx = 0
    for _ in range(max_steps):
        target = stops[stop_idx]
        clipped = t + h >= target
        h_try = target - t if clipped else h
        y_new, err, k_new = dp_step(f, t, y, h_try, k1)
        if not np.all(np.isfinite(y_new)):
            en = np.inf
        else:
            en = error_norm(err, y, y_new, rtol, atol)
        if en <= 1.0:
            t = target if clipped else t + h_try
            y, k1 = y_new, k_new
            if not np.all(np.isfinite(k1)):
                raise IntegrationError(f"non-finite derivative at t={t}", t, y)
            ts.append(t)
            ys.append(y.copy())
            en = max(en, 1e-10)
            fac = safety * en ** (-alpha) * err_prev ** beta
            err_prev = en
            if not clipped:
                h = h_try * min(fac_max, max(fac_min, fac))
            else:
                h = max(h, h_try) if fac >= 1 else h * max(fac_min, fac)
            if stop_if is not None and stop_if(t, y):
                return ts, ys, "stop", h_try
            if clipped:
                stop_idx += 1
                if stop_idx == len(stops):
                    return ts, ys, "done", h_try
        else:
            fac = 0.2 if not np.isfinite(en) else max(fac_min, safety * en ** (-1 / 5))
            h = h_try * fac
        if h < h_min_rel * max(1.0, abs(t)):
            return ts, ys, "underflow", h
    raise IntegrationError("maximum number of steps exceeded", t, y)
