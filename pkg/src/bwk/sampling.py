"""Deterministic direction sampling: Fibonacci sphere lattice, circle nodes."""

from __future__ import annotations

import numpy as np

_GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


def fibonacci_sphere(n: int) -> np.ndarray:
    """n near-uniform points on the unit 2-sphere, shape (n, 3)."""
    i = np.arange(n, dtype=float) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = 2.0 * np.pi * i / _GOLDEN
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def circle_nodes(n: int) -> np.ndarray:
    """n equally spaced points on the unit circle, shape (n, 2)."""
    t = 2.0 * np.pi * np.arange(n, dtype=float) / n
    return np.column_stack([np.cos(t), np.sin(t)])
