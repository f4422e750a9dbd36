"""Synthetic scaling data drawn from a known parameter set."""

import numpy as np

from andloc.dataset import DataPoint
from andloc.fss import scaling_model

ORDER = "2,3,0,0"
TRUE = {"W_c": 6.32, "nu": 0.8745, "b1": [-1.5, 0.8], "a": {(0, 0): 0.9363, (2, 0): 0.25, (3, 0): -0.04}}
W_GRID = np.linspace(5.9, 6.75, 9)
L_LIST = (4, 6, 8, 10, 12)


def grid():
    W, L = np.meshgrid(W_GRID, L_LIST)
    return W.ravel(), L.ravel()


def clean_curve(params=TRUE, order=ORDER):
    W, L = grid()
    return W, L, scaling_model(params, W, L, order)


def noisy_points(rng, rel_noise=0.002, params=TRUE, order=ORDER):
    """Points with Gaussian noise of ``rel_noise`` times the true value, labelled with that error."""
    W, L, lam = clean_curve(params, order)
    sigma = rel_noise * lam
    noisy = lam + sigma * rng.standard_normal(lam.size)
    return [DataPoint(float(w), int(l), float(y), float(s)) for w, l, y, s in zip(W, L, noisy, sigma)]
