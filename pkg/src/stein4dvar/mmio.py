"""Matrix Market import/export of whole problem instances.

A system directory holds one .mtx file per matrix (B, Q, R, H, M_1..M_N,
b, d) in array format, with a comment line recording the block layout
(s and N+1) so block matrices round-trip unambiguously.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.io import mmread, mmwrite

from .blocks import SystemData


def save_matrix(path, A, s=None, ncols=None):
    comment = ""
    if s is not None and ncols is not None:
        comment = f"block layout: s={s} ncols={ncols}"
    mmwrite(path, np.asarray(A), comment=comment)


def load_matrix(path):
    return np.asarray(mmread(path), dtype=float)


def save_system(dirpath, sys: SystemData):
    """Write every matrix of the instance to dirpath as .mtx files."""
    os.makedirs(dirpath, exist_ok=True)
    for name, A in (("B", sys.B), ("Q", sys.Q), ("R", sys.R), ("H", sys.H)):
        save_matrix(os.path.join(dirpath, f"{name}.mtx"), A)
    for i in range(sys.N):
        save_matrix(os.path.join(dirpath, f"M_{i + 1:03d}.mtx"), sys.models[i])
    save_matrix(os.path.join(dirpath, "b.mtx"), sys.b, s=sys.s, ncols=sys.ncols)
    save_matrix(os.path.join(dirpath, "d.mtx"), sys.d, s=sys.p, ncols=sys.ncols)


def load_system(dirpath) -> SystemData:
    """Rebuild a SystemData from a directory written by save_system."""
    def rd(name):
        return load_matrix(os.path.join(dirpath, name))

    B, Q, R, H = rd("B.mtx"), rd("Q.mtx"), rd("R.mtx"), rd("H.mtx")
    names = sorted(f for f in os.listdir(dirpath) if f.startswith("M_") and f.endswith(".mtx"))
    if not names:
        raise FileNotFoundError(f"no model matrices M_*.mtx in {dirpath}")
    models = np.stack([load_matrix(os.path.join(dirpath, f)) for f in names])
    return SystemData(B=B, Q=Q, R=R, H=H, models=models, b=rd("b.mtx"), d=rd("d.mtx"))
