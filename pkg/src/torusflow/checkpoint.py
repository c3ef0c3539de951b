"""Binary checkpoint format for CNS and INS states.

Layout (stable across versions; little-endian, C-order float64 arrays):

    bytes 0..7    magic b"TFLOWCK1"
    bytes 8..15   uint64 header length H
    bytes 16..16+H a UTF-8 JSON header with keys:
                    format_version, system ("CNS"|"INS"), time,
                    grid {lengths, resolution},
                    params {mu, lam, kappa, gamma}  (CNS)  /  mu (INS),
                    arrays (ordered list of array names), dtype
    then          the arrays named in the header, each resolution[0] *
                  resolution[1] float64 values, row-major

CNS stores ["rho", "m1", "m2"]; INS stores ["rho", "u1", "u2", "p"].
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import spectral as sp
from .cns import CnsParams, CnsState
from .ins import InsState

MAGIC = b"TFLOWCK1"
FORMAT_VERSION = 1

__all__ = ["save_checkpoint", "load_checkpoint", "MAGIC"]


def _header_for(state) -> dict:
    g = state.grid
    base = {
        "format_version": FORMAT_VERSION,
        "time": state.time,
        "grid": {"lengths": list(g.lengths), "resolution": list(g.resolution)},
        "dtype": "<f8",
    }
    if isinstance(state, CnsState):
        p = state.params
        base.update(
            system="CNS",
            params={"mu": p.mu, "lam": p.lam, "kappa": p.kappa, "gamma": p.gamma},
            arrays=["rho", "m1", "m2"],
        )
    elif isinstance(state, InsState):
        base.update(
            system="INS",
            mu=state.mu,
            regularized=state.regularized,
            arrays=["rho", "u1", "u2", "p"],
        )
    else:
        raise TypeError(f"cannot checkpoint {type(state).__name__}")
    return base


def _arrays_for(state):
    if isinstance(state, CnsState):
        m1, m2 = state.momentum.phys()
        return [state.rho.phys(), m1, m2]
    u1, u2 = state.u.phys()
    return [state.rho.phys(), u1, u2, state.p.phys()]


def save_checkpoint(state, path) -> None:
    header = json.dumps(_header_for(state), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for arr in _arrays_for(state):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a torusflow checkpoint (magic {magic!r})")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        grid = sp.make_grid(header["grid"]["lengths"], header["grid"]["resolution"])
        n = grid.resolution[0] * grid.resolution[1]
        arrays = {}
        for name in header["arrays"]:
            buf = f.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"{path}: truncated array {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(grid.resolution).copy()
    if header["system"] == "CNS":
        p = header["params"]
        return CnsState(
            time=header["time"],
            rho=sp.scalar(grid, arrays["rho"]),
            momentum=sp.vector(grid, arrays["m1"], arrays["m2"]),
            params=CnsParams(mu=p["mu"], lam=p["lam"], kappa=p["kappa"], gamma=p["gamma"]),
            grid=grid,
        )
    if header["system"] == "INS":
        return InsState(
            time=header["time"],
            rho=sp.scalar(grid, arrays["rho"]),
            u=sp.vector(grid, arrays["u1"], arrays["u2"]),
            p=sp.scalar(grid, arrays["p"]),
            mu=header["mu"],
            regularized=header.get("regularized", False),
        )
    raise ValueError(f"{path}: unknown system tag {header['system']!r}")
