"""Binary grid records and trajectory manifests.

Record layout (all little-endian)::

    b"DNLS" | version u32 | d u32 | K u32 | R u32 | tag u32 | n_values u64 | complex64 pairs

Values are the interior samples in row-major order.  Tags:

    0  finite-lattice grid function, spacing pi/K
    1  spectral coefficients on the same lattice
    2  finite-lattice grid function on the unit-spacing lattice
    3  periodic lattice of spacing pi/K and 2KR points per axis
"""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .analysis import energy, mass
from .lattice import GridFunction, LatticeSpec, PeriodicLattice
from .spectral import SpectralCoeffs

__all__ = [
    "MAGIC",
    "VERSION",
    "TAG_LATTICE",
    "TAG_COEFFS",
    "TAG_UNIT_LATTICE",
    "TAG_PERIODIC",
    "to_bytes",
    "from_bytes",
    "write_grid",
    "read_grid",
    "write_trajectory",
    "read_trajectory",
]

MAGIC = b"DNLS"
VERSION = 1
TAG_LATTICE, TAG_COEFFS, TAG_UNIT_LATTICE, TAG_PERIODIC = 0, 1, 2, 3

_HEADER = struct.Struct("<4sIIIIIQ")


def _header_for(obj) -> tuple[int, int, int, int, np.ndarray]:
    if isinstance(obj, SpectralCoeffs):
        s = obj.spec
        return s.d, s.K, s.R, TAG_COEFFS, obj.coeffs
    if not isinstance(obj, GridFunction):
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    dom = obj.domain
    if isinstance(dom, LatticeSpec):
        tag = TAG_UNIT_LATTICE if dom.unit_spacing else TAG_LATTICE
        return dom.d, dom.K, dom.R, tag, obj.values
    if isinstance(dom, PeriodicLattice):
        K = math.pi / dom.h
        if abs(K - round(K)) > 1e-9 * K or dom.n % (2 * round(K)):
            raise ValueError("periodic lattice must have h = pi/K and 2KR points per axis")
        K = int(round(K))
        return dom.d, K, dom.n // (2 * K), TAG_PERIODIC, obj.values
    raise ValueError(f"domain {type(dom).__name__} has no binary representation")


def to_bytes(obj: GridFunction | SpectralCoeffs) -> bytes:
    d, K, R, tag, values = _header_for(obj)
    data = np.ascontiguousarray(values, dtype="<c8").ravel()
    return _HEADER.pack(MAGIC, VERSION, d, K, R, tag, data.size) + data.tobytes()


def from_bytes(buf: bytes) -> GridFunction | SpectralCoeffs:
    if len(buf) < _HEADER.size:
        raise ValueError("truncated record")
    magic, version, d, K, R, tag, count = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    body = buf[_HEADER.size:]
    if len(body) != 8 * count:
        raise ValueError("record length does not match header")
    values = np.frombuffer(body, dtype="<c8").astype(complex)
    if tag == TAG_LATTICE:
        return GridFunction(LatticeSpec(d, K, R), values)
    if tag == TAG_UNIT_LATTICE:
        return GridFunction(LatticeSpec(d, K, R, unit_spacing=True), values)
    if tag == TAG_COEFFS:
        spec = LatticeSpec(d, K, R)
        return SpectralCoeffs(spec, values.reshape(spec.shape))
    if tag == TAG_PERIODIC:
        return GridFunction(PeriodicLattice(d, math.pi / K, 2 * K * R), values)
    raise ValueError(f"unknown domain tag {tag}")


def write_grid(path, obj) -> None:
    Path(path).write_bytes(to_bytes(obj))


def read_grid(path):
    return from_bytes(Path(path).read_bytes())


def write_trajectory(directory, traj, sigma: float = 1.0, stem: str = "snap") -> Path:
    """Write each snapshot as a binary record plus ``manifest.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    m0 = mass(traj.states[0])
    e0 = energy(traj.states[0], sigma)
    entries = []
    width = max(4, len(str(len(traj.states))))
    for k, (t, f) in enumerate(zip(traj.times, traj.states)):
        name = f"{stem}_{k:0{width}d}.dnls"
        write_grid(out / name, f)
        m, e = mass(f), energy(f, sigma)
        entries.append(
            {
                "file": name,
                "time": float(t),
                "mass": m,
                "energy": e,
                "mass_drift": abs(m - m0),
                "energy_drift": abs(e - e0),
            }
        )
    manifest = {"format": "DNLS", "version": VERSION, "sigma": sigma, "snapshots": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_trajectory(directory):
    """Inverse of :func:`write_trajectory`."""
    from .dynamics import Trajectory

    base = Path(directory)
    manifest = json.loads((base / "manifest.json").read_text())
    snaps = manifest["snapshots"]
    states = [read_grid(base / s["file"]) for s in snaps]
    times = np.array([s["time"] for s in snaps])
    return Trajectory(times, states)
