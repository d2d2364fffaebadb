"""3D Gaussian splat model and its PLY serialization.

The on-disk layout is the common 3DGS PLY: positions x/y/z, log-scales
scale_0..2, wxyz quaternion rot_0..3, logit opacity, DC color f_dc_0..2 and
45 higher-order coefficients f_rest_0..44 stored channel-major (15 per
channel). Loading undoes the activations: scales are exponentiated, opacity
goes through the logistic, quaternions are normalized.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MissingField, ParseError, ValueOutOfRange

NUM_SH_COEFFS = 16  # degree <= 3
NUM_REST = NUM_SH_COEFFS - 1

_FIELDS = (
    ["x", "y", "z"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(3 * NUM_REST)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


@dataclass
class SplatModel:
    positions: np.ndarray   # (N, 3) world coords
    scales: np.ndarray      # (N, 3) > 0
    rotations: np.ndarray   # (N, 4) unit wxyz
    opacities: np.ndarray   # (N,) in [0, 1]
    sh: np.ndarray          # (N, 3, 16), [:, :, 0] is DC

    def __post_init__(self):
        n = self.positions.shape[0]
        shapes = {
            "positions": (self.positions.shape, (n, 3)),
            "scales": (self.scales.shape, (n, 3)),
            "rotations": (self.rotations.shape, (n, 4)),
            "opacities": (self.opacities.shape, (n,)),
            "sh": (self.sh.shape, (n, 3, NUM_SH_COEFFS)),
        }
        for name, (actual, expected) in shapes.items():
            if actual != expected:
                raise ValueOutOfRange("splats", f"{name} shape {actual}, expected {expected}")
        if n and self.scales.min() <= 0:
            raise ValueOutOfRange("splats", "scales must be > 0")
        if n and (self.opacities.min() < 0 or self.opacities.max() > 1):
            raise ValueOutOfRange("splats", "opacity must be in [0, 1]")
        norms = np.linalg.norm(self.rotations, axis=1)
        if n and np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueOutOfRange("splats", "quaternions must be unit norm")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "SplatModel":
        return SplatModel(
            positions=self.positions.copy(),
            scales=self.scales.copy(),
            rotations=self.rotations.copy(),
            opacities=self.opacities.copy(),
            sh=self.sh.copy(),
        )

    def with_sh(self, sh: np.ndarray) -> "SplatModel":
        """Same geometry, new SH coefficients (arrays shared, sh copied)."""
        return SplatModel(
            positions=self.positions,
            scales=self.scales,
            rotations=self.rotations,
            opacities=self.opacities,
            sh=np.array(sh, dtype=np.float64),
        )

    def scaled(self, factor: float) -> "SplatModel":
        """Uniform rescale of the object about the model origin."""
        if factor <= 0:
            raise ValueOutOfRange("splats", f"scale factor must be > 0, got {factor}")
        return SplatModel(
            positions=self.positions * factor,
            scales=self.scales * factor,
            rotations=self.rotations,
            opacities=self.opacities,
            sh=self.sh,
        )

    def geometry_digest(self) -> str:
        """Hash of every non-color attribute; used to assert geometry immutability."""
        h = hashlib.sha256()
        for arr in (self.positions, self.scales, self.rotations, self.opacities):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def load_splats(path) -> SplatModel:
    """Load a 3DGS PLY (binary little-endian or ascii)."""
    path = Path(path)
    with open(path, "rb") as f:
        data = f.read()
    header_end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or header_end < 0:
        raise ParseError(path, "not a PLY file")
    header = data[:header_end].decode("ascii", errors="replace").splitlines()
    body = data[header_end + len(b"end_header\n"):]

    fmt = None
    count = None
    props: list[str] = []
    in_vertex = False
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                count = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] != "float":
                raise ParseError(path, f"unsupported property type {parts[1]}")
            props.append(parts[2])
    if fmt not in ("binary_little_endian", "ascii"):
        raise ParseError(path, f"unsupported format {fmt}")
    if count is None:
        raise ParseError(path, "no vertex element")
    for field in _FIELDS:
        if field not in props:
            raise MissingField(path, field)

    if fmt == "binary_little_endian":
        expected = count * len(props) * 4
        if len(body) < expected:
            raise ParseError(path, f"truncated body: {len(body)} < {expected} bytes")
        table = np.frombuffer(body[:expected], dtype="<f4").reshape(count, len(props))
    else:
        try:
            table = np.loadtxt(io.BytesIO(body), dtype=np.float64, ndmin=2)
        except ValueError as e:
            raise ParseError(path, f"bad ascii body: {e}") from None
        if table.shape != (count, len(props)):
            raise ParseError(path, f"ascii body shape {table.shape}, expected {(count, len(props))}")

    col = {name: i for i, name in enumerate(props)}

    def take(names):
        return np.stack([table[:, col[n]] for n in names], axis=1).astype(np.float64)

    positions = take(["x", "y", "z"])
    scales = np.exp(take([f"scale_{i}" for i in range(3)]))
    rotations = take([f"rot_{i}" for i in range(4)])
    norms = np.linalg.norm(rotations, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ParseError(path, "zero-norm quaternion")
    rotations = rotations / norms
    opacities = _sigmoid(table[:, col["opacity"]].astype(np.float64))

    sh = np.zeros((count, 3, NUM_SH_COEFFS))
    for c in range(3):
        sh[:, c, 0] = table[:, col[f"f_dc_{c}"]]
        for j in range(NUM_REST):
            # channel-major on disk: f_rest_[c * 15 + j]
            sh[:, c, j + 1] = table[:, col[f"f_rest_{c * NUM_REST + j}"]]

    return SplatModel(positions=positions, scales=scales, rotations=rotations,
                      opacities=opacities, sh=sh)


def save_splats(path, model: SplatModel, binary: bool = True) -> None:
    """Write a SplatModel in the 3DGS PLY layout (binary little-endian or ascii)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(model)
    table = np.zeros((n, len(_FIELDS)), dtype=np.float32)
    col = {name: i for i, name in enumerate(_FIELDS)}
    table[:, [col["x"], col["y"], col["z"]]] = model.positions
    for c in range(3):
        table[:, col[f"f_dc_{c}"]] = model.sh[:, c, 0]
        for j in range(NUM_REST):
            table[:, col[f"f_rest_{c * NUM_REST + j}"]] = model.sh[:, c, j + 1]
    eps = 1e-7
    op = np.clip(model.opacities, eps, 1 - eps)
    table[:, col["opacity"]] = np.log(op / (1 - op))
    for i in range(3):
        table[:, col[f"scale_{i}"]] = np.log(model.scales[:, i])
    for i in range(4):
        table[:, col[f"rot_{i}"]] = model.rotations[:, i]

    fmt = "binary_little_endian" if binary else "ascii"
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {n}"]
    lines += [f"property float {name}" for name in _FIELDS]
    lines.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        if binary:
            f.write(table.astype("<f4").tobytes())
        else:
            for row in table:
                f.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))
