"""Depth-map ingestion and the package's binary/CSV file formats.

Every binary file starts with a 4-byte magic and a little-endian ``uint32``
format version. Layouts (all little-endian):

``HPC1`` sequence
    version u32, n_f u32, frame_rate f64, flags u32; subject i32 if
    ``flags & 1``; label i32 if ``flags & 2``; then per frame: index i32,
    count u32, ``count * 3`` f64 (x, y, z).
``HPD1`` descriptors
    version u32, rows u32, dim u32, m u32, gamma u32, echo_len u32, echo
    (UTF-8 ``key=value`` lines); per row subject i32, label i32; then
    ``rows * dim`` f64.
``HPK1`` keypoints
    version u32, count u32, dim u32, echo_len u32, echo; per keypoint a
    56-byte record: frame i32, x f64, y f64, z f64, r f64, tau i32, eta
    f64, descriptor offset u64 (row into the block that follows); then
    ``count * dim`` f64.
``HCB1`` codebook
    version u32, k u32, dim u32, echo_len u32, echo, ``k * dim`` f64.
``HSV1`` classifier
    version u32, n_classes u32, n_support u32, dim u32, kernel u32 (0 hik,
    1 linear), C f64, fallback i64, classes i64[n_classes], bias
    f64[n_classes], coef f64[n_classes * n_support], support
    f64[n_support * dim].
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, MalformedHeaderError, TruncatedPayloadError, VersionMismatchError
from .geom import Frame, PointCloudSequence
from .learn import ClassifierModel, Codebook

VERSION = 1
_KERNEL_IDS = {"hik": 0, "linear": 1}


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 1.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0 and self.depth_scale > 0):
            raise ConfigError("intrinsics need fx, fy, depth_scale > 0")

    @classmethod
    def from_file(cls, path):
        kv = read_keyvalue(path)
        try:
            return cls(**{k: float(kv[k]) for k in ("fx", "fy", "cx", "cy", "depth_scale")})
        except KeyError as e:
            raise ConfigError(f"{path}: missing intrinsics key {e.args[0]}") from None

    def to_file(self, path):
        Path(path).write_text("".join(f"{k}={getattr(self, k)!r}\n"
                                      for k in ("fx", "fy", "cx", "cy", "depth_scale")))


def read_keyvalue(path):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        k = k.strip()
        if k in out:
            raise ConfigError(f"{path}:{n}: duplicate key {k!r}")
        out[k] = v.strip()
    return out


def depth_to_cloud(depth, intrinsics: CameraIntrinsics, index: int = 1) -> Frame:
    """Back-project a depth image; pixels with raw depth <= 0 are skipped.

    Pixel ``(u, v)`` is column ``u``, row ``v``.
    """
    d = np.asarray(depth)
    if d.ndim != 2 or d.shape[0] == 0 or d.shape[1] == 0:
        raise DataError("depth image must be a non-empty H x W array")
    v, u = np.nonzero(d > 0)
    z = d[v, u].astype(np.float64) * intrinsics.depth_scale
    x = (u - intrinsics.cx) * z / intrinsics.fx
    y = (v - intrinsics.cy) * z / intrinsics.fy
    return Frame(index, np.stack([x, y, z], axis=1))


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data, self.pos, self.what = data, 0, what

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise TruncatedPayloadError(f"{self.what}: truncated payload")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def array(self, count, dtype="<f8"):
        dt = np.dtype(dtype)
        size = count * dt.itemsize
        if self.pos + size > len(self.data):
            raise TruncatedPayloadError(f"{self.what}: truncated payload")
        out = np.frombuffer(self.data, dtype=dt, count=count, offset=self.pos).astype(dt.newbyteorder("="))
        self.pos += size
        return out

    def text(self):
        (n,) = self.take("<I")
        if self.pos + n > len(self.data):
            raise TruncatedPayloadError(f"{self.what}: truncated payload")
        s = self.data[self.pos:self.pos + n].decode("utf-8")
        self.pos += n
        return s

    def finish(self):
        if self.pos != len(self.data):
            raise MalformedHeaderError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _open(path, magic: bytes):
    data = Path(path).read_bytes()
    r = _Reader(data, str(path))
    if len(data) < 8:
        if data[:4] == magic[:len(data[:4])] and len(data) >= 4:
            raise TruncatedPayloadError(f"{path}: truncated payload")
        raise MalformedHeaderError(f"{path}: not a {magic.decode()} file")
    if data[:4] != magic:
        raise MalformedHeaderError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    r.pos = 4
    (ver,) = r.take("<I")
    if ver != VERSION:
        raise VersionMismatchError(f"{path}: format version {ver}, this build reads {VERSION}")
    return r


def _echo_bytes(echo):
    if isinstance(echo, dict):
        echo = "".join(f"{k}={v}\n" for k, v in echo.items())
    b = (echo or "").encode("utf-8")
    return struct.pack("<I", len(b)) + b


def save_sequence(seq: PointCloudSequence, path):
    flags = (1 if seq.subject_id is not None else 0) | (2 if seq.action_label is not None else 0)
    parts = [b"HPC1", struct.pack("<IIdI", VERSION, seq.n_f, float(seq.frame_rate), flags)]
    if flags & 1:
        parts.append(struct.pack("<i", seq.subject_id))
    if flags & 2:
        parts.append(struct.pack("<i", seq.action_label))
    for f in seq.frames:
        parts.append(struct.pack("<iI", f.index, len(f)))
        parts.append(np.ascontiguousarray(f.points, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_sequence(path, intrinsics: CameraIntrinsics | None = None) -> PointCloudSequence:
    """Read an ``HPC1`` file, or a directory of 16-bit PGM depth frames.

    A PGM directory needs ``intrinsics.txt`` (``fx, fy, cx, cy,
    depth_scale``) unless ``intrinsics`` is given; frames are the ``*.pgm``
    files in name order, numbered from 1.
    """
    path = Path(path)
    if path.is_dir():
        return load_pgm_directory(path, intrinsics)
    r = _open(path, b"HPC1")
    n_f, rate, flags = r.take("<IdI")
    subject = r.take("<i")[0] if flags & 1 else None
    label = r.take("<i")[0] if flags & 2 else None
    frames = []
    for _ in range(n_f):
        idx, count = r.take("<iI")
        frames.append(Frame(idx, r.array(count * 3).reshape(count, 3)))
    r.finish()
    return PointCloudSequence(tuple(frames), rate, subject, label)


def read_pgm(path):
    """Binary (P5) PGM reader; 16-bit samples are big-endian per the format."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedHeaderError(f"{path}: incomplete PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise MalformedHeaderError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    need = w * h * np.dtype(dtype).itemsize
    if len(data) - pos < need:
        raise TruncatedPayloadError(f"{path}: truncated payload")
    return np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(np.uint16)


def write_pgm(path, image):
    img = np.asarray(image)
    h, w = img.shape
    header = f"P5\n{w} {h}\n65535\n".encode()
    Path(path).write_bytes(header + img.astype(">u2").tobytes())


def load_pgm_directory(path, intrinsics: CameraIntrinsics | None = None,
                       frame_rate: float = 30.0) -> PointCloudSequence:
    path = Path(path)
    if intrinsics is None:
        side = path / "intrinsics.txt"
        if not side.exists():
            raise ConfigError(f"{path}: no intrinsics.txt sidecar and no intrinsics given")
        intrinsics = CameraIntrinsics.from_file(side)
    files = sorted(path.glob("*.pgm"))
    if not files:
        raise DataError(f"{path}: no .pgm frames")
    frames = [depth_to_cloud(read_pgm(f), intrinsics, i) for i, f in enumerate(files, start=1)]
    return PointCloudSequence(tuple(frames), frame_rate)


def save_descriptors(path, rows, subjects=None, labels=None, m=20, gamma=0, echo=None):
    X = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    n, dim = X.shape
    subjects = np.full(n, -1) if subjects is None else np.asarray(subjects)
    labels = np.full(n, -1) if labels is None else np.asarray(labels)
    parts = [b"HPD1", struct.pack("<IIIII", VERSION, n, dim, m, gamma), _echo_bytes(echo)]
    tags = np.stack([subjects, labels], axis=1).astype("<i4")
    parts += [tags.tobytes(), X.astype("<f8").tobytes()]
    Path(path).write_bytes(b"".join(parts))


def load_descriptors(path):
    """Returns ``(rows, subjects, labels, meta)``."""
    r = _open(path, b"HPD1")
    n, dim, m, gamma = r.take("<IIII")
    echo = r.text()
    tags = r.array(2 * n, "<i4").reshape(n, 2)
    X = r.array(n * dim).reshape(n, dim)
    r.finish()
    return X, tags[:, 0], tags[:, 1], {"m": m, "gamma": gamma, "echo": echo}


_KP = struct.Struct("<iddddidQ")


def save_keypoints(path, keypoints, descriptors, echo=None, csv_path=None):
    D = np.asarray(descriptors, dtype=np.float64).reshape(len(keypoints), -1)
    dim = D.shape[1] if len(keypoints) else 0
    parts = [b"HPK1", struct.pack("<III", VERSION, len(keypoints), dim), _echo_bytes(echo)]
    for i, kp in enumerate(keypoints):
        parts.append(_KP.pack(kp.t, *map(float, kp.p), kp.r, kp.tau, kp.eta, i))
    parts.append(D.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))
    if csv_path is not None:
        write_keypoints_csv(csv_path, keypoints)


def write_keypoints_csv(path, keypoints):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "x", "y", "z", "r", "tau", "eta", "descriptor_offset"])
        for i, kp in enumerate(keypoints):
            w.writerow([kp.t, repr(float(kp.p[0])), repr(float(kp.p[1])), repr(float(kp.p[2])),
                        repr(kp.r), kp.tau, repr(kp.eta), i])


def load_keypoints(path):
    """Returns ``(records, descriptors, echo)``; records is a structured array."""
    r = _open(path, b"HPK1")
    count, dim = r.take("<II")
    echo = r.text()
    rec_dtype = np.dtype([("frame", "<i4"), ("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("r", "<f8"),
                          ("tau", "<i4"), ("eta", "<f8"), ("offset", "<u8")])
    assert rec_dtype.itemsize == _KP.size
    size = count * _KP.size
    if r.pos + size > len(r.data):
        raise TruncatedPayloadError(f"{path}: truncated payload")
    recs = np.frombuffer(r.data, dtype=rec_dtype, count=count, offset=r.pos).copy()
    r.pos += size
    D = r.array(count * dim).reshape(count, dim)
    r.finish()
    return recs, D, echo


def save_codebook(path, cb: Codebook, echo=None):
    k, dim = cb.centers.shape
    Path(path).write_bytes(b"".join([b"HCB1", struct.pack("<III", VERSION, k, dim), _echo_bytes(echo),
                                     cb.centers.astype("<f8").tobytes()]))


def load_codebook(path) -> Codebook:
    r = _open(path, b"HCB1")
    k, dim = r.take("<II")
    r.text()
    C = r.array(k * dim).reshape(k, dim)
    r.finish()
    return Codebook(C)


def save_model(path, model: ClassifierModel):
    nc, ns = model.coef.shape
    dim = model.support.shape[1]
    parts = [b"HSV1", struct.pack("<IIIIIdq", VERSION, nc, ns, dim, _KERNEL_IDS[model.kernel],
                                  model.C, model.fallback),
             np.asarray(model.classes, dtype="<i8").tobytes(),
             model.bias.astype("<f8").tobytes(), model.coef.astype("<f8").tobytes(),
             model.support.astype("<f8").tobytes()]
    Path(path).write_bytes(b"".join(parts))


def load_model(path) -> ClassifierModel:
    r = _open(path, b"HSV1")
    nc, ns, dim, kid, C, fallback = r.take("<IIIIdq")
    kernels = {v: k for k, v in _KERNEL_IDS.items()}
    if kid not in kernels:
        raise MalformedHeaderError(f"{path}: unknown kernel id {kid}")
    classes = r.array(nc, "<i8")
    bias = r.array(nc)
    coef = r.array(nc * ns).reshape(nc, ns)
    support = r.array(ns * dim).reshape(ns, dim)
    r.finish()
    return ClassifierModel(classes, support, coef, bias, kernels[kid], C, fallback)
