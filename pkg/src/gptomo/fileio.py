"""Image and sinogram serialization.

Formats, defined bit-exactly:

- PGM: "P2" (ASCII) or "P5" (binary) with maxval 255 or 65535; P5 samples
  above 255 are two bytes, most significant first. Values map linearly to
  [0, 1] on load by dividing by maxval.
- PNG: 8- or 16-bit single-channel grayscale via Pillow; other modes are
  rejected with a diagnosis.
- Sinogram CSV: header ``theta_index,tau_index,value`` then one row per
  measurement in angle-major order; values printed with %.17g, which
  round-trips float64 exactly.
- ``.npy`` (NumPy format v1) is accepted everywhere as an exact binary
  fast path.

All writes go through a temp file and an atomic rename, so readers never
observe a half-written file.
"""

from __future__ import annotations

import os
import tempfile
from typing import NamedTuple

import numpy as np
from PIL import Image

from .geometry import Grid
from .phantoms import ObjectField


def _atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


def atomic_write_bytes(path, data: bytes) -> None:
    _atomic_write(path, data)


def atomic_save_npy(path, array: np.ndarray) -> None:
    import io

    buf = io.BytesIO()
    np.save(buf, np.asarray(array))
    _atomic_write(path, buf.getvalue())


# -- quantized image files -----------------------------------------------


def _quantize(values: np.ndarray, scaling, maxval: int) -> np.ndarray:
    values = np.asarray(getattr(values, "values", values), dtype=float)
    if values.ndim != 2:
        raise ValueError("expected a 2-d image")
    if scaling == "minmax":
        lo, hi = float(values.min()), float(values.max())
        if hi == lo:
            # Degenerate range: a constant image maps to all zeros.
            return np.zeros(values.shape, dtype=np.uint32)
    else:
        lo, hi = (float(scaling[0]), float(scaling[1]))
        if not (hi > lo):
            raise ValueError(f"fixed scaling range must have hi > lo, got {scaling!r}")
    scaled = (np.clip(values, lo, hi) - lo) / (hi - lo)
    return np.rint(scaled * maxval).astype(np.uint32)


def save_pgm(path, values: np.ndarray, scaling="minmax", maxval: int = 65535,
             binary: bool = True) -> None:
    """Write a PGM file (P5 raw by default, P2 ASCII otherwise)."""
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    q = _quantize(values, scaling, maxval)
    h, w = q.shape
    if binary:
        header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
        payload = q.astype(">u2" if maxval > 255 else "u1").tobytes()
        atomic_write_bytes(path, header + payload)
    else:
        rows = "\n".join(" ".join(str(v) for v in row) for row in q)
        atomic_write_text(path, f"P2\n{w} {h}\n{maxval}\n{rows}\n")


def save_png(path, values: np.ndarray, scaling="minmax", bits: int = 16) -> None:
    """Write an 8- or 16-bit grayscale PNG."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = (1 << bits) - 1
    q = _quantize(values, scaling, maxval)
    if bits == 8:
        img = Image.fromarray(q.astype(np.uint8), mode="L")
    else:
        img = Image.fromarray(q.astype(np.uint16))
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.fspath(path)) or ".",
                               prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, os.fspath(path))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_image(path, values: np.ndarray, scaling="minmax") -> None:
    """Write an image by extension: .pgm, .png, or .npy (exact values)."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".pgm":
        save_pgm(path, values, scaling)
    elif ext == ".png":
        save_png(path, values, scaling)
    elif ext == ".npy":
        atomic_save_npy(path, np.asarray(getattr(values, "values", values), dtype=float))
    else:
        raise ValueError(f"unsupported image extension {ext!r}; use .pgm, .png, or .npy")


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P2", b"P5"):
        raise OSError(f"{path}: not a PGM file (magic {data[:2]!r})")
    binary = data[:2] == b"P5"

    # Header tokens: magic, width, height, maxval; '#' starts a comment.
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise OSError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if not (0 < maxval < 65536):
        raise OSError(f"{path}: invalid PGM maxval {maxval}")

    if binary:
        pos += 1  # single whitespace byte after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        count = width * height
        if len(data) - pos < count * (2 if maxval > 255 else 1):
            raise OSError(f"{path}: truncated PGM payload")
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    else:
        raw = np.array(data[pos:].split(), dtype=float)
        if raw.size != width * height:
            raise OSError(f"{path}: expected {width * height} samples, found {raw.size}")
    return raw.astype(float).reshape(height, width) / maxval


def _read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        mode = img.mode
        if mode == "L":
            return np.asarray(img, dtype=float) / 255.0
        if mode in ("I;16", "I;16B"):
            return np.asarray(img, dtype=float) / 65535.0
        if mode == "I":
            arr = np.asarray(img, dtype=float)
            return arr / 65535.0
        raise OSError(
            f"{path}: unsupported PNG mode {mode!r}; expected 8- or 16-bit grayscale"
        )


def load_image_file(path) -> np.ndarray:
    """Read a grayscale image as floats in [0, 1]."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".pgm":
        return _read_pgm(path)
    if ext == ".png":
        return _read_png(path)
    if ext == ".npy":
        arr = np.load(path)
        if arr.ndim != 2:
            raise OSError(f"{path}: expected a 2-d array, got shape {arr.shape}")
        return np.asarray(arr, dtype=float)
    raise OSError(f"{path}: unsupported image extension {ext!r}")


def area_resample(img: np.ndarray, n: int) -> np.ndarray:
    """Exact area-average resample of a 2-d image to n-by-n.

    Linear interpolation of the image's 2-d cumulative sum gives the exact
    integral over fractional output cells, so any input/output size ratio
    averages correctly.
    """
    from scipy.ndimage import map_coordinates

    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("expected a 2-d image")
    if n < 1:
        raise ValueError("target size must be >= 1")
    h, w = img.shape
    cum = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=cum[1:, 1:])
    ys = np.linspace(0.0, h, n + 1)
    xs = np.linspace(0.0, w, n + 1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    corner = map_coordinates(cum, [yy.ravel(), xx.ravel()], order=1).reshape(n + 1, n + 1)
    block = corner[1:, 1:] - corner[:-1, 1:] - corner[1:, :-1] + corner[:-1, :-1]
    cell_area = (h / n) * (w / n)
    return block / cell_area


def load_grayscale(path, n: int | None = None, p: float = 1.0) -> ObjectField:
    """Load a grayscale image, optionally resampled, as an ObjectField.

    The image must be square when n is omitted. ``p`` sets the physical
    pixel side of the resulting grid.
    """
    values = load_image_file(path)
    if n is None:
        if values.shape[0] != values.shape[1]:
            raise OSError(f"{path}: non-square image {values.shape} needs an explicit n")
        n = values.shape[0]
    if values.shape != (n, n):
        values = area_resample(values, n)
    return ObjectField(Grid(int(n), float(p)), values)


# -- sinograms -------------------------------------------------------------


class SinogramData(NamedTuple):
    y: np.ndarray
    n_theta: int | None
    n_tau: int | None


def save_sinogram(path, y: np.ndarray, n_tau: int) -> None:
    """Write a sinogram by extension: .csv (indexed text) or .npy (exact)."""
    y = np.asarray(y, dtype=float)
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".npy":
        atomic_save_npy(path, y)
        return
    if ext != ".csv":
        raise ValueError(f"unsupported sinogram extension {ext!r}; use .csv or .npy")
    if y.size % n_tau != 0:
        raise ValueError(f"sinogram length {y.size} is not a multiple of n_tau={n_tau}")
    lines = ["theta_index,tau_index,value"]
    for t, value in enumerate(y):
        lines.append(f"{t // n_tau},{t % n_tau},{value:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_sinogram(path) -> SinogramData:
    """Read a sinogram written by :func:`save_sinogram`."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".npy":
        y = np.load(path)
        return SinogramData(np.asarray(y, dtype=float).ravel(), None, None)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "theta_index,tau_index,value":
            raise OSError(f"{path}: unrecognized sinogram header {header!r}")
        rows = [line.split(",") for line in fh.read().split()]
    if not rows:
        raise OSError(f"{path}: empty sinogram")
    theta = np.array([int(r[0]) for r in rows])
    tau = np.array([int(r[1]) for r in rows])
    y = np.array([float(r[2]) for r in rows])
    n_tau = int(tau.max()) + 1
    n_theta = int(theta.max()) + 1
    if y.size != n_theta * n_tau or np.any(theta * n_tau + tau != np.arange(y.size)):
        raise OSError(f"{path}: sinogram rows are not a dense angle-major enumeration")
    return SinogramData(y, n_theta, n_tau)
