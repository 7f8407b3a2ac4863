"""
File formats for hyperspectral cubes and small tensors.

Cube: a JSON header {width, height, bands, dtype: "f32"|"f64", interleave: "bsq",
optional wavelengths_um} next to a raw little-endian band-sequential payload
(band 1's height x width plane row-major, then band 2, ...). In memory a cube is a
height x width x bands float64 tensor, so mode-3 fibers are pixel spectra.

CSV tensor: first line `dims: I1,I2,...`, then `i,j,...,value` rows with 1-based indices.
Trace CSV: header `iteration,residual`, 1-based iterations.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from src.core.errors import (CubeFormatError, CubeIOError, DimensionError, SizeMismatchError,
                             UnsupportedOrderError)
from src.tensor.base import as_tensor

logger = logging.getLogger(__name__)

DTYPES = {'f32': np.dtype('<f4'), 'f64': np.dtype('<f8')}
INTERLEAVES = ('bsq',)


@dataclass(frozen=True)
class CubeHeader:
    width: int
    height: int
    bands: int
    dtype: str = 'f64'
    interleave: str = 'bsq'
    wavelengths_um: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        for name in ('width', 'height', 'bands'):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise CubeFormatError(f"header field '{name}' must be a positive integer, got {value!r}")
        if self.dtype not in DTYPES:
            raise CubeFormatError(f"unknown element type '{self.dtype}', expected one of {sorted(DTYPES)}")
        if self.interleave not in INTERLEAVES:
            raise CubeFormatError(f"unsupported interleave '{self.interleave}', only band-sequential is supported")
        if self.wavelengths_um is not None:
            wavelengths = tuple(float(w) for w in self.wavelengths_um)
            if len(wavelengths) != self.bands:
                raise CubeFormatError(f"{len(wavelengths)} wavelengths for {self.bands} bands")
            if np.any(np.diff(wavelengths) <= 0):
                raise CubeFormatError("wavelengths must be strictly increasing")
            object.__setattr__(self, 'wavelengths_um', wavelengths)

    @property
    def shape(self):
        return (self.height, self.width, self.bands)

    @property
    def payload_bytes(self):
        return self.height * self.width * self.bands * DTYPES[self.dtype].itemsize

    def to_dict(self):
        d = asdict(self)
        if d['wavelengths_um'] is None:
            del d['wavelengths_um']
        else:
            d['wavelengths_um'] = list(d['wavelengths_um'])
        return d

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in ('width', 'height', 'bands', 'dtype') if k not in d]
        if missing:
            raise CubeFormatError(f"header is missing {missing}")
        return cls(width=d['width'], height=d['height'], bands=d['bands'], dtype=d['dtype'],
                   interleave=d.get('interleave', 'bsq'), wavelengths_um=d.get('wavelengths_um'))


def read_header(header_path):
    try:
        with open(header_path, 'r') as f:
            content = json.load(f)
    except json.JSONDecodeError as exc:
        raise CubeFormatError(f"{header_path}: header is not valid JSON ({exc})") from exc
    except OSError as exc:
        raise CubeIOError(f"{header_path}: {exc}") from exc
    if not isinstance(content, dict):
        raise CubeFormatError(f"{header_path}: header must be a JSON object")
    return CubeHeader.from_dict(content)


def load_cube(header_path, data_path):
    """
    Read a cube as a height x width x bands float64 tensor (float32 payloads are widened).
    """
    header = read_header(header_path)
    try:
        size = os.path.getsize(data_path)
    except OSError as exc:
        raise CubeIOError(f"{data_path}: {exc}") from exc
    if size != header.payload_bytes:
        raise SizeMismatchError(f"{data_path}: {size} bytes on disk, header {header.shape} "
                                f"({header.dtype}) needs {header.payload_bytes}")

    raw = np.fromfile(data_path, dtype=DTYPES[header.dtype])
    cube = np.transpose(raw.reshape(header.bands, header.height, header.width), (1, 2, 0))
    logger.info(f'Loaded cube {header.shape} ({header.dtype}) from {data_path}')
    return cube.astype(np.float64), header


def save_cube(t, header_path, data_path, dtype='f64', wavelengths_um=None):
    """Write a height x width x bands tensor as JSON header + BSQ payload."""
    t = np.asarray(t)
    if t.ndim != 3:
        raise UnsupportedOrderError(f"cubes are third-order (height, width, bands), got order {t.ndim}")
    height, width, bands = t.shape
    header = CubeHeader(width=width, height=height, bands=bands, dtype=dtype, wavelengths_um=wavelengths_um)

    payload = np.ascontiguousarray(np.transpose(t, (2, 0, 1))).astype(DTYPES[dtype])
    try:
        with open(header_path, 'w') as f:
            json.dump(header.to_dict(), f, indent=2)
        payload.tofile(data_path)
    except OSError as exc:
        raise CubeIOError(f"failed writing cube to {header_path} / {data_path}: {exc}") from exc
    return header


def write_tensor_csv(t, path):
    t = as_tensor(t)
    lines = ['dims: ' + ','.join(str(d) for d in t.shape)]
    for flat in range(t.size):
        index = np.unravel_index(flat, t.shape, order='F')
        value = t[index]
        lines.append(','.join(str(i + 1) for i in index) + ',' + repr(float(value)))
    _write_text(path, '\n'.join(lines) + '\n')


def read_tensor_csv(path):
    """Entries not listed are zero."""
    text = _read_text(path).splitlines()
    if not text or not text[0].startswith('dims:'):
        raise CubeFormatError(f"{path}: first line must be 'dims: I1,I2,...'")
    try:
        dims = tuple(int(d) for d in text[0][len('dims:'):].split(','))
    except ValueError as exc:
        raise CubeFormatError(f"{path}: bad dims line '{text[0]}'") from exc
    if min(dims) < 1:
        raise CubeFormatError(f"{path}: extents must be >= 1, got {dims}")

    t = np.zeros(dims)
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(',')
        if len(fields) != len(dims) + 1:
            raise CubeFormatError(f"{path}:{lineno}: expected {len(dims)} indices and a value")
        try:
            index = tuple(int(i) - 1 for i in fields[:-1])
            value = float(fields[-1])
        except ValueError as exc:
            raise CubeFormatError(f"{path}:{lineno}: {exc}") from exc
        if any(not 0 <= i < d for i, d in zip(index, dims)):
            raise CubeFormatError(f"{path}:{lineno}: index {fields[:-1]} out of range for {dims}")
        t[index] = value
    return t


def write_matrix_csv(m, path):
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {m.shape}")
    try:
        np.savetxt(path, m, delimiter=',', fmt='%.17g')
    except OSError as exc:
        raise CubeIOError(f"{path}: {exc}") from exc


def read_matrix_csv(path):
    try:
        return np.loadtxt(path, delimiter=',', ndmin=2)
    except OSError as exc:
        raise CubeIOError(f"{path}: {exc}") from exc
    except ValueError as exc:
        raise CubeFormatError(f"{path}: {exc}") from exc


def write_trace_csv(residuals, path):
    lines = ['iteration,residual'] + [f'{k},{float(r)!r}' for k, r in enumerate(residuals, start=1)]
    _write_text(path, '\n'.join(lines) + '\n')


def read_trace_csv(path):
    text = _read_text(path).splitlines()
    if not text or text[0] != 'iteration,residual':
        raise CubeFormatError(f"{path}: missing 'iteration,residual' header")
    residuals = []
    for lineno, line in enumerate(text[1:], start=2):
        iteration, residual = line.split(',')
        if int(iteration) != lineno - 1:
            raise CubeFormatError(f"{path}:{lineno}: iterations must count up from 1")
        residuals.append(float(residual))
    return residuals


def _write_text(path, text):
    try:
        with open(path, 'w') as f:
            f.write(text)
    except OSError as exc:
        raise CubeIOError(f"{path}: {exc}") from exc


def _read_text(path):
    try:
        with open(path, 'r') as f:
            return f.read()
    except OSError as exc:
        raise CubeIOError(f"{path}: {exc}") from exc
