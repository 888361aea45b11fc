"""
Formato binario de checkpoint.

    b"PNPD" | u32 versión | u32 arquitectura | u32 modo de entrada
    | u32 n_tensores | por tensor: u16 len + nombre utf-8, u32 ndim, u32 dims...
    | datos float64 little-endian en el mismo orden | u32 CRC32 de todo lo anterior

Todos los enteros son little-endian.
"""
import logging
import struct
import zlib
from pathlib import Path
from typing import List, Tuple

import numpy as np

from pnpdepth.errors import CheckpointError, ConfigurationError

from .networks import Arch, InputMode, Model, build

logger = logging.getLogger(__name__)

MAGIC = b'PNPD'
VERSION = 1

ARCH_CODES = {Arch.PLAIN_CNN: 1, Arch.ENCDEC: 2, Arch.COARSE_FINE: 3}
MODE_CODES = {InputMode.RGB: 1, InputMode.SD: 2, InputMode.RGB_SD: 3}


def dumps(model: Model) -> bytes:
    if model.arch not in ARCH_CODES:
        raise ConfigurationError(f"cannot serialize a {model.arch.value} model")
    params = model.parameters()
    header = bytearray(MAGIC)
    header += struct.pack('<IIII', VERSION, ARCH_CODES[model.arch], MODE_CODES[model.input_mode], len(params))
    for name, tensor in params:
        encoded = name.encode('utf-8')
        header += struct.pack('<H', len(encoded)) + encoded
        header += struct.pack('<I', tensor.data.ndim)
        header += struct.pack(f"<{tensor.data.ndim}I", *tensor.shape)
    body = bytes(header) + b''.join(tensor.tobytes() for _, tensor in params)
    return body + struct.pack('<I', zlib.crc32(body) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint corrupt: truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes) -> Model:
    if len(data) < len(MAGIC) + 20 or data[:4] != MAGIC:
        raise CheckpointError("checkpoint corrupt: bad magic")
    body, (crc,) = data[:-4], struct.unpack('<I', data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint corrupt: CRC mismatch")
    reader = _Reader(body)
    reader.take(4)
    version, arch_code, mode_code, count = reader.unpack('<IIII')
    if version != VERSION:
        raise CheckpointError(f"checkpoint corrupt: unsupported version {version}")
    arch = {v: k for k, v in ARCH_CODES.items()}.get(arch_code)
    mode = {v: k for k, v in MODE_CODES.items()}.get(mode_code)
    if arch is None or mode is None:
        raise CheckpointError(f"checkpoint corrupt: unknown architecture {arch_code} / mode {mode_code}")

    entries: List[Tuple[str, Tuple[int, ...]]] = []
    for _ in range(count):
        (length,) = reader.unpack('<H')
        try:
            name = reader.take(length).decode('utf-8')
        except UnicodeDecodeError:
            raise CheckpointError("checkpoint corrupt: bad tensor name") from None
        (ndim,) = reader.unpack('<I')
        entries.append((name, reader.unpack(f"<{ndim}I")))

    model = build(arch, mode)
    params = model.parameters()
    if [(n, t.shape) for n, t in params] != [(n, tuple(s)) for n, s in entries]:
        raise CheckpointError("checkpoint corrupt: tensor layout does not match the architecture")
    for _, tensor in params:
        raw = reader.take(8 * tensor.size)
        tensor.assign(np.frombuffer(raw, dtype='<f8').reshape(tensor.shape))
    if reader.pos != len(body):
        raise CheckpointError("checkpoint corrupt: trailing bytes")
    return model


def save(model: Model, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(dumps(model))
    except OSError as e:
        raise ConfigurationError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Checkpoint {model.arch.value}/{model.input_mode.value} guardado en {path}")
    return path


def load(path) -> Model:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    model = loads(data)
    logger.info(f"Checkpoint {path}: {model}")
    return model
