"""Model container.

Layout (all integers little-endian):

    offset  size  field
    0       8     magic b"NDMLP\\x00\\x00\\x00"
    8       2     format version (uint16, currently 1)
    10      4     header length H (uint32)
    14      H     UTF-8 JSON header: input_dim, hidden_dims, output_dim,
                  dtype ("<f4" or "<f8"), init_seed, loss
    14+H    ...   per layer: weight matrix (fan_in x fan_out, row-major),
                  then bias vector, in header dtype
    end-32  32    SHA-256 of every preceding byte
"""

import hashlib
import json
import logging
import os
import struct

import numpy as np

from .error_handler import (
    ErrorCode,
    ModelChecksumError,
    ModelFileError,
    ModelTruncatedError,
    ModelVersionError
)
from .neural import MlpArch, MlpModel

logger = logging.getLogger(__name__)

MAGIC = b"NDMLP\x00\x00\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct('<8sHI')
_DIGEST_SIZE = 32


def save_model(model: MlpModel, path: str) -> None:
    dtype = np.dtype(model.dtype).newbyteorder('<')
    header = json.dumps({
        'input_dim': model.arch.input_dim,
        'hidden_dims': list(model.arch.hidden_dims),
        'output_dim': model.arch.output_dim,
        'dtype': dtype.str,
        'init_seed': model.init_seed,
        'loss': model.loss
    }, sort_keys=True).encode('utf-8')

    body = bytearray(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
    body += header
    for w, b in zip(model.weights, model.biases):
        body += np.ascontiguousarray(w, dtype=dtype).tobytes(order='C')
        body += np.ascontiguousarray(b, dtype=dtype).tobytes(order='C')
    body += hashlib.sha256(body).digest()

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'wb') as f:
        f.write(body)
    logger.info(f"Saved model {model.arch.dims} to {path}")


def load_model(path: str) -> MlpModel:
    with open(path, 'rb') as f:
        data = f.read()

    if len(data) < _PREFIX.size:
        raise ModelTruncatedError(f"{path}: file too short for a model header", ErrorCode.TRUNCATED_FILE)
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ModelFileError(f"{path}: not a model file (bad magic)", ErrorCode.BAD_MAGIC)
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}",
                                ErrorCode.VERSION_MISMATCH)

    offset = _PREFIX.size + header_len
    if len(data) < offset:
        raise ModelTruncatedError(f"{path}: header truncated", ErrorCode.TRUNCATED_FILE)
    try:
        header = json.loads(data[_PREFIX.size:offset].decode('utf-8'))
        arch = MlpArch(header['input_dim'], tuple(header['hidden_dims']), header['output_dim'])
        dtype = np.dtype(header['dtype'])
    except (ValueError, KeyError, TypeError) as e:
        raise ModelFileError(f"{path}: unreadable header: {e}", ErrorCode.BAD_MAGIC) from e

    payload = sum((fan_in * fan_out + fan_out) * dtype.itemsize for fan_in, fan_out in arch.layer_shapes)
    if len(data) < offset + payload + _DIGEST_SIZE:
        raise ModelTruncatedError(
            f"{path}: expected {offset + payload + _DIGEST_SIZE} bytes, found {len(data)}",
            ErrorCode.TRUNCATED_FILE
        )
    end = offset + payload
    if hashlib.sha256(data[:end]).digest() != data[end:end + _DIGEST_SIZE]:
        raise ModelChecksumError(f"{path}: checksum mismatch", ErrorCode.CHECKSUM_FAILED)

    weights, biases = [], []
    for fan_in, fan_out in arch.layer_shapes:
        w = np.frombuffer(data, dtype=dtype, count=fan_in * fan_out, offset=offset)
        offset += w.nbytes
        b = np.frombuffer(data, dtype=dtype, count=fan_out, offset=offset)
        offset += b.nbytes
        weights.append(w.reshape(fan_in, fan_out).astype(dtype.newbyteorder('='), copy=True))
        biases.append(b.astype(dtype.newbyteorder('='), copy=True))

    return MlpModel(arch=arch, weights=weights, biases=biases,
                    init_seed=int(header.get('init_seed', 0)), loss=header.get('loss', 'bce'))
