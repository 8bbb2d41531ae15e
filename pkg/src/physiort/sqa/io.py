"""Model file format: one JSON header line, then the parameters as one
little-endian float32 block in layer order. Language-neutral on purpose;
the console or any other tool can read it with a JSON parser and a
typed-array view.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import PhysiortError
from .model import SqaModel, build_model

FORMAT_NAME = "sqa"
FORMAT_VERSION = 1


class ModelFileError(PhysiortError):
    exit_code = 4


def _param_entries(model: SqaModel):
    for i, layer in enumerate(model.layers):
        params = layer.params()
        if not params:
            continue
        for name in sorted(params):
            yield i, name, params[name]


def save_model(path: str, model: SqaModel) -> None:
    entries = list(_param_entries(model))
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "input_len": model.input_len,
        "n_bins": model.n_bins,
        "encoder_channels": list(model.encoder_channels),
        "decoder_mid": model.decoder_mid,
        "seed": model.seed,
        "dtype": "<f4",
        "params": [{"layer": i, "name": n, "shape": list(a.shape)}
                   for i, n, a in entries],
    }
    blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes()
                    for _, _, a in entries)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("ascii"))
        fh.write(b"\n")
        fh.write(blob)


def load_model(path: str) -> SqaModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ModelFileError("missing header line")
    try:
        header = json.loads(raw[:nl].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"bad header: {exc}") from exc
    if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
        raise ModelFileError("not a recognized model file")
    if header.get("dtype") != "<f4":
        raise ModelFileError(f"unsupported dtype {header.get('dtype')!r}")
    model = build_model(seed=int(header["seed"]),
                        input_len=int(header["input_len"]),
                        encoder_channels=tuple(header["encoder_channels"]),
                        decoder_mid=int(header["decoder_mid"]))
    blob = raw[nl + 1:]
    offset = 0
    entries = list(_param_entries(model))
    declared = header["params"]
    if len(declared) != len(entries):
        raise ModelFileError("parameter list does not match architecture")
    for (i, name, array), meta in zip(entries, declared):
        if meta["layer"] != i or meta["name"] != name or tuple(meta["shape"]) != array.shape:
            raise ModelFileError(
                f"parameter {meta} does not match expected ({i}, {name}, {array.shape})")
        count = array.size
        chunk = blob[offset:offset + 4 * count]
        if len(chunk) != 4 * count:
            raise ModelFileError("parameter block truncated")
        array[...] = np.frombuffer(chunk, dtype="<f4").reshape(array.shape)
        offset += 4 * count
    if offset != len(blob):
        raise ModelFileError("trailing bytes after parameter block")
    return model
