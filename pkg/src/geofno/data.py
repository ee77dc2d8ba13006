"""Persistence: the GFNO binary array format, dataset bundles, checkpoints.

Every array is one self-describing little-endian blob:

    magic "GFNO" | version u32 | dtype u8 | rank u8 | dims u64[rank] | payload

dtype codes: 0 float64, 1 complex128, 2 int64, 3 bool.  A dataset bundle is
a directory holding a UTF-8 key=value manifest plus one blob per array; a
checkpoint is a single file with a key=value header, a "---" separator and
a declared sequence of blobs.  All round trips are byte-exact.
"""

from __future__ import annotations

import hashlib
import io
import os

import numpy as np

from . import geometry as G
from .errors import FormatError
from .geometry import Geometry
from .model import GeoFnoModel, ModelConfig
from .tensor import AdamState, Tensor

FORMAT_VERSION = 1
MAGIC = b"GFNO"

_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.complex128): 1,
                np.dtype(np.int64): 2, np.dtype(np.bool_): 3}
_CODE_DTYPES = {0: np.float64, 1: np.complex128, 2: np.int64, 3: np.bool_}


# ------------------------------------------------------------------ blob level

def write_array(stream, arr):
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        if np.issubdtype(arr.dtype, np.integer):
            arr = arr.astype(np.int64)
        elif np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        else:
            raise FormatError(f"unsupported array dtype {arr.dtype}")
    stream.write(MAGIC)
    stream.write(np.uint32(FORMAT_VERSION).tobytes())
    stream.write(np.uint8(_DTYPE_CODES[arr.dtype]).tobytes())
    stream.write(np.uint8(arr.ndim).tobytes())
    stream.write(np.asarray(arr.shape, dtype=np.uint64).tobytes())
    stream.write(arr.tobytes())


def read_array(stream):
    base = stream.tell()
    magic = stream.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=base)
    ver = np.frombuffer(stream.read(4), dtype=np.uint32)
    if len(ver) != 1 or int(ver[0]) != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {ver}", offset=base + 4)
    head = stream.read(2)
    if len(head) != 2:
        raise FormatError("truncated header", offset=base + 8)
    code, rank = int(head[0]), int(head[1])
    if code not in _CODE_DTYPES:
        raise FormatError(f"unknown dtype code {code}", offset=base + 8)
    dims_raw = stream.read(8 * rank)
    if len(dims_raw) != 8 * rank:
        raise FormatError("truncated dimension list", offset=base + 10)
    dims = tuple(int(d) for d in np.frombuffer(dims_raw, dtype=np.uint64))
    dtype = np.dtype(_CODE_DTYPES[code])
    nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = stream.read(nbytes)
    if len(payload) != nbytes:
        raise FormatError("truncated payload", offset=base + 10 + 8 * rank)
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def save_array(path, arr):
    with open(path, "wb") as f:
        write_array(f, arr)


def load_array(path):
    with open(path, "rb") as f:
        return read_array(f)


# --------------------------------------------------------------- key=value text

def write_manifest(path, entries):
    with open(path, "w", encoding="utf-8") as f:
        for k, v in entries.items():
            f.write(f"{k}={v}\n")


def read_manifest(path):
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"malformed manifest line {line!r}")
            k, v = line.split("=", 1)
            out[k] = v
    return out


def config_hash(entries):
    text = "".join(f"{k}={entries[k]}\n" for k in sorted(entries))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# ------------------------------------------------------------------- bundles

class SampleRecord:
    """One (geometry, input field, output field, mask) record."""

    __slots__ = ("geometry", "inputs", "outputs", "mask")

    def __init__(self, geometry, inputs, outputs, mask=None):
        self.geometry = geometry
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.outputs = np.asarray(outputs, dtype=np.float64)
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)


class DatasetBundle:
    """Persisted collection of samples plus manifest metadata."""

    def __init__(self, manifest, records):
        self.manifest = dict(manifest)
        self.records = list(records)

    def __len__(self):
        return len(self.records)

    @property
    def io_mode(self):
        return self.manifest.get("io_mode", "point_cloud")


def save_bundle(bundle, path):
    os.makedirs(path, exist_ok=True)
    manifest = dict(bundle.manifest)
    manifest["format_version"] = str(FORMAT_VERSION)
    manifest["num_samples"] = str(len(bundle.records))
    write_manifest(os.path.join(path, "manifest.txt"), manifest)
    for i, rec in enumerate(bundle.records):
        stem = os.path.join(path, f"sample_{i:05d}")
        save_array(stem + ".points.gfno", rec.geometry.points.data)
        save_array(stem + ".input.gfno", rec.inputs)
        save_array(stem + ".output.gfno", rec.outputs)
        if rec.mask is not None:
            save_array(stem + ".mask.gfno", rec.mask)
        if rec.geometry.design_params is not None:
            save_array(stem + ".design.gfno", rec.geometry.design_params.data)


def load_bundle(path):
    manifest = read_manifest(os.path.join(path, "manifest.txt"))
    if manifest.get("format_version") != str(FORMAT_VERSION):
        raise FormatError(
            f"bundle format version {manifest.get('format_version')} needs an upgrade")
    n = int(manifest.get("num_samples", "0"))
    kind = G.STRUCTURED if manifest.get("io_mode") in ("structured", "spatiotemporal") \
        else G.POINT_CLOUD
    records = []
    for i in range(n):
        stem = os.path.join(path, f"sample_{i:05d}")
        points = load_array(stem + ".points.gfno")
        inputs = load_array(stem + ".input.gfno")
        outputs = load_array(stem + ".output.gfno")
        mask = load_array(stem + ".mask.gfno") if os.path.exists(stem + ".mask.gfno") else None
        design = load_array(stem + ".design.gfno") \
            if os.path.exists(stem + ".design.gfno") else None
        geo = Geometry(kind, points, design_params=design, mask=mask)
        records.append(SampleRecord(geo, inputs, outputs, mask))
    return DatasetBundle(manifest, records)


# ----------------------------------------------------------------- checkpoints

def _rng_state_to_header(state):
    s = state["state"]
    return {
        "rng.bit_generator": state["bit_generator"],
        "rng.state": format(s["state"], "x"),
        "rng.inc": format(s["inc"], "x"),
        "rng.has_uint32": str(state["has_uint32"]),
        "rng.uinteger": str(state["uinteger"]),
    }


def _rng_state_from_header(h):
    return {
        "bit_generator": h["rng.bit_generator"],
        "state": {"state": int(h["rng.state"], 16), "inc": int(h["rng.inc"], 16)},
        "has_uint32": int(h["rng.has_uint32"]),
        "uinteger": int(h["rng.uinteger"]),
    }


def save_checkpoint(model, path, optimizer_state=None, rng_state=None,
                    epoch=None, history=None):
    """Serialize a model (plus optional optimizer/RNG/progress) to one file."""
    header = {"kind": "geofno-checkpoint", "format_version": str(FORMAT_VERSION)}
    for k, v in model.config.to_dict().items():
        if k == "latent_shape":
            v = ",".join(str(s) for s in v)
        header[f"config.{k}"] = str(v)
    names = model.param_names()
    arrays = [(f"param.{n}", model.params[n].data) for n in names]
    if optimizer_state is not None:
        header["adam.step"] = str(optimizer_state.step)
        for i, n in enumerate(names):
            arrays.append((f"adam.m.{n}", optimizer_state.m[i]))
            arrays.append((f"adam.v.{n}", optimizer_state.v[i]))
    if rng_state is not None:
        header.update(_rng_state_to_header(rng_state))
    if epoch is not None:
        header["epoch"] = str(epoch)
    if history is not None:
        for key, values in history.items():
            arrays.append((f"history.{key}", np.asarray(values, dtype=np.float64)))
    header["arrays"] = ",".join(name for name, _ in arrays)
    buf = io.BytesIO()
    for k in header:
        buf.write(f"{k}={header[k]}\n".encode("utf-8"))
    buf.write(b"---\n")
    for _, arr in arrays:
        write_array(buf, arr)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Restore (model, extras).  extras holds optimizer state, rng state,
    epoch and history when present.  Nothing is returned on corrupt input."""
    with open(path, "rb") as f:
        payload = f.read()
    sep = payload.find(b"---\n")
    if sep < 0:
        raise FormatError("missing checkpoint header separator")
    header = {}
    for line in payload[:sep].decode("utf-8").splitlines():
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"malformed checkpoint header line {line!r}")
        k, v = line.split("=", 1)
        header[k] = v
    if header.get("format_version") != str(FORMAT_VERSION):
        raise FormatError(
            f"checkpoint format version {header.get('format_version')} requires "
            "an upgraded reader")
    stream = io.BytesIO(payload[sep + 4:])
    arrays = {}
    for name in header.get("arrays", "").split(","):
        if name:
            arrays[name] = read_array(stream)

    cfg_d = {}
    for k, v in header.items():
        if not k.startswith("config."):
            continue
        key = k[len("config."):]
        if key == "latent_shape":
            cfg_d[key] = tuple(int(s) for s in v.split(","))
        elif key in ("dim", "in_channels", "out_channels", "layers", "width",
                     "k_max", "temporal_k_max", "deform_freqs", "deform_hidden",
                     "cond_dim", "seed"):
            cfg_d[key] = int(v)
        elif key == "deform":
            cfg_d[key] = v == "True"
        else:
            cfg_d[key] = v
    model = GeoFnoModel(ModelConfig(**cfg_d))
    tensors = []
    for n in model.param_names():
        key = f"param.{n}"
        if key not in arrays:
            raise FormatError(f"checkpoint is missing parameter {n}")
        if arrays[key].shape != model.params[n].shape:
            raise FormatError(f"parameter {n} has shape {arrays[key].shape}, "
                              f"expected {model.params[n].shape}")
        tensors.append(Tensor(arrays[key], requires_grad=True))
    model.load_params(tensors)

    extras = {"epoch": int(header["epoch"]) if "epoch" in header else None}
    if "adam.step" in header:
        state = AdamState.__new__(AdamState)
        state.step = int(header["adam.step"])
        state.m = [arrays[f"adam.m.{n}"] for n in model.param_names()]
        state.v = [arrays[f"adam.v.{n}"] for n in model.param_names()]
        extras["optimizer_state"] = state
    if "rng.state" in header:
        extras["rng_state"] = _rng_state_from_header(header)
    history = {}
    for name in arrays:
        if name.startswith("history."):
            history[name[len("history."):]] = arrays[name]
    if history:
        extras["history"] = history
    return model, extras
