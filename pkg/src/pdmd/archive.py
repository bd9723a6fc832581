"""Binary model container shared by every surrogate algorithm.

Layout: magic b"PDMDMODEL1\n", u32 version, length-prefixed algorithm
tag, u32 section count, then named sections.  A section is a
length-prefixed UTF-8 name followed by a length-prefixed payload; array
payloads carry a dtype code, the shape, and raw little-endian bytes, so
a save/load round trip reproduces every coefficient bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .dmd import DmdModel
from .errors import DataError
from .latent import MonolithicModel, PartitionedModel
from .reduction import GlobalBasis
from .regression import FittedRegressor, RegressorSpec
from .rkoi import RkoiModel
from .roi import RoiModel

MAGIC = b"PDMDMODEL1\n"
VERSION = 1

_DTYPES = {0: "<f8", 1: "<c16", 2: "<i8"}
_DTYPE_CODES = {"f": 0, "c": 1, "i": 2}


@dataclass(frozen=True)
class ModelArchive:
    """A loaded container: the model plus its tag and metadata."""

    algorithm: str
    model: object
    metadata: dict


def _encode_array(value: np.ndarray) -> bytes:
    value = np.asarray(value)
    code = _DTYPE_CODES.get(value.dtype.kind)
    if code is None:
        raise DataError(f"cannot archive array of dtype {value.dtype}")
    value = np.ascontiguousarray(value, dtype=_DTYPES[code])
    header = struct.pack("<BB", code, value.ndim)
    dims = struct.pack(f"<{value.ndim}I", *value.shape) if value.ndim else b""
    return b"A" + header + dims + value.tobytes()


def _decode_array(payload: bytes) -> np.ndarray:
    code, ndim = struct.unpack_from("<BB", payload, 0)
    if code not in _DTYPES:
        raise DataError(f"unknown array dtype code {code}")
    shape = struct.unpack_from(f"<{ndim}I", payload, 2)
    data = payload[2 + 4 * ndim :]
    return np.frombuffer(data, dtype=_DTYPES[code]).reshape(shape).copy()


def _encode_json(value) -> bytes:
    return b"J" + json.dumps(value, sort_keys=True).encode("utf-8")


def _pack_sections(sections: dict) -> dict:
    packed = {}
    for name, value in sections.items():
        if isinstance(value, np.ndarray):
            packed[name] = _encode_array(value)
        else:
            packed[name] = _encode_json(value)
    return packed


def _section_value(sections: dict, name: str):
    if name not in sections:
        raise DataError(f"archive is missing section {name!r}")
    payload = sections[name]
    kind, body = payload[:1], payload[1:]
    if kind == b"A":
        return _decode_array(body)
    if kind == b"J":
        return json.loads(body.decode("utf-8"))
    raise DataError(f"unknown payload kind {kind!r} in section {name!r}")


def _regressor_sections(prefix: str, reg: FittedRegressor) -> dict:
    spec = reg.spec
    out = {
        f"{prefix}.spec": {
            "kind": spec.kind,
            "shape": spec.shape,
            "degree": spec.degree,
            "ridge": spec.ridge,
            "extrapolation": spec.extrapolation,
            "output_dim": reg.output_dim,
            "complex_output": reg.complex_output,
            "coeff_keys": sorted(reg.coefficients),
        },
        f"{prefix}.training_params": reg.training_params,
    }
    for key in sorted(reg.coefficients):
        out[f"{prefix}.coeff.{key}"] = np.asarray(reg.coefficients[key])
    return out


def _read_regressor(prefix: str, sections: dict) -> FittedRegressor:
    meta = _section_value(sections, f"{prefix}.spec")
    spec = RegressorSpec(
        kind=meta["kind"],
        shape=meta["shape"],
        degree=int(meta["degree"]),
        ridge=float(meta["ridge"]),
        extrapolation=meta["extrapolation"],
    )
    coefficients = {
        key: _section_value(sections, f"{prefix}.coeff.{key}")
        for key in meta["coeff_keys"]
    }
    return FittedRegressor(
        spec,
        _section_value(sections, f"{prefix}.training_params"),
        coefficients,
        int(meta["output_dim"]),
        bool(meta["complex_output"]),
    )


def _basis_sections(basis: GlobalBasis) -> dict:
    out = {
        "basis.modes_u": basis.modes_u,
        "basis.singular_values": basis.singular_values,
        "basis.spec": {
            "energy_captured": basis.energy_captured,
            "centered": basis.mean is not None,
        },
    }
    if basis.mean is not None:
        out["basis.mean"] = basis.mean
    return out


def _read_basis(sections: dict) -> GlobalBasis:
    meta = _section_value(sections, "basis.spec")
    mean = _section_value(sections, "basis.mean") if meta["centered"] else None
    return GlobalBasis(
        _section_value(sections, "basis.modes_u"),
        _section_value(sections, "basis.singular_values"),
        float(meta["energy_captured"]),
        mean,
    )


def _dmd_sections(prefix: str, model: DmdModel) -> dict:
    return {
        f"{prefix}.spec": {"rank": model.rank, "dt": model.dt, "t0": model.t0},
        f"{prefix}.reduced_op": model.reduced_op,
        f"{prefix}.eigenvalues": model.eigenvalues,
        f"{prefix}.modes": model.modes,
        f"{prefix}.amplitudes": model.amplitudes,
        f"{prefix}.proj_basis": model.proj_basis,
        f"{prefix}.reduced_eigvecs": model.reduced_eigvecs,
    }


def _read_dmd(prefix: str, sections: dict) -> DmdModel:
    meta = _section_value(sections, f"{prefix}.spec")
    return DmdModel(
        rank=int(meta["rank"]),
        reduced_op=_section_value(sections, f"{prefix}.reduced_op"),
        eigenvalues=_section_value(sections, f"{prefix}.eigenvalues"),
        modes=_section_value(sections, f"{prefix}.modes"),
        amplitudes=_section_value(sections, f"{prefix}.amplitudes"),
        dt=float(meta["dt"]),
        t0=float(meta["t0"]),
        proj_basis=_section_value(sections, f"{prefix}.proj_basis"),
        reduced_eigvecs=_section_value(sections, f"{prefix}.reduced_eigvecs"),
    )


def algorithm_tag(model) -> str:
    """Short identifier for the model type, as used by the CLI."""
    if isinstance(model, RoiModel):
        return "roi"
    if isinstance(model, RkoiModel):
        return "rkoi"
    if isinstance(model, MonolithicModel):
        return "mono"
    if isinstance(model, PartitionedModel):
        return "part"
    raise DataError(f"cannot archive object of type {type(model).__name__}")


def _model_sections(model) -> dict:
    sections = _basis_sections(model.basis)
    if isinstance(model, RoiModel):
        sections["roi.spec"] = {
            "op_rank": model.op_rank,
            "dt": model.dt,
            "t0": model.t0,
        }
        sections["roi.op_modes"] = model.op_modes
        sections["roi.train_residuals"] = model.train_residuals
        sections.update(_regressor_sections("roi.coeff_reg", model.coeff_regressor))
        sections.update(_regressor_sections("roi.init_reg", model.init_regressor))
    elif isinstance(model, RkoiModel):
        sections["rkoi.spec"] = {"t0": model.t0, "notes": list(model.notes)}
        sections.update(_regressor_sections("rkoi.mode_reg", model.mode_regressor))
        sections.update(_regressor_sections("rkoi.omega_reg", model.omega_regressor))
        sections.update(_regressor_sections("rkoi.amp_reg", model.amp_regressor))
    elif isinstance(model, MonolithicModel):
        sections["mono.spec"] = {"dt": model.dt, "t0": model.t0}
        sections["mono.params"] = model.params
        sections["mono.block_map"] = np.asarray(model.block_map, dtype=np.int64)
        sections.update(_dmd_sections("mono.stacked", model.stacked_dmd))
    else:
        sections["part.spec"] = {
            "dt": model.dt,
            "t0": model.t0,
            "n_members": len(model.members),
        }
        sections["part.params"] = model.params
        for i, member in enumerate(model.members):
            sections.update(_dmd_sections(f"part.member{i}", member))
    return sections


def _read_model(tag: str, sections: dict):
    basis = _read_basis(sections)
    if tag == "roi":
        meta = _section_value(sections, "roi.spec")
        return RoiModel(
            basis=basis,
            op_modes=_section_value(sections, "roi.op_modes"),
            op_rank=int(meta["op_rank"]),
            coeff_regressor=_read_regressor("roi.coeff_reg", sections),
            init_regressor=_read_regressor("roi.init_reg", sections),
            dt=float(meta["dt"]),
            t0=float(meta["t0"]),
            train_residuals=_section_value(sections, "roi.train_residuals"),
        )
    if tag == "rkoi":
        meta = _section_value(sections, "rkoi.spec")
        return RkoiModel(
            basis=basis,
            mode_regressor=_read_regressor("rkoi.mode_reg", sections),
            omega_regressor=_read_regressor("rkoi.omega_reg", sections),
            amp_regressor=_read_regressor("rkoi.amp_reg", sections),
            t0=float(meta["t0"]),
            notes=tuple(meta["notes"]),
        )
    if tag == "mono":
        meta = _section_value(sections, "mono.spec")
        block_map = tuple(
            (int(lo), int(hi))
            for lo, hi in _section_value(sections, "mono.block_map")
        )
        return MonolithicModel(
            basis=basis,
            stacked_dmd=_read_dmd("mono.stacked", sections),
            params=_section_value(sections, "mono.params"),
            block_map=block_map,
            dt=float(meta["dt"]),
            t0=float(meta["t0"]),
        )
    if tag == "part":
        meta = _section_value(sections, "part.spec")
        members = tuple(
            _read_dmd(f"part.member{i}", sections)
            for i in range(int(meta["n_members"]))
        )
        return PartitionedModel(
            basis=basis,
            members=members,
            params=_section_value(sections, "part.params"),
            dt=float(meta["dt"]),
            t0=float(meta["t0"]),
        )
    raise DataError(f"unknown algorithm tag {tag!r}")


def _write_prefixed(handle, data: bytes) -> None:
    handle.write(struct.pack("<I", len(data)))
    handle.write(data)


def save_model(model, path, metadata: dict | None = None) -> None:
    """Write a model (plus optional string/number metadata) to disk."""
    tag = algorithm_tag(model)
    sections = _pack_sections(_model_sections(model))
    sections["meta"] = _encode_json(dict(metadata or {}))
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", VERSION))
        _write_prefixed(handle, tag.encode("utf-8"))
        handle.write(struct.pack("<I", len(sections)))
        for name in sorted(sections):
            _write_prefixed(handle, name.encode("utf-8"))
            _write_prefixed(handle, sections[name])


def _read_prefixed(handle, what: str) -> bytes:
    raw = handle.read(4)
    if len(raw) != 4:
        raise DataError(f"truncated archive while reading {what}")
    (length,) = struct.unpack("<I", raw)
    data = handle.read(length)
    if len(data) != length:
        raise DataError(f"truncated archive while reading {what}")
    return data


def load_model(path) -> ModelArchive:
    """Read a model container; inverse of save_model."""
    try:
        handle = open(path, "rb")
    except OSError as exc:
        raise DataError(f"cannot read model from {path}: {exc}") from exc
    with handle:
        if handle.read(len(MAGIC)) != MAGIC:
            raise DataError(f"{path} is not a model archive")
        (version,) = struct.unpack("<I", handle.read(4))
        if version != VERSION:
            raise DataError(f"unsupported archive version {version}")
        tag = _read_prefixed(handle, "algorithm tag").decode("utf-8")
        (count,) = struct.unpack("<I", handle.read(4))
        sections = {}
        for _ in range(count):
            name = _read_prefixed(handle, "section name").decode("utf-8")
            if name in sections:
                raise DataError(f"duplicate archive section {name!r}")
            sections[name] = _read_prefixed(handle, f"section {name!r}")
        if handle.read(1):
            raise DataError("trailing bytes after the last archive section")
    metadata = _section_value(sections, "meta")
    return ModelArchive(tag, _read_model(tag, sections), metadata)
