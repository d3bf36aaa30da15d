"""File formats: binary tensor files, run manifests, command streams.

Tensor files carry one ASCII header line
    FAMT1 <rows> <cols> <word_bits> <frac_bits> <signed:0|1>\\n
followed by the row-major payload of raw codes, little-endian
two's-complement.  Headers are diff-able; payloads are parseable from any
language.

Manifests are JSON documents or flat `dotted.key = value` text; relative
paths inside a manifest resolve against the manifest's directory.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import (
    Command,
    DesignParams,
    InvalidConfiguration,
    RunParams,
    apply_command_stream,
    decode_commands,
    parse_commands_text,
)
from .fxp import QFormat, QTensor, storage_dtype
from .perf import default_design

TENSOR_MAGIC = "FAMT1"


class TensorFileError(Exception):
    """Malformed or unreadable tensor file; the message names the file."""


def write_tensor(path: str | Path, t: QTensor) -> None:
    header = (
        f"{TENSOR_MAGIC} {t.rows} {t.cols} "
        f"{t.fmt.word_bits} {t.fmt.frac_bits} {int(t.fmt.signed)}\n"
    )
    payload = t.data.astype(storage_dtype(t.fmt)).tobytes()
    Path(path).write_bytes(header.encode("ascii") + payload)


def read_tensor(path: str | Path) -> QTensor:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise TensorFileError(f"{path}: {e}") from e
    nl = blob.find(b"\n")
    if nl < 0:
        raise TensorFileError(f"{path}: missing header line")
    try:
        fields = blob[:nl].decode("ascii").split()
    except UnicodeDecodeError:
        raise TensorFileError(f"{path}: header is not ASCII") from None
    if len(fields) != 6 or fields[0] != TENSOR_MAGIC:
        raise TensorFileError(f"{path}: bad header (expected '{TENSOR_MAGIC} ...')")
    try:
        rows, cols, word_bits, frac_bits, signed = map(int, fields[1:])
        fmt = QFormat(word_bits=word_bits, frac_bits=frac_bits, signed=bool(signed))
    except ValueError as e:
        raise TensorFileError(f"{path}: bad header fields: {e}") from None
    payload = blob[nl + 1:]
    expected = rows * cols * (word_bits // 8)
    if len(payload) != expected:
        raise TensorFileError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype=storage_dtype(fmt)).astype(np.int64)
    try:
        return QTensor(rows, cols, data.reshape(rows, cols), fmt)
    except ValueError as e:
        raise TensorFileError(f"{path}: {e}") from None


@dataclass(frozen=True)
class HeadFiles:
    """Tensor file paths for one head's weights and biases."""

    w_q: Path
    w_k: Path
    w_v: Path
    b_q: Path
    b_k: Path
    b_v: Path

    def paths(self) -> tuple[Path, ...]:
        return (self.w_q, self.w_k, self.w_v, self.b_q, self.b_k, self.b_v)


@dataclass(frozen=True)
class RunManifest:
    """Everything one simulation needs: the design, the runtime parameters
    (inline or as a command stream), and the tensor file paths."""

    design: DesignParams
    x: Path
    heads: tuple[HeadFiles, ...]
    run: RunParams | None = None
    commands: Path | None = None
    seed: int | None = None
    out: Path | None = None
    threshold: float | None = None

    def resolve_run(self) -> RunParams:
        if self.run is not None:
            return self.run
        if self.commands is not None:
            return apply_command_stream(self.design, read_command_stream(self.commands))
        raise ValueError("manifest provides neither run parameters nor a command stream")


_TEXT_BYTES = frozenset(b"\t\n\r") | frozenset(range(0x20, 0x7F))


def read_command_stream(path: str | Path) -> list[Command]:
    """Load a command stream, auto-detecting the encoding: files made only
    of printable ASCII and whitespace are text, anything else is binary
    32-bit words."""
    blob = Path(path).read_bytes()
    if all(b in _TEXT_BYTES for b in blob):
        return parse_commands_text(blob.decode("ascii"))
    return decode_commands(blob)


def _parse_scalar(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _dotted_to_tree(lines: list[str]) -> dict:
    """Expand `a.b.0.c = v` lines into nested dicts; runs of integer keys
    become lists."""
    tree: dict = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        dotted, _, value = line.partition("=")
        keys = [k.strip() for k in dotted.strip().split(".")]
        node = tree
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ValueError(f"line {lineno}: key conflict at {key!r}")
        node[keys[-1]] = _parse_scalar(value)
    return _listify(tree)


def _listify(node):
    if not isinstance(node, dict):
        return node
    out = {k: _listify(v) for k, v in node.items()}
    if out and all(k.isdigit() for k in out):
        return [out[k] for k in sorted(out, key=int)]
    return out


_DESIGN_KEYS = {
    "max_heads",
    "max_d_model",
    "max_seq_len",
    "tile_size",
    "clock_mhz",
    "mem_bytes_per_cycle",
    "pipeline_depth",
    "softmax_cycles_per_row",
    "overlap_load_compute",
}


def design_from_dict(doc: dict, base: DesignParams | None = None) -> DesignParams:
    """Base design (default: the measured one) overridden by any provided
    fields; an override breaking a design invariant is an invalid
    configuration, not a parse error."""
    unknown = doc.keys() - _DESIGN_KEYS
    if unknown:
        raise ValueError(f"unknown design keys {sorted(unknown)}")
    fields = dict(doc)
    if "clock_mhz" in fields:
        fields["clock_mhz"] = Fraction(str(fields["clock_mhz"]))
    try:
        return dataclasses.replace(base or default_design(), **fields)
    except ValueError as e:
        raise InvalidConfiguration([str(e)]) from None


def run_from_dict(doc: dict) -> RunParams:
    allowed = {"h", "d_model", "seq_len", "causal_mask"}
    unknown = doc.keys() - allowed
    if unknown:
        raise ValueError(f"unknown run keys {sorted(unknown)}")
    return RunParams(
        h=int(doc["h"]),
        d_model=int(doc["d_model"]),
        seq_len=int(doc["seq_len"]),
        causal_mask=bool(doc.get("causal_mask", False)),
    )


def manifest_from_dict(doc: dict, base_dir: Path) -> RunManifest:
    def rel(p) -> Path:
        q = Path(str(p))
        return q if q.is_absolute() else base_dir / q

    heads = tuple(
        HeadFiles(**{name: rel(h[name]) for name in
                     ("w_q", "w_k", "w_v", "b_q", "b_k", "b_v")})
        for h in doc.get("heads", [])
    )
    return RunManifest(
        design=design_from_dict(doc.get("design", {})),
        run=run_from_dict(doc["run"]) if "run" in doc else None,
        commands=rel(doc["commands"]) if "commands" in doc else None,
        x=rel(doc["x"]),
        heads=heads,
        seed=int(doc["seed"]) if "seed" in doc else None,
        out=rel(doc["out"]) if "out" in doc else None,
        threshold=float(doc["threshold"]) if "threshold" in doc else None,
    )


def load_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    text = path.read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
    else:
        doc = _dotted_to_tree(text.splitlines())
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: manifest must be a mapping")
    return manifest_from_dict(doc, path.parent)


def manifest_to_json(manifest: RunManifest, base_dir: Path) -> str:
    """Serialize with paths relative to base_dir; byte-stable for fixed
    inputs (sorted keys, no timestamps)."""

    def rel(p: Path) -> str:
        try:
            return str(Path(p).relative_to(base_dir))
        except ValueError:
            return str(p)

    design = manifest.design
    doc: dict = {
        "design": {
            "max_heads": design.max_heads,
            "max_d_model": design.max_d_model,
            "max_seq_len": design.max_seq_len,
            "tile_size": design.tile_size,
            "clock_mhz": str(design.clock_mhz),
            "mem_bytes_per_cycle": design.mem_bytes_per_cycle,
            "pipeline_depth": design.pipeline_depth,
            "softmax_cycles_per_row": design.softmax_cycles_per_row,
            "overlap_load_compute": design.overlap_load_compute,
        },
        "x": rel(manifest.x),
        "heads": [
            {name: rel(getattr(h, name)) for name in
             ("w_q", "w_k", "w_v", "b_q", "b_k", "b_v")}
            for h in manifest.heads
        ],
    }
    if manifest.run is not None:
        doc["run"] = {
            "h": manifest.run.h,
            "d_model": manifest.run.d_model,
            "seq_len": manifest.run.seq_len,
            "causal_mask": manifest.run.causal_mask,
        }
    if manifest.commands is not None:
        doc["commands"] = rel(manifest.commands)
    if manifest.seed is not None:
        doc["seed"] = manifest.seed
    if manifest.out is not None:
        doc["out"] = rel(manifest.out)
    if manifest.threshold is not None:
        doc["threshold"] = manifest.threshold
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
