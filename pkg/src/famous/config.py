"""Design envelope, runtime parameters, and the reconfiguration command protocol.

A DesignParams value is the hardware as synthesized: the maxima it can ever
run, the tile size, the clock, and the calibrated micro-architecture
constants.  A RunParams value is one runtime configuration programmed over
the command stream; it must fit inside the design envelope.

Command wire format (little-endian 32-bit words): low byte is the opcode,
upper 24 bits are the unsigned operand.  Text form is one command per line,
`set-heads 4` / `start`, with blank lines and `#` comments ignored.
"""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction


class ConfigError(Exception):
    """Base class for configuration and protocol errors."""


class MalformedCommand(ConfigError):
    """Unknown opcode, bad operand, or unparseable command word/line."""


class NoStart(ConfigError):
    """Command stream ended without a START."""


class InvalidConfiguration(ConfigError):
    """START requested a configuration outside the design envelope."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class ResourceVector:
    """FPGA resource counts: DSP slices, 18kb BRAM blocks, LUTs, flip-flops."""

    dsp: int
    bram18k: int
    lut: int
    ff: int

    def __post_init__(self) -> None:
        for name in ("dsp", "bram18k", "lut", "ff"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def fits_within(self, budget: "ResourceVector") -> bool:
        return (
            self.dsp <= budget.dsp
            and self.bram18k <= budget.bram18k
            and self.lut <= budget.lut
            and self.ff <= budget.ff
        )

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(
            self.dsp + other.dsp,
            self.bram18k + other.bram18k,
            self.lut + other.lut,
            self.ff + other.ff,
        )


@dataclass(frozen=True)
class DesignParams:
    """Design-time envelope plus calibrated model constants.

    mem_bytes_per_cycle, pipeline_depth and softmax_cycles_per_row are the
    calibration constants of the cycle model; see perf.load_calibration.
    """

    max_heads: int
    max_d_model: int
    max_seq_len: int
    tile_size: int
    clock_mhz: Fraction
    mem_bytes_per_cycle: int
    pipeline_depth: int
    softmax_cycles_per_row: int
    overlap_load_compute: bool
    resource_budget: ResourceVector

    def __post_init__(self) -> None:
        positive = {
            "max_heads": self.max_heads,
            "max_d_model": self.max_d_model,
            "max_seq_len": self.max_seq_len,
            "tile_size": self.tile_size,
            "mem_bytes_per_cycle": self.mem_bytes_per_cycle,
            "softmax_cycles_per_row": self.softmax_cycles_per_row,
        }
        for name, val in positive.items():
            if val <= 0:
                raise ValueError(f"{name} must be positive, got {val}")
        if self.clock_mhz <= 0:
            raise ValueError("clock_mhz must be positive")
        if self.pipeline_depth < 0:
            raise ValueError("pipeline_depth must be non-negative")
        if self.max_d_model % self.tile_size:
            raise ValueError("max_d_model must be a multiple of tile_size")
        if self.max_d_model % self.max_heads:
            raise ValueError("max_d_model must be a multiple of max_heads")


@dataclass(frozen=True)
class RunParams:
    """One runtime configuration.  Deliberately unchecked at construction:
    the command stream can request anything, and validate_run_params reports
    every violation as data rather than faulting on the first."""

    h: int
    d_model: int
    seq_len: int
    causal_mask: bool = False

    @property
    def d_k(self) -> int:
        return self.d_model // self.h


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_run_params(design: DesignParams, run: RunParams) -> ValidationResult:
    """Check a runtime configuration against the design envelope.

    Collects every violated constraint, not just the first, so a rejected
    reconfiguration can be reported in full.
    """
    v: list[str] = []
    if run.h <= 0:
        v.append(f"h must be positive, got {run.h}")
    if run.d_model <= 0:
        v.append(f"d_model must be positive, got {run.d_model}")
    if run.seq_len <= 0:
        v.append(f"seq_len must be positive, got {run.seq_len}")
    if run.h > 0 and run.d_model > 0 and run.d_model % run.h:
        v.append(f"d_model mod h != 0 ({run.d_model} mod {run.h} = {run.d_model % run.h})")
    if run.d_model > 0 and run.d_model % design.tile_size:
        v.append(
            f"d_model mod tile_size != 0 "
            f"({run.d_model} mod {design.tile_size} = {run.d_model % design.tile_size})"
        )
    if run.h > design.max_heads:
        v.append(f"h > max_heads ({run.h} > {design.max_heads})")
    if run.d_model > design.max_d_model:
        v.append(f"d_model > max_d_model ({run.d_model} > {design.max_d_model})")
    if run.seq_len > design.max_seq_len:
        v.append(f"seq_len > max_seq_len ({run.seq_len} > {design.max_seq_len})")
    return ValidationResult(ok=not v, violations=tuple(v))


def num_tiles(run: RunParams, design: DesignParams) -> int:
    """Number of column tiles: weights and inputs are loaded d_model/TS times."""
    return run.d_model // design.tile_size


class CommandOpcode(IntEnum):
    SET_HEADS = 0x01
    SET_DMODEL = 0x02
    SET_SEQLEN = 0x03
    SET_MASK = 0x04
    START = 0xFF

    @property
    def mnemonic(self) -> str:
        return self.name.lower().replace("_", "-")


_MNEMONICS = {op.mnemonic: op for op in CommandOpcode}
_OPERAND_BITS = 24


@dataclass(frozen=True)
class Command:
    opcode: CommandOpcode
    operand: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.opcode, CommandOpcode):
            raise MalformedCommand(f"unknown opcode {self.opcode!r}")
        if not 0 <= self.operand < (1 << _OPERAND_BITS):
            raise MalformedCommand(f"operand {self.operand} outside 24-bit range")
        if self.opcode is CommandOpcode.START and self.operand != 0:
            raise MalformedCommand(f"START takes no operand, got {self.operand}")
        if self.opcode is CommandOpcode.SET_MASK and self.operand not in (0, 1):
            raise MalformedCommand(f"SET_MASK operand must be 0 or 1, got {self.operand}")


def encode_commands(commands: list[Command] | tuple[Command, ...]) -> bytes:
    """Pack commands as little-endian 32-bit words (opcode byte, 24-bit operand)."""
    return b"".join(
        struct.pack("<I", int(c.opcode) | (c.operand << 8)) for c in commands
    )


def decode_commands(data: bytes) -> list[Command]:
    if len(data) % 4:
        raise MalformedCommand(f"binary stream length {len(data)} is not a multiple of 4")
    out = []
    for (word,) in struct.iter_unpack("<I", data):
        raw_op = word & 0xFF
        try:
            opcode = CommandOpcode(raw_op)
        except ValueError:
            raise MalformedCommand(f"unknown opcode byte 0x{raw_op:02x}") from None
        out.append(Command(opcode, word >> 8))
    return out


def commands_to_text(commands: list[Command] | tuple[Command, ...]) -> str:
    lines = []
    for c in commands:
        if c.opcode is CommandOpcode.START:
            lines.append("start")
        else:
            lines.append(f"{c.opcode.mnemonic} {c.operand}")
    return "\n".join(lines) + "\n"


def parse_commands_text(text: str) -> list[Command]:
    out = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        mnemonic = parts[0].lower()
        opcode = _MNEMONICS.get(mnemonic)
        if opcode is None:
            raise MalformedCommand(f"line {lineno}: unknown command {parts[0]!r}")
        if opcode is CommandOpcode.START:
            if len(parts) != 1:
                raise MalformedCommand(f"line {lineno}: start takes no operand")
            out.append(Command(opcode))
            continue
        if len(parts) != 2:
            raise MalformedCommand(f"line {lineno}: expected one operand, got {len(parts) - 1}")
        try:
            operand = int(parts[1], 0)
        except ValueError:
            raise MalformedCommand(f"line {lineno}: bad operand {parts[1]!r}") from None
        if operand < 0:
            raise MalformedCommand(f"line {lineno}: operand must be non-negative")
        out.append(Command(opcode, operand))
    return out


def apply_command_stream(
    design: DesignParams, commands: list[Command] | tuple[Command, ...]
) -> RunParams:
    """Replay a command stream against a working state initialized to the
    design maxima (mask off).  Last write per parameter wins; the first START
    validates and freezes the configuration; anything after it is ignored.
    """
    working = RunParams(
        h=design.max_heads,
        d_model=design.max_d_model,
        seq_len=design.max_seq_len,
        causal_mask=False,
    )
    for cmd in commands:
        if cmd.opcode is CommandOpcode.SET_HEADS:
            working = dataclasses.replace(working, h=cmd.operand)
        elif cmd.opcode is CommandOpcode.SET_DMODEL:
            working = dataclasses.replace(working, d_model=cmd.operand)
        elif cmd.opcode is CommandOpcode.SET_SEQLEN:
            working = dataclasses.replace(working, seq_len=cmd.operand)
        elif cmd.opcode is CommandOpcode.SET_MASK:
            working = dataclasses.replace(working, causal_mask=bool(cmd.operand))
        elif cmd.opcode is CommandOpcode.START:
            result = validate_run_params(design, working)
            if not result.ok:
                raise InvalidConfiguration(list(result.violations))
            return working
        else:  # pragma: no cover - Command construction rejects unknown opcodes
            raise MalformedCommand(f"unknown opcode {cmd.opcode!r}")
    raise NoStart("command stream ended without START")
