"""Register-level audio codec model: SCI command port, SDI data port, DREQ.

The chip never decodes audio here — it is a byte-consuming register
machine.  Stream bytes land in a bounded FIFO drained at a configured
bitrate; DREQ goes low whenever fewer than 32 bytes of FIFO headroom
remain (or while the part is resetting / settling after a register
write).  The command and data interfaces are physically separate chip
selects and cannot reach each other's state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .simcore import Scheduler
from .spi_fabric import SpiBus, SpiConfig, SpiSlave

# SCI register addresses
SCI_MODE = 0x0
SCI_STATUS = 0x1
SCI_BASS = 0x2
SCI_CLOCKF = 0x3
SCI_DECODE_TIME = 0x4
SCI_AUDATA = 0x5
SCI_WRAM = 0x6
SCI_WRAMADDR = 0x7
SCI_HDAT0 = 0x8
SCI_HDAT1 = 0x9
SCI_AIADDR = 0xA
SCI_VOL = 0xB
SCI_AICTRL0 = 0xC
SCI_AICTRL1 = 0xD
SCI_AICTRL2 = 0xE
SCI_AICTRL3 = 0xF

REGISTER_NAMES = {
    "MODE": SCI_MODE, "STATUS": SCI_STATUS, "BASS": SCI_BASS,
    "CLOCKF": SCI_CLOCKF, "DECODE_TIME": SCI_DECODE_TIME,
    "AUDATA": SCI_AUDATA, "WRAM": SCI_WRAM, "WRAMADDR": SCI_WRAMADDR,
    "HDAT0": SCI_HDAT0, "HDAT1": SCI_HDAT1, "AIADDR": SCI_AIADDR,
    "VOL": SCI_VOL, "AICTRL0": SCI_AICTRL0, "AICTRL1": SCI_AICTRL1,
    "AICTRL2": SCI_AICTRL2, "AICTRL3": SCI_AICTRL3,
}

SM_RESET = 0x0004
SM_SDISHARE = 0x0400
SM_SDINEW = 0x0800

STATUS_READY = 0x0040  # model-defined readiness bit, set once startup settles

OP_WRITE = 0x02
OP_READ = 0x03

SDI_CHUNK_LIMIT = 32
DREQ_HEADROOM = 32

# parametric RAM addresses (16-bit word space)
PLAY_MODE_ADDR = 0x1E09
PLAY_MODE_PAUSE = 0x0001
PATCH_BASE_ADDR = 0x8000
PATCH_END_ADDR = 0xC000

_DEFAULT_RESET_REGISTERS = {
    SCI_MODE: SM_SDINEW,
    SCI_STATUS: 0x0020,
    SCI_CLOCKF: 0x0000,
    SCI_AUDATA: 0x0000,
    SCI_VOL: 0x0000,
}


class CodecError(Exception):
    pass


class BusyError(CodecError):
    """SCI transaction attempted while DREQ is low."""


class ChunkTooLarge(CodecError):
    pass


class Backpressure(CodecError):
    """SDI chunk attempted while DREQ is low."""


class DreqTimeout(CodecError):
    pass


class SanityCheckFailed(CodecError):
    """Register write/read-back verification failed during init."""


@dataclass(frozen=True)
class CodecConfig:
    fifo_capacity: int = 2048
    max_data_clock_hz: int = 120_000
    startup_delay_us: int = 1800
    sci_settle_us: int = 5
    drain_bitrate_bps: int = 96_000
    reset_registers: Dict[int, int] = field(default_factory=lambda: dict(_DEFAULT_RESET_REGISTERS))


def parse_codec_config(text: str) -> CodecConfig:
    """key=value lines; register defaults use ``reset.<NAME>=<value>``."""
    kwargs: Dict[str, int] = {}
    resets = dict(_DEFAULT_RESET_REGISTERS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            key, value = line.split("=", 1)
            key = key.strip()
            number = int(value.strip(), 0)
        except ValueError as exc:
            raise CodecError(f"config line {lineno}: {raw!r}: {exc}") from exc
        if key.startswith("reset."):
            name = key[len("reset."):]
            if name not in REGISTER_NAMES:
                raise CodecError(f"config line {lineno}: unknown register {name!r}")
            resets[REGISTER_NAMES[name]] = number & 0xFFFF
        else:
            kwargs[key] = number
    allowed = {"fifo_capacity", "max_data_clock_hz", "startup_delay_us",
               "sci_settle_us", "drain_bitrate_bps"}
    unknown = set(kwargs) - allowed
    if unknown:
        raise CodecError(f"unknown config keys: {sorted(unknown)}")
    return CodecConfig(reset_registers=resets, **kwargs)


def load_codec_config(path) -> CodecConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_codec_config(fh.read())


@dataclass(frozen=True)
class CodecPins:
    cs_command: str = "codec_cmd"
    cs_data: str = "codec_data"

    def __post_init__(self):
        if self.cs_command == self.cs_data:
            raise ValueError("command and data chip selects must differ")


class _CommandPort(SpiSlave):
    """SCI endpoint: 4-byte transactions framed by its chip select."""

    def __init__(self, model: "CodecModel", config: SpiConfig):
        super().__init__(config)
        self._model = model
        self._burst: List[int] = []
        self._out: List[int] = []
        self._valid = True

    def on_select(self) -> None:
        self._burst.clear()
        self._out.clear()
        self._valid = True

    on_deselect = on_select

    def exchange(self, mosi: int, bitrate_hz: int) -> int:
        out = self._out.pop(0) if self._out else 0xFF
        self._consume(mosi & 0xFF)
        return out

    def _consume(self, byte: int) -> None:
        self._burst.append(byte)
        n = len(self._burst)
        if n == 1 and byte not in (OP_WRITE, OP_READ):
            self._valid = False
        if not self._valid:
            return
        if n == 2 and self._burst[0] == OP_READ:
            value = self._model.sci_register_read(self._burst[1] & 0x0F)
            self._out.extend([(value >> 8) & 0xFF, value & 0xFF])
        elif n == 4 and self._burst[0] == OP_WRITE:
            self._model.sci_register_write(
                self._burst[1] & 0x0F, (self._burst[2] << 8) | self._burst[3])
            self._burst.clear()


class _DataPort(SpiSlave):
    """SDI endpoint: every byte is stream data, nothing else."""

    def __init__(self, model: "CodecModel", config: SpiConfig):
        super().__init__(config)
        self._model = model

    def exchange(self, mosi: int, bitrate_hz: int) -> int:
        self._model.accept_sdi_byte(mosi & 0xFF, bitrate_hz)
        return 0xFF


class CodecModel:
    """Shared state behind the two SPI ports.

    ``tick(elapsed_us)`` drains the FIFO at the configured bitrate and is
    meant to be scheduled periodically.  ``fast_mode`` reflects whether
    the most recent stream byte arrived above the data-clock limit;
    ``fast_mode_events`` counts every such byte.
    """

    def __init__(self, scheduler: Scheduler, config: Optional[CodecConfig] = None,
                 pins: Optional[CodecPins] = None, port_mode: int = 2):
        self.scheduler = scheduler
        self.config = config or CodecConfig()
        self.pins = pins or CodecPins()
        port_config = SpiConfig.from_mode(port_mode)
        self.command_port = _CommandPort(self, port_config)
        self.data_port = _DataPort(self, port_config)

        self.registers: Dict[int, int] = {}
        self.wram: Dict[int, int] = {}
        self.stream_fifo: List[int] = []
        self.consumed_bytes = 0
        self.accepted_bytes = 0
        self.dropped_bytes = 0
        self.fast_mode = False
        self.fast_mode_events = 0
        self.patch_blob = bytearray()
        self.force_dreq_low = False  # fault hook

        self._wram_pointer = 0
        self._ready_at = 0
        self._sci_busy_until = 0
        self._drain_carry = 0
        self.reset_pulse()

    # -- lines -----------------------------------------------------------

    @property
    def dreq(self) -> bool:
        if self.force_dreq_low:
            return False
        now = self.scheduler.now
        if now < self._ready_at or now < self._sci_busy_until:
            return False
        return self.fifo_free >= DREQ_HEADROOM

    @property
    def fifo_free(self) -> int:
        return self.config.fifo_capacity - len(self.stream_fifo)

    def reset_pulse(self) -> None:
        """Hardware reset: registers to defaults, FIFO flushed, DREQ low
        until the startup delay passes."""
        self.registers = {i: 0 for i in range(16)}
        self.registers.update(self.config.reset_registers)
        self.wram.clear()
        self.stream_fifo.clear()
        self.consumed_bytes = 0
        self.accepted_bytes = 0
        self.dropped_bytes = 0
        self.fast_mode = False
        self.fast_mode_events = 0
        self.patch_blob = bytearray()
        self._wram_pointer = 0
        self._drain_carry = 0
        self._sci_busy_until = 0
        self._ready_at = self.scheduler.now + self.config.startup_delay_us

    # -- SCI side ----------------------------------------------------------

    def sci_register_read(self, reg: int) -> int:
        if reg == SCI_STATUS:
            base = self.registers.get(SCI_STATUS, 0)
            ready = STATUS_READY if self.scheduler.now >= self._ready_at else 0
            return base | ready
        if reg == SCI_WRAM:
            value = self.wram.get(self._wram_pointer, 0)
            self._wram_pointer = (self._wram_pointer + 1) & 0xFFFF
            return value
        return self.registers.get(reg, 0)

    def sci_register_write(self, reg: int, value: int) -> None:
        value &= 0xFFFF
        if reg == SCI_WRAMADDR:
            self._wram_pointer = value
            self.registers[reg] = value
        elif reg == SCI_WRAM:
            self.wram[self._wram_pointer] = value
            if PATCH_BASE_ADDR <= self._wram_pointer < PATCH_END_ADDR:
                self.patch_blob += value.to_bytes(2, "big")
            self._wram_pointer = (self._wram_pointer + 1) & 0xFFFF
            self.registers[reg] = value
        else:
            self.registers[reg] = value
        self._sci_busy_until = self.scheduler.now + self.config.sci_settle_us

    @property
    def stream_paused(self) -> bool:
        return bool(self.wram.get(PLAY_MODE_ADDR, 0) & PLAY_MODE_PAUSE)

    @property
    def patch_checksum(self) -> int:
        return sum(self.patch_blob) & 0xFFFF

    # -- SDI side -----------------------------------------------------------

    def accept_sdi_byte(self, byte: int, bitrate_hz: int) -> None:
        self.fast_mode = bitrate_hz > self.config.max_data_clock_hz
        if self.fast_mode:
            self.fast_mode_events += 1
        if len(self.stream_fifo) < self.config.fifo_capacity:
            self.stream_fifo.append(byte)
            self.accepted_bytes += 1
        else:
            self.dropped_bytes += 1

    # -- playback ------------------------------------------------------------

    def tick(self, elapsed_us: int) -> None:
        """Drain stream bytes for ``elapsed_us`` of playback time."""
        if elapsed_us < 0:
            raise ValueError("elapsed must be non-negative")
        if self.stream_paused:
            return
        rate = self.config.drain_bitrate_bps // 8  # bytes per second
        self._drain_carry += elapsed_us * rate
        whole, self._drain_carry = divmod(self._drain_carry, 1_000_000)
        take = min(whole, len(self.stream_fifo))
        if take:
            del self.stream_fifo[:take]
            self.consumed_bytes += take


def codec_tick(model: CodecModel, elapsed_us: int) -> None:
    model.tick(elapsed_us)


class CodecHost:
    """Driver side: SCI register access, SDI streaming, init sequences."""

    def __init__(self, bus: SpiBus, model: CodecModel, scheduler: Scheduler,
                 sci_config: Optional[SpiConfig] = None,
                 sdi_config: Optional[SpiConfig] = None,
                 source_clock_hz: int = 48_000_000):
        self.bus = bus
        self.model = model
        self.pins = model.pins
        self.scheduler = scheduler
        # init runs the command interface at 2 MHz; stream data stays at
        # 120 kHz, the ceiling the data port tolerates
        self.sci_config = sci_config or SpiConfig.from_mode(
            2, divisor=24, source_clock_hz=source_clock_hz)
        self.sdi_config = sdi_config or SpiConfig.from_mode(
            2, divisor=400, source_clock_hz=source_clock_hz)
        self.dreq_poll_step_us = 5
        self.dreq_timeout_us = 500_000

    # -- DREQ ------------------------------------------------------------

    def wait_dreq(self, timeout_us: Optional[int] = None) -> None:
        budget = timeout_us if timeout_us is not None else self.dreq_timeout_us
        waited = 0
        while not self.model.dreq:
            if waited >= budget:
                raise DreqTimeout(f"DREQ stayed low for {waited} µs")
            self.scheduler.advance_by(self.dreq_poll_step_us)
            waited += self.dreq_poll_step_us

    # -- SCI -----------------------------------------------------------------

    def sci_write(self, reg: int, value: int) -> None:
        """4-byte write transaction on the command chip select."""
        if not self.model.dreq:
            raise BusyError(f"SCI write to {reg:#x} while DREQ low")
        self.bus.configure(self.sci_config)
        cs = self.pins.cs_command
        self.bus.select(cs)
        for b in (OP_WRITE, reg & 0x0F, (value >> 8) & 0xFF, value & 0xFF):
            self.bus.transfer(cs, b)
        self.bus.deselect(cs)

    def sci_read(self, reg: int) -> int:
        if not self.model.dreq:
            raise BusyError(f"SCI read of {reg:#x} while DREQ low")
        self.bus.configure(self.sci_config)
        cs = self.pins.cs_command
        self.bus.select(cs)
        self.bus.transfer(cs, OP_READ)
        self.bus.transfer(cs, reg & 0x0F)
        hi = self.bus.transfer(cs, 0xFF)
        lo = self.bus.transfer(cs, 0xFF)
        self.bus.deselect(cs)
        return (hi << 8) | lo

    def sci_write_polled(self, reg: int, value: int) -> None:
        self.wait_dreq()
        self.sci_write(reg, value)

    def sci_read_polled(self, reg: int) -> int:
        self.wait_dreq()
        return self.sci_read(reg)

    # -- SDI --------------------------------------------------------------

    def write_sdi(self, data: bytes) -> int:
        """Stream one chunk of at most 32 bytes; 0 on success."""
        if len(data) > SDI_CHUNK_LIMIT:
            raise ChunkTooLarge(f"{len(data)} bytes exceeds the 32-byte chunk limit")
        if not self.model.dreq:
            raise Backpressure("SDI chunk attempted while DREQ low")
        self.bus.configure(self.sdi_config)
        cs = self.pins.cs_data
        self.bus.select(cs)
        for b in data:
            self.bus.transfer(cs, b)
        self.bus.deselect(cs)
        return 0

    # -- init sequences ------------------------------------------------------

    def vs_test_init_hardware(self) -> None:
        """Pulse reset and wait for DREQ to come up."""
        self.model.reset_pulse()
        self.wait_dreq(timeout_us=self.model.config.startup_delay_us * 10)

    def vs_test_init_software(self, volume: int = 0x2020,
                              patch_blob: Optional[bytes] = None) -> None:
        """Mode setup, two-register sanity check, clock, volume, patches."""
        self.sci_write_polled(SCI_MODE, SM_SDINEW | SM_SDISHARE)

        checks = ((SCI_AICTRL1, 0xABAD), (SCI_AICTRL2, 0x7E57))
        for reg, value in checks:
            self.sci_write_polled(reg, value)
        for reg, value in checks:
            got = self.sci_read_polled(reg)
            if got != value:
                raise SanityCheckFailed(
                    f"register {reg:#x} read back {got:#06x}, wrote {value:#06x}")

        self.sci_write_polled(SCI_CLOCKF, 0x9800)
        self.sci_write_polled(SCI_VOL, volume & 0xFFFF)

        blob = patch_blob if patch_blob is not None else default_patch_blob()
        self.sci_write_polled(SCI_WRAMADDR, PATCH_BASE_ADDR)
        for i in range(0, len(blob), 2):
            word = int.from_bytes(blob[i:i + 2].ljust(2, b"\x00"), "big")
            self.sci_write_polled(SCI_WRAM, word)

    def set_pause(self, paused: bool) -> None:
        """Flip the parametric play-mode pause bit."""
        self.sci_write_polled(SCI_WRAMADDR, PLAY_MODE_ADDR)
        self.sci_write_polled(SCI_WRAM, PLAY_MODE_PAUSE if paused else 0)


def default_patch_blob() -> bytes:
    """Opaque stand-in for the chip vendor's patches package."""
    out = bytearray()
    state = 0x1063
    for _ in range(128):
        state = (state * 75 + 74) % 65537  # Lehmer sequence, fixed seed
        out.append(state & 0xFF)
    return bytes(out)
