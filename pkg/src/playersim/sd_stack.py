"""SDHC-over-SPI: host driver plus a simulated card backed by a disk image.

Command frames are 6 bytes (0b01 + index, 32-bit argument, CRC7 + stop
bit); data blocks are 512 bytes followed by a CRC16.  The card is a pure
byte-at-a-time state machine: it answers each exchanged byte from its
output queue (0xFF when it has nothing to say) and feeds the incoming
byte to its protocol parser, which gives responses a natural one-byte
latency just like real silicon.
"""

from __future__ import annotations

import mmap
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .simcore import Scheduler
from .spi_fabric import SpiBus, SpiConfig, SpiSlave

SECTOR_SIZE = 512

# R1 status bits
R1_IDLE = 0x01
R1_ERASE_RESET = 0x02
R1_ILLEGAL_COMMAND = 0x04
R1_CRC_ERROR = 0x08
R1_ERASE_SEQ_ERROR = 0x10
R1_ADDRESS_ERROR = 0x20
R1_PARAMETER_ERROR = 0x40

DATA_TOKEN = 0xFE

# Response poll window and init retry policy
N_CR = 8
ACMD41_RETRY_CAP = 1000
ACMD41_RETRY_GAP_US = 1000


class SdError(Exception):
    pass


class ResponseTimeout(SdError):
    """No response byte within the N_cr poll window."""


class InitTimeout(SdError):
    pass


class VoltageMismatch(SdError):
    pass


class InitError(SdError):
    pass


class NotReady(SdError):
    """Operation attempted before disk_initialize succeeded."""


class TokenTimeout(SdError):
    pass


class CrcMismatch(SdError):
    pass


class SectorRangeError(SdError):
    pass


class CardTimeout(SdError):
    pass


# --- CRC primitives ----------------------------------------------------

def _make_crc7_table() -> List[int]:
    # x^7 + x^3 + 1, tracked in the top 7 bits of a byte register
    table = []
    for i in range(256):
        reg = i
        for _ in range(8):
            reg = ((reg << 1) ^ 0x12) & 0xFF if reg & 0x80 else (reg << 1) & 0xFF
        table.append(reg)
    return table


def _make_crc16_table() -> List[int]:
    # CRC-16-CCITT, poly 0x1021, as used for SD data blocks
    table = []
    for i in range(256):
        crc = i << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table.append(crc)
    return table


_CRC7_TABLE = _make_crc7_table()
_CRC16_TABLE = _make_crc16_table()


def crc7(data: bytes) -> int:
    """7-bit CRC over a command's index+argument bytes (init 0)."""
    reg = 0
    for b in data:
        reg = _CRC7_TABLE[reg ^ (b & 0xFF)]
    return reg >> 1


def crc16(data: bytes) -> int:
    """CRC-16-CCITT (poly 0x1021, init 0) over a data block."""
    crc = 0
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC16_TABLE[((crc >> 8) ^ b) & 0xFF]
    return crc


def build_command_frame(index: int, argument: int) -> bytes:
    """6-byte frame: 0b01+index, argument big-endian, CRC7<<1 | stop bit."""
    if not 0 <= index <= 63:
        raise ValueError("command index must be 0..63")
    if not 0 <= argument <= 0xFFFFFFFF:
        raise ValueError("argument must fit 32 bits")
    head = bytes([
        0x40 | index,
        (argument >> 24) & 0xFF,
        (argument >> 16) & 0xFF,
        (argument >> 8) & 0xFF,
        argument & 0xFF,
    ])
    return head + bytes([(crc7(head) << 1) | 0x01])


@dataclass
class SdResponse:
    r1: int
    extra: bytes = b""

    @property
    def in_idle(self) -> bool:
        return bool(self.r1 & R1_IDLE)

    @property
    def error_bits(self) -> int:
        return self.r1 & ~R1_IDLE & 0xFF


@dataclass(frozen=True)
class WriteDataResponse:
    """3-bit status from the card's data-response token."""

    code: int

    ACCEPTED = 0b010
    CRC_REJECTED = 0b101
    WRITE_REJECTED = 0b110

    def __post_init__(self):
        if self.code not in (self.ACCEPTED, self.CRC_REJECTED, self.WRITE_REJECTED):
            raise ValueError(f"impossible data response code {self.code:#05b}")

    @property
    def accepted(self) -> bool:
        return self.code == self.ACCEPTED


# --- sector image -------------------------------------------------------

class SectorImage:
    """512-byte-sector store over bytes or a read-only mapped file.

    File-backed images keep writes in an overlay so the source file is
    never touched.
    """

    def __init__(self, data: Optional[bytearray] = None,
                 mapped: Optional[mmap.mmap] = None, size: int = 0):
        self._data = data
        self._mapped = mapped
        self._size = size if mapped is not None else len(data or b"")
        if self._size == 0 or self._size % SECTOR_SIZE:
            raise ValueError("image size must be a non-zero multiple of 512")
        self._overlay: Dict[int, bytes] = {}

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SectorImage":
        return cls(data=bytearray(raw))

    @classmethod
    def from_file(cls, path) -> "SectorImage":
        size = os.path.getsize(path)
        if size == 0 or size % SECTOR_SIZE:
            raise ValueError(f"{path}: image size must be a non-zero multiple of 512")
        fh = open(path, "rb")
        mapped = mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ)
        img = cls(mapped=mapped, size=size)
        img._fh = fh
        return img

    @property
    def sector_count(self) -> int:
        return self._size // SECTOR_SIZE

    def read_sector(self, lba: int) -> bytes:
        if not 0 <= lba < self.sector_count:
            raise SectorRangeError(f"lba {lba} outside image of {self.sector_count} sectors")
        if lba in self._overlay:
            return self._overlay[lba]
        off = lba * SECTOR_SIZE
        if self._mapped is not None:
            return bytes(self._mapped[off:off + SECTOR_SIZE])
        return bytes(self._data[off:off + SECTOR_SIZE])

    def write_sector(self, lba: int, payload: bytes) -> None:
        if len(payload) != SECTOR_SIZE:
            raise ValueError("sector payload must be 512 bytes")
        if not 0 <= lba < self.sector_count:
            raise SectorRangeError(f"lba {lba} outside image of {self.sector_count} sectors")
        self._overlay[lba] = bytes(payload)


# --- card device model ---------------------------------------------------

_DEFAULT_CID = bytes.fromhex("1b534d303030303010feedbeef00a100")
_DEFAULT_CSD = bytes.fromhex("400e00325b590000747f7f800a400001")


class SdCardModel(SpiSlave):
    """SDHC card answering the SPI-mode command set against a sector image.

    Fault hooks (test-only toggles): ``corrupt_read_crc`` flips the CRC of
    streamed read blocks, ``read_only`` makes writes come back rejected,
    ``never_ready`` keeps ACMD41 reporting idle forever.
    """

    def __init__(self, image: SectorImage, acmd41_delay: int = 1,
                 max_clock_hz: int = 25_000_000,
                 config: Optional[SpiConfig] = None):
        super().__init__(config or SpiConfig.from_mode(0))
        self.image = image
        self.acmd41_delay = acmd41_delay
        self.max_clock_hz = max_clock_hz
        self.state = "uninitialized"  # -> idle -> ready
        self.registers: Dict[str, bytes] = {
            "OCR": bytes.fromhex("00FF8000"),
            "CID": _DEFAULT_CID,
            "CSD": _DEFAULT_CSD,
            "RCA": b"\x00\x00",
            "DSR": b"\x04\x04",
            "SCR": bytes.fromhex("0235800100000000"),
        }
        # fault hooks
        self.corrupt_read_crc = False
        self.read_only = False
        self.never_ready = False

        self._selected = False
        self._frame: List[int] = []
        self._out: List[int] = []
        self._app_cmd = False
        self._acmd41_polls = 0
        self._busy_bytes = 0
        self._write_lba: Optional[int] = None
        self._write_buf: Optional[List[int]] = None

    # -- chip select -------------------------------------------------

    def on_select(self) -> None:
        self._selected = True
        self._frame.clear()  # commands are byte aligned to the CS edge

    def on_deselect(self) -> None:
        self._selected = False
        self._frame.clear()
        self._out.clear()
        self._write_lba = None
        self._write_buf = None

    # -- byte exchange -------------------------------------------------

    def exchange(self, mosi: int, bitrate_hz: int = 0) -> int:
        if not self._selected:
            return 0xFF
        if self._out:
            out = self._out.pop(0)
        elif self._busy_bytes > 0:
            self._busy_bytes -= 1
            return 0x00  # busy: MISO held low, input ignored
        else:
            out = 0xFF
        self._consume(mosi & 0xFF)
        return out

    def _consume(self, byte: int) -> None:
        if self._write_buf is not None:
            self._consume_write(byte)
            return
        if self._write_lba is not None:
            if byte == DATA_TOKEN:
                self._write_buf = []
            return  # waiting for the data token; 0xFF gap bytes are fine
        if not self._frame:
            if (byte & 0xC0) == 0x40:
                self._frame.append(byte)
            return
        self._frame.append(byte)
        if len(self._frame) == 6:
            frame = bytes(self._frame)
            self._frame.clear()
            self._handle_command(frame)

    def _consume_write(self, byte: int) -> None:
        self._write_buf.append(byte)
        if len(self._write_buf) < SECTOR_SIZE + 2:
            return
        payload = bytes(self._write_buf[:SECTOR_SIZE])
        sent_crc = (self._write_buf[512] << 8) | self._write_buf[513]
        lba = self._write_lba
        self._write_lba = None
        self._write_buf = None
        if sent_crc != crc16(payload):
            code = WriteDataResponse.CRC_REJECTED
        elif self.read_only:
            code = WriteDataResponse.WRITE_REJECTED
        else:
            self.image.write_sector(lba, payload)
            code = WriteDataResponse.ACCEPTED
        self._out.append((code << 1) | 0x01)
        self._busy_bytes = 3

    # -- command handling ----------------------------------------------

    def _handle_command(self, frame: bytes) -> None:
        index = frame[0] & 0x3F
        argument = int.from_bytes(frame[1:5], "big")
        crc_ok = frame[5] == ((crc7(frame[:5]) << 1) | 0x01)
        is_app = self._app_cmd
        self._app_cmd = False

        idle_bit = R1_IDLE if self.state != "ready" else 0

        if not crc_ok:
            self._out.append(R1_CRC_ERROR | idle_bit)
            return

        if index == 0:
            self.state = "idle"
            self._acmd41_polls = 0
            self._out.append(R1_IDLE)
        elif index == 8:
            if (argument & 0xFFF) == 0x1AA:
                self._out.append(idle_bit)
                self._out.extend([0x00, 0x00, (argument >> 8) & 0x0F, argument & 0xFF])
            else:
                self._out.append(R1_PARAMETER_ERROR | idle_bit)
        elif index == 55:
            self._app_cmd = True
            self._out.append(idle_bit)
        elif index == 41 and is_app:
            if self.never_ready:
                self._out.append(R1_IDLE)
            elif self._acmd41_polls < self.acmd41_delay:
                self._acmd41_polls += 1
                self._out.append(R1_IDLE)
            else:
                self.state = "ready"
                # power-up done + high capacity
                self.registers["OCR"] = bytes.fromhex("C0FF8000")
                self._out.append(0x00)
        elif index == 58:
            self._out.append(idle_bit)
            self._out.extend(self.registers["OCR"])
        elif index == 17:
            self._cmd_read(argument, idle_bit)
        elif index == 24:
            self._cmd_write(argument, idle_bit)
        else:
            self._out.append(R1_ILLEGAL_COMMAND | idle_bit)

    def _cmd_read(self, lba: int, idle_bit: int) -> None:
        if self.state != "ready":
            self._out.append(R1_ILLEGAL_COMMAND | idle_bit)
            return
        if lba >= self.image.sector_count:
            self._out.append(R1_PARAMETER_ERROR)
            return
        payload = self.image.read_sector(lba)
        crc = crc16(payload)
        if self.corrupt_read_crc:
            crc ^= 0xFFFF
        self._out.append(0x00)
        self._out.extend([0xFF, DATA_TOKEN])
        self._out.extend(payload)
        self._out.extend([(crc >> 8) & 0xFF, crc & 0xFF])

    def _cmd_write(self, lba: int, idle_bit: int) -> None:
        if self.state != "ready":
            self._out.append(R1_ILLEGAL_COMMAND | idle_bit)
            return
        if lba >= self.image.sector_count:
            self._out.append(R1_PARAMETER_ERROR)
            return
        self._out.append(0x00)
        self._write_lba = lba


def sd_device_exchange(card: SdCardModel, byte_in: int) -> int:
    """Advance the card state machine by one exchanged byte."""
    return card.exchange(byte_in)


# --- host driver ---------------------------------------------------------

class SdSpiHost:
    """Polling-style host: power_on, init sequence, sector read/write.

    Records every command as (index, argument, trailing CRC byte, r1) in
    ``command_trace`` so init sequences can be compared byte for byte.
    """

    def __init__(self, bus: SpiBus, cs: str, scheduler: Scheduler,
                 source_clock_hz: int = 48_000_000,
                 init_divisor: int = 120, data_divisor: int = 6):
        self.bus = bus
        self.cs = cs
        self.scheduler = scheduler
        self._init_config = SpiConfig.from_mode(0, divisor=init_divisor,
                                                source_clock_hz=source_clock_hz)
        self._data_config = SpiConfig.from_mode(0, divisor=data_divisor,
                                                source_clock_hz=source_clock_hz)
        self.state = "unpowered"  # -> powered -> initialized
        self.ocr: Optional[bytes] = None
        self.command_trace: List[Tuple[int, int, int, int]] = []
        self._timeout_counter = 0
        self.token_poll_limit = 1000
        self.busy_poll_limit = 10_000
        # test hook: corrupt the CRC of the next outgoing data block
        self.force_bad_data_crc = False

    # -- low level -------------------------------------------------------

    def _own_bus(self) -> None:
        # the bus is shared; reclaim it with this device's clocking
        cfg = self._data_config if self.state == "initialized" else self._init_config
        self.bus.configure(cfg)

    def _release(self) -> None:
        self.bus.deselect(self.cs)
        self.bus.clock_idle(1)  # one trailing dummy lets the card float MISO

    def send_cmd(self, index: int, argument: int, extra: int = 0,
                 keep_selected: bool = False) -> SdResponse:
        """Emit a 6-byte frame and poll up to N_cr bytes for the response."""
        frame = build_command_frame(index, argument)
        self._own_bus()
        self.bus.select(self.cs)
        for b in frame:
            self.bus.transfer(self.cs, b)
        r1 = None
        for _ in range(N_CR):
            b = self.bus.transfer(self.cs, 0xFF)
            if not (b & 0x80):
                r1 = b
                break
        if r1 is None:
            self._release()
            raise ResponseTimeout(f"CMD{index} got no response in {N_CR} bytes")
        payload = b""
        if extra and not (r1 & (R1_ILLEGAL_COMMAND | R1_CRC_ERROR | R1_PARAMETER_ERROR)):
            payload = self.bus.receive_multi(self.cs, extra)
        self.command_trace.append((index, argument, frame[5], r1))
        if not keep_selected:
            self._release()
        return SdResponse(r1, payload)

    # -- lifecycle ---------------------------------------------------------

    def power_on(self) -> None:
        """Set up the init-speed bus and feed 80 wake clocks, CS high."""
        self.bus.configure(self._init_config)
        self.bus.deselect(self.cs)
        self.bus.clock_idle(10)
        self.state = "powered"

    def disk_initialize(self) -> str:
        """Reset into SPI mode and bring the card to ready."""
        if self.state == "unpowered":
            raise NotReady("power_on must run first")

        r = self.send_cmd(0, 0x00000000)
        if r.r1 != R1_IDLE:
            raise InitError(f"CMD0 answered {r.r1:#04x}, expected 0x01")

        r = self.send_cmd(8, 0x000001AA, extra=4)
        if r.r1 != R1_IDLE:
            raise InitError(f"CMD8 answered {r.r1:#04x}, expected 0x01")
        echo = ((r.extra[2] & 0x0F) << 8) | r.extra[3]
        if echo != 0x1AA:
            raise VoltageMismatch(f"CMD8 echoed {echo:#05x}, expected 0x1aa")

        for _ in range(ACMD41_RETRY_CAP):
            self.send_cmd(55, 0x00000000)
            r = self.send_cmd(41, 0x40000000)
            if r.r1 == 0x00:
                break
            if r.r1 != R1_IDLE:
                raise InitError(f"ACMD41 answered {r.r1:#04x}")
            self.scheduler.advance_by(ACMD41_RETRY_GAP_US)
        else:
            raise InitTimeout(f"card stayed idle after {ACMD41_RETRY_CAP} ACMD41 polls")

        r = self.send_cmd(58, 0x00000000, extra=4)
        self.ocr = r.extra
        self.state = "initialized"
        self.bus.configure(self._data_config)
        return self.state

    def disk_status(self) -> str:
        return self.state

    def disk_timeproc(self) -> None:
        """Tick the busy-wait budget down; scheduled periodically."""
        if self._timeout_counter > 0:
            self._timeout_counter -= 1

    def arm_timeout(self, ticks: int) -> None:
        self._timeout_counter = ticks

    def card_ready(self) -> bool:
        """Poll until the card releases the line (0xFF) or time runs out."""
        self._own_bus()
        polls = 0
        while True:
            if self.bus.transfer(self.cs, 0xFF) == 0xFF:
                return True
            polls += 1
            if self._timeout_counter == 0 or polls >= self.busy_poll_limit:
                raise CardTimeout("card stayed busy past the timeout budget")

    # -- sector IO -----------------------------------------------------------

    def disk_read(self, lba: int, count: int = 1) -> bytes:
        """Read ``count`` sectors starting at block address ``lba``."""
        if self.state != "initialized":
            raise NotReady("disk_read before disk_initialize")
        if count < 1:
            raise ValueError("count must be >= 1")
        out = bytearray()
        for sector in range(lba, lba + count):
            out += self._read_one(sector)
        return bytes(out)

    def _read_one(self, lba: int) -> bytes:
        r = self.send_cmd(17, lba, keep_selected=True)
        if r.r1 & R1_PARAMETER_ERROR:
            self._release()
            raise SectorRangeError(f"sector {lba} rejected by card")
        if r.r1 != 0x00:
            self._release()
            raise SdError(f"CMD17 answered {r.r1:#04x}")
        token = None
        for _ in range(self.token_poll_limit):
            b = self.bus.transfer(self.cs, 0xFF)
            if b == DATA_TOKEN:
                token = b
                break
        if token is None:
            self._release()
            raise TokenTimeout(f"no data token for sector {lba}")
        block = self.bus.receive_multi(self.cs, SECTOR_SIZE)
        crc_bytes = self.bus.receive_multi(self.cs, 2)
        self._release()
        expected = (crc_bytes[0] << 8) | crc_bytes[1]
        if crc16(block) != expected:
            raise CrcMismatch(f"sector {lba} CRC {expected:#06x} does not match data")
        return block

    def disk_write(self, lba: int, data: bytes) -> WriteDataResponse:
        """Write one 512-byte sector; returns the card's data response."""
        if self.state != "initialized":
            raise NotReady("disk_write before disk_initialize")
        if len(data) != SECTOR_SIZE:
            raise ValueError("data must be exactly 512 bytes")
        r = self.send_cmd(24, lba, keep_selected=True)
        if r.r1 & R1_PARAMETER_ERROR:
            self._release()
            raise SectorRangeError(f"sector {lba} rejected by card")
        if r.r1 != 0x00:
            self._release()
            raise SdError(f"CMD24 answered {r.r1:#04x}")
        self.bus.transfer(self.cs, 0xFF)  # gap before the token
        self.bus.transfer(self.cs, DATA_TOKEN)
        for b in data:
            self.bus.transfer(self.cs, b)
        crc = crc16(data)
        if self.force_bad_data_crc:
            crc ^= 0xFFFF
            self.force_bad_data_crc = False
        self.bus.transfer(self.cs, (crc >> 8) & 0xFF)
        response = self.bus.transfer(self.cs, crc & 0xFF)
        # data response arrives on the next exchange after the block
        if (response & 0x11) != 0x01:
            response = self.bus.transfer(self.cs, 0xFF)
        code = (response >> 1) & 0x07
        self.arm_timeout(500)
        self.card_ready()
        self._release()
        return WriteDataResponse(code)

    # -- block-device contract -------------------------------------------

    def read_sector(self, lba: int) -> bytes:
        return self.disk_read(lba, 1)
