"""NEC pulse-distance encoder/decoder for the 9-button remote link.

A message is a 9 ms AGC mark, a 4.5 ms header space, then 32 pulse-distance
bits (address, inverted address, command, inverted command, assembled
MSB-first so a valid remote reads back 0x10EF in the first 16 bits), closed
by a single trailer mark.  While a key is held, an abbreviated repeat burst
goes out every 110 ms instead of the full frame.

Bits are measured on slot boundaries (mark start to next mark start):
a logic 1 slot is nominally 2250 µs, a logic 0 slot 1125 µs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple, TypeVar

MARK = "mark"
SPACE = "space"

#: Address every frame from the stock remote carries.
DEFAULT_ADDRESS = 0x10

Segment = Tuple[str, int]


class IrError(Exception):
    pass


class NoStartCondition(IrError):
    """Train does not open with AGC mark + header space."""


class TruncatedTrain(IrError):
    """Fewer than 32 bit slots after the start condition."""


@dataclass(frozen=True)
class NecTimings:
    """Nominal protocol intervals in µs plus the classification tolerance.

    The 562 µs figure is the integer nominal for the protocol's 562.5 µs
    pulse; the half microsecond is absorbed by the tolerance window.
    """

    agc_mark: int = 9000
    header_space: int = 4500
    bit_mark: int = 562
    one_space: int = 1687
    zero_space: int = 562
    trailer_mark: int = 562
    repeat_space: int = 2250
    repeat_period: int = 110_000
    tolerance: float = 0.20

    @property
    def one_slot(self) -> int:
        return self.bit_mark + self.one_space

    @property
    def zero_slot(self) -> int:
        return self.bit_mark + self.zero_space

    def within(self, duration: int, nominal: int) -> bool:
        return abs(duration - nominal) <= nominal * self.tolerance


DEFAULT_TIMINGS = NecTimings()


@dataclass
class PulseTrain:
    """Ordered mark/space intervals; levels strictly alternate."""

    segments: List[Segment] = field(default_factory=list)

    def append(self, level: str, duration: int) -> None:
        if level not in (MARK, SPACE):
            raise ValueError(f"bad level {level!r}")
        if duration <= 0:
            raise ValueError("segment duration must be positive")
        if self.segments and self.segments[-1][0] == level:
            # merge rather than violate alternation
            prev = self.segments[-1]
            self.segments[-1] = (level, prev[1] + duration)
        else:
            self.segments.append((level, int(duration)))

    def extend(self, other: "PulseTrain") -> None:
        for level, duration in other.segments:
            self.append(level, duration)

    def duration(self) -> int:
        return sum(d for _, d in self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


@dataclass(frozen=True)
class IrFrame:
    address: int
    address_inv: int
    command: int
    command_inv: int

    def inverses_ok(self) -> bool:
        return (self.address_inv == (~self.address & 0xFF)
                and self.command_inv == (~self.command & 0xFF))


@dataclass(frozen=True)
class IrEvent:
    """Decoded message: a full frame, a repeat burst, or garbage."""

    kind: str  # "frame" | "repeat" | "garbage"
    frame: Optional[IrFrame] = None
    reason: Optional[str] = None

    @classmethod
    def of_frame(cls, frame: IrFrame) -> "IrEvent":
        return cls(kind="frame", frame=frame)

    @classmethod
    def repeat(cls) -> "IrEvent":
        return cls(kind="repeat")

    @classmethod
    def garbage(cls, reason: str) -> "IrEvent":
        return cls(kind="garbage", reason=reason)


def _frame_bytes(address: int, command: int) -> Tuple[int, int, int, int]:
    if not 0 <= address <= 0xFF or not 0 <= command <= 0xFF:
        raise ValueError("address and command must be 8-bit")
    return address, ~address & 0xFF, command, ~command & 0xFF


def _bits_msb_first(byte: int) -> Iterable[int]:
    for shift in range(7, -1, -1):
        yield (byte >> shift) & 1


def encode_frame(address: int, command: int,
                 timings: NecTimings = DEFAULT_TIMINGS) -> PulseTrain:
    """Encode a full 32-bit message for one key press."""
    train = PulseTrain()
    train.append(MARK, timings.agc_mark)
    train.append(SPACE, timings.header_space)
    for byte in _frame_bytes(address, command):
        for bit in _bits_msb_first(byte):
            train.append(MARK, timings.bit_mark)
            train.append(SPACE, timings.one_space if bit else timings.zero_space)
    train.append(MARK, timings.trailer_mark)
    return train


def encode_repeat(timings: NecTimings = DEFAULT_TIMINGS) -> PulseTrain:
    """Encode the held-key burst: AGC mark, 2.25 ms space, one short mark."""
    train = PulseTrain()
    train.append(MARK, timings.agc_mark)
    train.append(SPACE, timings.repeat_space)
    train.append(MARK, timings.bit_mark)
    return train


def repeat_offsets_us(hold_us: int, timings: NecTimings = DEFAULT_TIMINGS) -> List[int]:
    """Offsets (from frame start) of every repeat emitted during a hold."""
    if hold_us < 0:
        raise ValueError("hold must be non-negative")
    offsets = []
    t = timings.repeat_period
    while t <= hold_us:
        offsets.append(t)
        t += timings.repeat_period
    return offsets


def encode_press(address: int, command: int, hold_us: int = 0,
                 timings: NecTimings = DEFAULT_TIMINGS) -> PulseTrain:
    """Frame plus the repeat bursts for a key held ``hold_us`` long.

    Inter-burst gaps are emitted as spaces so the result is one continuous
    capture, exactly what a receiver staring at the line would log.
    """
    train = encode_frame(address, command, timings)
    cursor = train.duration()
    for offset in repeat_offsets_us(hold_us, timings):
        gap = offset - cursor
        if gap <= 0:
            raise ValueError("repeat period shorter than frame duration")
        train.append(SPACE, gap)
        rep = encode_repeat(timings)
        train.extend(rep)
        cursor = offset + rep.duration()
    return train


def capture_bits(train: PulseTrain,
                 timings: NecTimings = DEFAULT_TIMINGS) -> List[int]:
    """Measure the 32 per-bit slot durations of a framed message.

    Mirrors a timer-capture loop: validate the start condition, then log
    one duration per bit, each spanning mark start to next mark start.
    """
    segs = train.segments
    if len(segs) < 2:
        raise TruncatedTrain("no start condition present")
    (lvl0, d0), (lvl1, d1) = segs[0], segs[1]
    if lvl0 != MARK or lvl1 != SPACE:
        raise NoStartCondition("train must open mark, space")
    if not timings.within(d0, timings.agc_mark):
        raise NoStartCondition(f"AGC mark {d0}µs out of window")
    if not timings.within(d1, timings.header_space):
        raise NoStartCondition(f"header space {d1}µs out of window")

    slots: List[int] = []
    i = 2
    while len(slots) < 32:
        if i + 1 >= len(segs):
            raise TruncatedTrain(f"only {len(slots)} bit slots present")
        (mlvl, mdur), (slvl, sdur) = segs[i], segs[i + 1]
        if mlvl != MARK or slvl != SPACE:
            raise TruncatedTrain("mark/space alternation broken")
        slots.append(mdur + sdur)
        i += 2
    return slots


def _classify_slot(duration: int, timings: NecTimings) -> Optional[int]:
    if timings.within(duration, timings.zero_slot):
        return 0
    if timings.within(duration, timings.one_slot):
        return 1
    return None


def _looks_like_repeat(train: PulseTrain, timings: NecTimings) -> bool:
    if len(train.segments) != 3:
        return False
    (l0, d0), (l1, d1), (l2, d2) = train.segments
    return (l0 == MARK and timings.within(d0, timings.agc_mark)
            and l1 == SPACE and timings.within(d1, timings.repeat_space)
            and l2 == MARK and timings.within(d2, timings.bit_mark))


def decode(train: PulseTrain, timings: NecTimings = DEFAULT_TIMINGS,
           expected_address: int = DEFAULT_ADDRESS) -> IrEvent:
    """Classify one message train.

    Never raises: anything that is not a clean frame for the expected
    address or a repeat burst comes back as garbage with a reason.
    """
    if _looks_like_repeat(train, timings):
        return IrEvent.repeat()

    try:
        slots = capture_bits(train, timings)
    except NoStartCondition:
        return IrEvent.garbage("no-start-condition")
    except TruncatedTrain:
        return IrEvent.garbage("truncated")

    bits: List[int] = []
    for slot in slots:
        bit = _classify_slot(slot, timings)
        if bit is None:
            return IrEvent.garbage("slot-out-of-tolerance")
        bits.append(bit)

    value = 0
    for bit in bits:
        value = (value << 1) | bit
    address = (value >> 24) & 0xFF
    address_inv = (value >> 16) & 0xFF
    command = (value >> 8) & 0xFF
    command_inv = value & 0xFF

    accept = (expected_address << 8) | (~expected_address & 0xFF)
    if (value >> 16) & 0xFFFF != accept:
        return IrEvent.garbage("wrong-address")
    if command_inv != (~command & 0xFF):
        return IrEvent.garbage("command-inverse-mismatch")
    return IrEvent.of_frame(IrFrame(address, address_inv, command, command_inv))


def split_messages(train: PulseTrain,
                   timings: NecTimings = DEFAULT_TIMINGS) -> List[PulseTrain]:
    """Split a long capture into individual messages on inter-burst gaps.

    No legal space inside a message exceeds the header space, so anything
    past twice that nominal is a gap between messages.
    """
    gap_threshold = 2 * timings.header_space
    messages: List[PulseTrain] = []
    current = PulseTrain()
    for level, duration in train.segments:
        if level == SPACE and duration > gap_threshold:
            if current.segments:
                messages.append(current)
                current = PulseTrain()
            continue
        if not current.segments and level == SPACE:
            continue  # leading idle
        current.append(level, duration)
    if current.segments:
        messages.append(current)
    return messages


def decode_stream(train: PulseTrain, timings: NecTimings = DEFAULT_TIMINGS,
                  expected_address: int = DEFAULT_ADDRESS) -> List[IrEvent]:
    return [decode(m, timings, expected_address)
            for m in split_messages(train, timings)]


T = TypeVar("T")


def match_button(frame: IrFrame, mapping: Dict[int, T]) -> Optional[T]:
    """Look the frame's command byte up in a command table (None if unmapped)."""
    if len(mapping) > 256:
        raise ValueError("command table cannot exceed 256 entries")
    return mapping.get(frame.command)


# --- capture / mapping file formats ------------------------------------

def dump_capture(train: PulseTrain) -> str:
    """One segment per line: ``mark,<µs>`` or ``space,<µs>``."""
    return "".join(f"{level},{duration}\n" for level, duration in train.segments)


def parse_capture(text: str) -> PulseTrain:
    train = PulseTrain()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            level, value = line.split(",", 1)
            train.append(level.strip(), int(value.strip()))
        except ValueError as exc:
            raise IrError(f"capture line {lineno}: {raw!r}: {exc}") from exc
    return train


def load_capture(path) -> PulseTrain:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_capture(fh.read())


def parse_mapping(text: str) -> Dict[int, str]:
    """Remote mapping lines ``<hex-command>=<button-name>``."""
    mapping: Dict[int, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            code, name = line.split("=", 1)
            command = int(code.strip(), 16)
        except ValueError as exc:
            raise IrError(f"mapping line {lineno}: {raw!r}: {exc}") from exc
        if not 0 <= command <= 0xFF:
            raise IrError(f"mapping line {lineno}: command out of range")
        mapping[command] = name.strip()
    if len(mapping) > 256:
        raise IrError("mapping exceeds 256 entries")
    return mapping


def load_mapping(path) -> Dict[int, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mapping(fh.read())
