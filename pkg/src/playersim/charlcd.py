"""HD44780-style character LCD: DDRAM/CGRAM, busy flag, text-grid render.

The controller refuses traffic while busy (37 µs per write, 1520 µs for
clear/home), so drivers must poll.  ``render`` is a pure snapshot of the
visible grid; bytes 0x00..0x07 show as ``\\g0``..``\\g7`` custom-glyph
placeholders.
"""

from __future__ import annotations

from typing import List, Sequence

from .simcore import Scheduler

DDRAM_SIZE = 80
CGRAM_SIZE = 64
ROW_BASE = (0x00, 0x40, 0x14, 0x54)

BUSY_SHORT_US = 37
BUSY_LONG_US = 1520

CMD_CLEAR = 0x01
CMD_HOME = 0x02


class LcdError(Exception):
    pass


class BusyRejected(LcdError):
    """Write arrived while the controller was still busy."""


class BadAddress(LcdError):
    pass


class BadGlyphSlot(LcdError):
    pass


def _ddram_index(addr: int) -> int:
    # two address windows: 0x00..0x27 maps to 0..39, 0x40..0x67 to 40..79
    if 0x00 <= addr <= 0x27:
        return addr
    if 0x40 <= addr <= 0x67:
        return 40 + (addr - 0x40)
    raise BadAddress(f"DDRAM address {addr:#04x} out of range")


class LcdModel:
    """Register-level controller state plus the render snapshot."""

    def __init__(self, scheduler: Scheduler, columns: int = 16, rows: int = 2):
        if rows not in (1, 2, 4) or not 1 <= columns <= 40:
            raise ValueError("unsupported geometry")
        self.scheduler = scheduler
        self.columns = columns
        self.rows = rows
        self.ddram = bytearray([0x20] * DDRAM_SIZE)
        self.cgram = bytearray(CGRAM_SIZE)
        self.address = 0
        self.target = "ddram"  # or "cgram"
        self.display_on = True
        self.increment = True
        self.busy_until = 0

    # -- busy flag ---------------------------------------------------------

    @property
    def busy(self) -> bool:
        return self.scheduler.now < self.busy_until

    def _begin(self, duration_us: int) -> None:
        if self.busy:
            raise BusyRejected(f"controller busy until t={self.busy_until}")
        self.busy_until = self.scheduler.now + duration_us

    # -- bus operations ------------------------------------------------------

    def command(self, cmd: int) -> None:
        cmd &= 0xFF
        if cmd & 0x80:  # set DDRAM address
            index = _ddram_index(cmd & 0x7F)  # validate before committing
            self._begin(BUSY_SHORT_US)
            self.address = cmd & 0x7F
            self.target = "ddram"
        elif cmd & 0x40:  # set CGRAM address
            self._begin(BUSY_SHORT_US)
            self.address = cmd & 0x3F
            self.target = "cgram"
        elif cmd & 0x20:  # function set: bus width/lines are fixed here
            self._begin(BUSY_SHORT_US)
        elif cmd & 0x10:  # cursor/display shift: cosmetic, not modeled
            self._begin(BUSY_SHORT_US)
        elif cmd & 0x08:  # display control
            self._begin(BUSY_SHORT_US)
            self.display_on = bool(cmd & 0x04)
        elif cmd & 0x04:  # entry mode
            self._begin(BUSY_SHORT_US)
            self.increment = bool(cmd & 0x02)
        elif cmd & 0x02:  # return home
            self._begin(BUSY_LONG_US)
            self.address = 0
            self.target = "ddram"
        elif cmd & 0x01:  # clear display
            self._begin(BUSY_LONG_US)
            self.ddram = bytearray([0x20] * DDRAM_SIZE)
            self.address = 0
            self.target = "ddram"
        else:
            self._begin(BUSY_SHORT_US)  # NOP

    def _step_ddram(self) -> None:
        addr = self.address
        if self.increment:
            if addr == 0x27:
                addr = 0x40
            elif addr == 0x67:
                addr = 0x00
            else:
                addr += 1
        else:
            if addr == 0x40:
                addr = 0x27
            elif addr == 0x00:
                addr = 0x67
            else:
                addr -= 1
        self.address = addr

    def data(self, byte: int) -> None:
        self._begin(BUSY_SHORT_US)
        byte &= 0xFF
        if self.target == "cgram":
            self.cgram[self.address] = byte & 0x1F  # 5-pixel rows
            self.address = (self.address + (1 if self.increment else -1)) % CGRAM_SIZE
        else:
            self.ddram[_ddram_index(self.address)] = byte
            self._step_ddram()

    def read_data(self) -> int:
        """Read at the current address with the usual auto-advance."""
        self._begin(BUSY_SHORT_US)
        if self.target == "cgram":
            value = self.cgram[self.address]
            self.address = (self.address + (1 if self.increment else -1)) % CGRAM_SIZE
            return value
        value = self.ddram[_ddram_index(self.address)]
        self._step_ddram()
        return value

    # -- observability --------------------------------------------------------

    def render(self) -> List[str]:
        """Visible grid, one string per row; pure (no state change)."""
        rows = []
        for r in range(self.rows):
            cells = []
            for c in range(self.columns):
                byte = self.ddram[_ddram_index(ROW_BASE[r] + c)]
                if byte < 8:
                    cells.append(f"\\g{byte}")
                elif 0x20 <= byte <= 0x7E:
                    cells.append(chr(byte))
                else:
                    cells.append("?")
            rows.append("".join(cells))
        return rows

    def render_text(self) -> str:
        return "\n".join(self.render()) + "\n"


class LcdDriver:
    """Busy-polling driver; with ``poll=False`` (test hook) BusyRejected
    propagates instead of being waited out."""

    def __init__(self, model: LcdModel, scheduler: Scheduler, poll: bool = True):
        self.model = model
        self.scheduler = scheduler
        self.poll = poll

    def _wait_ready(self) -> None:
        if self.poll and self.model.busy:
            self.scheduler.advance(self.model.busy_until)

    def command(self, cmd: int) -> None:
        self._wait_ready()
        self.model.command(cmd)

    def data(self, byte: int) -> None:
        self._wait_ready()
        self.model.data(byte)

    def clear(self) -> None:
        self.command(CMD_CLEAR)

    def goto(self, row: int, col: int) -> None:
        if not 0 <= row < self.model.rows or not 0 <= col < self.model.columns:
            raise BadAddress(f"({row},{col}) outside {self.model.rows}x{self.model.columns}")
        self.command(0x80 | (ROW_BASE[row] + col))

    def _cursor_column(self) -> int:
        addr = self.model.address
        width = 40 if self.model.rows <= 2 else self.model.columns
        for base in ROW_BASE[: self.model.rows]:
            if base <= addr < base + width:
                return addr - base
        return self.model.columns  # cursor parked outside any visible row

    def display_string(self, text: str) -> None:
        """Write characters at the cursor, truncated at the visible row edge."""
        room = max(0, self.model.columns - self._cursor_column())
        for ch in text[:room]:
            self.data(ord(ch) & 0xFF)

    def write_row(self, row: int, text: str) -> None:
        self.goto(row, 0)
        self.display_string(text)

    def define_glyph(self, slot: int, pattern: Sequence[int]) -> None:
        """Load one 8-row, 5-bit-wide custom character into CGRAM."""
        if not 0 <= slot <= 7:
            raise BadGlyphSlot(f"slot {slot} out of range")
        if len(pattern) != 8:
            raise ValueError("glyph pattern must have 8 rows")
        self.command(0x40 | (slot * 8))
        for row_bits in pattern:
            self.data(row_bits & 0x1F)
        self.command(0x80)  # leave the cursor in DDRAM space
