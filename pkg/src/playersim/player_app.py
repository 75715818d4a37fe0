"""Device application: menu, music mode, text-reader mode.

Button semantics: A starts music mode, B starts reading mode, C always
exits back to the menu.  Inside music mode center toggles play/pause,
left/right step tracks, up/down step the volume.  Inside the reader the
down arrow scrolls one line.  Held-key repeat events re-apply only to
volume and scroll.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, List, Optional

from . import fat32_ro
from .charlcd import LcdDriver
from .codec1063 import SCI_VOL, CodecHost
from .fat32_ro import DirEntry, FatVolume
from .ir_nec import IrEvent, match_button


class RemoteButton(enum.Enum):
    POWER = "power"
    A = "a"
    B = "b"
    C = "c"
    UP = "up"
    LEFT = "left"
    RIGHT = "right"
    DOWN = "down"
    CENTER = "center"


def button_from_name(name: str) -> RemoteButton:
    return RemoteButton(name.strip().lower())


MUSIC_EXTENSIONS = ("MP3", "WAV")
TEXT_EXTENSIONS = ("TXT",)

MODE_MENU = "menu"
MODE_MUSIC = "music"
MODE_READER = "reader"

VOLUME_STEPS = 16
DEFAULT_VOLUME_STEP = 8

#: volume_step -> VOL register word (both channel attenuation bytes)
VOLUME_TABLE = tuple(
    (((VOLUME_STEPS - 1 - s) * 16) << 8) | ((VOLUME_STEPS - 1 - s) * 16)
    for s in range(VOLUME_STEPS)
)

GLYPH_PLAY = 0
GLYPH_PAUSE = 1
GLYPH_NEXT = 2
GLYPH_PREV = 3

GLYPH_PATTERNS = {
    GLYPH_PLAY: (0x10, 0x18, 0x1C, 0x1E, 0x1E, 0x1C, 0x18, 0x10),
    GLYPH_PAUSE: (0x1B, 0x1B, 0x1B, 0x1B, 0x1B, 0x1B, 0x1B, 0x1B),
    GLYPH_NEXT: (0x11, 0x19, 0x1D, 0x1F, 0x1D, 0x19, 0x11, 0x00),
    GLYPH_PREV: (0x11, 0x13, 0x17, 0x1F, 0x17, 0x13, 0x11, 0x00),
}

SDI_CHUNK = 32
FILE_READ_CHUNK = 512


@dataclass(frozen=True)
class AppSnapshot:
    mode: str
    track_index: int
    playing: bool
    volume_step: int
    scroll_line: int
    music_count: int
    text_count: int
    halted: bool


class PlayerApp:
    """Wires the mounted volume, codec driver, and LCD into one appliance."""

    def __init__(self, volume: FatVolume, codec: CodecHost, lcd: LcdDriver,
                 mapping: Dict[int, str]):
        self.volume = volume
        self.codec = codec
        self.lcd = lcd
        self.mapping = mapping
        self.music_files: List[DirEntry] = []
        self.text_files: List[DirEntry] = []

        self.mode = MODE_MENU
        self.track_index = 0
        self.playing = False
        self.volume_step = DEFAULT_VOLUME_STEP
        self.scroll_line = 0
        self.halted = False

        self.garbage_events = 0
        self._last_button: Optional[RemoteButton] = None
        self._handle: Optional[fat32_ro.FileHandle] = None
        self._stream_buf = b""
        self._reader_lines: List[str] = []
        self._music_glyph = GLYPH_PLAY

    # -- boot --------------------------------------------------------------

    def boot(self) -> None:
        """Scan the root directory, load glyphs, show the menu."""
        entries = fat32_ro.list_dir(self.volume, "/")
        self.music_files = [e for e in entries
                            if not e.is_directory and e.extension.upper() in MUSIC_EXTENSIONS]
        self.text_files = [e for e in entries
                           if not e.is_directory and e.extension.upper() in TEXT_EXTENSIONS]
        for slot, pattern in GLYPH_PATTERNS.items():
            self.lcd.define_glyph(slot, pattern)
        self.codec.sci_write_polled(SCI_VOL, VOLUME_TABLE[self.volume_step])
        self._show_menu()

    def snapshot(self) -> AppSnapshot:
        return AppSnapshot(
            mode=self.mode, track_index=self.track_index, playing=self.playing,
            volume_step=self.volume_step, scroll_line=self.scroll_line,
            music_count=len(self.music_files), text_count=len(self.text_files),
            halted=self.halted,
        )

    # -- screens ------------------------------------------------------------

    def _show_menu(self) -> None:
        self.lcd.clear()
        self.lcd.write_row(0, "== MAIN MENU ==")
        self.lcd.write_row(1, "A:MUSIC B:READER")

    def _show_no_files(self, what: str) -> None:
        self.lcd.clear()
        self.lcd.write_row(0, f"NO {what} FILES")
        self.lcd.write_row(1, "C: BACK TO MENU")

    def _show_music(self) -> None:
        entry = self.music_files[self.track_index]
        self.lcd.clear()
        self.lcd.write_row(0, entry.name)
        self.lcd.goto(1, 0)
        self.lcd.data(self._music_glyph)
        self.lcd.display_string(f" VOL {self.volume_step:02d}")

    def _show_reader(self) -> None:
        rows = self.lcd.model.rows
        page = self._reader_lines[self.scroll_line: self.scroll_line + rows]
        self.lcd.clear()
        for r in range(rows):
            text = page[r] if r < len(page) else ""
            self.lcd.write_row(r, text)

    # -- IR dispatch -----------------------------------------------------------

    def handle_ir_event(self, event: IrEvent) -> List[str]:
        if event.kind == "garbage":
            self.garbage_events += 1
            return ["ignored"]
        if event.kind == "repeat":
            return self._handle_repeat()
        name = match_button(event.frame, self.mapping)
        if name is None:
            return ["ignored"]
        button = button_from_name(name)
        self._last_button = button
        return self.handle_button(button)

    def _handle_repeat(self) -> List[str]:
        # held keys only auto-repeat volume and scroll
        button = self._last_button
        if button is None:
            return ["ignored"]
        if self.mode == MODE_MUSIC and button in (RemoteButton.UP, RemoteButton.DOWN):
            return self.handle_button(button)
        if self.mode == MODE_READER and button == RemoteButton.DOWN:
            return self.handle_button(button)
        return ["ignored"]

    def handle_button(self, button: RemoteButton) -> List[str]:
        if button == RemoteButton.POWER:
            self.halted = True
            return ["halt"]
        if self.mode == MODE_MENU:
            return self._menu_button(button)
        if self.mode == MODE_MUSIC:
            return self._music_button(button)
        return self._reader_button(button)

    def _menu_button(self, button: RemoteButton) -> List[str]:
        if button == RemoteButton.A:
            return self._enter_music()
        if button == RemoteButton.B:
            return self._enter_reader()
        return ["ignored"]

    def _music_button(self, button: RemoteButton) -> List[str]:
        if button == RemoteButton.CENTER:
            self.playing = not self.playing
            self.codec.set_pause(not self.playing)
            self._music_glyph = GLYPH_PLAY if self.playing else GLYPH_PAUSE
            self._show_music()
            return ["play" if self.playing else "pause"]
        if button in (RemoteButton.LEFT, RemoteButton.RIGHT):
            step = 1 if button == RemoteButton.RIGHT else -1
            self.track_index = (self.track_index + step) % len(self.music_files)
            self._open_track()
            self._music_glyph = GLYPH_NEXT if step > 0 else GLYPH_PREV
            self._show_music()
            return ["next-track" if step > 0 else "prev-track"]
        if button in (RemoteButton.UP, RemoteButton.DOWN):
            step = 1 if button == RemoteButton.UP else -1
            clamped = min(VOLUME_STEPS - 1, max(0, self.volume_step + step))
            if clamped != self.volume_step:
                self.volume_step = clamped
                self.codec.sci_write_polled(SCI_VOL, VOLUME_TABLE[clamped])
            self._show_music()
            return ["volume-up" if step > 0 else "volume-down"]
        if button == RemoteButton.C:
            return self._exit_to_menu()
        return ["ignored"]

    def _reader_button(self, button: RemoteButton) -> List[str]:
        if button == RemoteButton.DOWN:
            limit = max(0, len(self._reader_lines) - self.lcd.model.rows)
            if self.scroll_line < limit:
                self.scroll_line += 1
                self._show_reader()
            return ["scroll-down"]
        if button == RemoteButton.C:
            return self._exit_to_menu()
        return ["ignored"]

    # -- mode transitions --------------------------------------------------------

    def _enter_music(self) -> List[str]:
        if not self.music_files:
            self._show_no_files("MUSIC")
            return ["no-files"]
        self.mode = MODE_MUSIC
        self.track_index = 0
        self.playing = True
        self._music_glyph = GLYPH_PLAY
        self._open_track()
        self.codec.set_pause(False)
        self._show_music()
        return ["enter-music", "play"]

    def _enter_reader(self) -> List[str]:
        if not self.text_files:
            self._show_no_files("TEXT")
            return ["no-files"]
        self.mode = MODE_READER
        self.scroll_line = 0
        self._load_reader_file(self.text_files[0])
        self._show_reader()
        return ["enter-reader"]

    def _exit_to_menu(self) -> List[str]:
        if self.mode == MODE_MUSIC:
            self.playing = False
            self.codec.set_pause(True)
            self._close_track()
        self.mode = MODE_MENU
        self.scroll_line = 0
        self._show_menu()
        return ["exit-to-menu"]

    # -- music streaming --------------------------------------------------------

    def _open_track(self) -> None:
        self._close_track()
        entry = self.music_files[self.track_index]
        self._handle = fat32_ro.open_path(self.volume, "/" + entry.name)
        self._stream_buf = b""

    def _close_track(self) -> None:
        if self._handle is not None and self._handle.is_open:
            self._handle.close()
        self._handle = None
        self._stream_buf = b""

    def _advance_track(self) -> None:
        self.track_index = (self.track_index + 1) % len(self.music_files)
        self._open_track()
        self._music_glyph = GLYPH_NEXT
        self._show_music()

    def _feed_codec(self) -> None:
        """Push at most one 32-byte chunk, and only when DREQ allows it."""
        if not self.codec.model.dreq:
            return
        if not self._stream_buf:
            if self._handle is None:
                self._open_track()
            data = self._handle.read(FILE_READ_CHUNK)
            if not data:
                self._advance_track()
                data = self._handle.read(FILE_READ_CHUNK)
                if not data:
                    return  # zero-length track, try again next pump
            self._stream_buf = data
        chunk = self._stream_buf[:SDI_CHUNK]
        self._stream_buf = self._stream_buf[SDI_CHUNK:]
        self.codec.write_sdi(chunk)

    # -- reader -----------------------------------------------------------------

    def _load_reader_file(self, entry: DirEntry) -> None:
        handle = fat32_ro.open_path(self.volume, "/" + entry.name)
        raw = handle.read_all()
        handle.close()
        text = raw.decode("ascii", errors="replace")
        text = text.replace("\r\n", "\n").replace("\r", "\n")
        self._reader_lines = text.split("\n")
        if self._reader_lines and self._reader_lines[-1] == "":
            self._reader_lines.pop()

    def read_text_page(self) -> List[str]:
        """Current reader page as displayed (for tests and tools)."""
        if self.mode != MODE_READER:
            raise RuntimeError("not in reading mode")
        return self.lcd.model.render()

    # -- main loop body -----------------------------------------------------------

    def pump(self, ir_events: Optional[List[IrEvent]] = None) -> List[str]:
        """One main-loop pass: dispatch pending IR, then stream one chunk."""
        actions: List[str] = []
        if ir_events:
            while ir_events:
                actions += self.handle_ir_event(ir_events.pop(0))
        if self.mode == MODE_MUSIC and self.playing and not self.halted:
            self._feed_codec()
        return actions
