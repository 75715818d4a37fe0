"""Whole-device assembly: scheduler, bus, card, codec, LCD, app, IR path.

Keystrokes and script events never shortcut into the application; they
are encoded into pulse trains, delivered after their transmission time,
and decoded again, so every run exercises the full remote-control stack.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from typing import Dict, List, Optional

from . import fat32_ro, ir_nec
from .charlcd import LcdDriver, LcdModel
from .codec1063 import SCI_VOL, CodecConfig, CodecHost, CodecModel
from .ir_nec import DEFAULT_TIMINGS, IrEvent, NecTimings, PulseTrain
from .player_app import DEFAULT_VOLUME_STEP, VOLUME_TABLE, PlayerApp
from .sd_stack import SdCardModel, SdSpiHost, SectorImage
from .simcore import Scheduler
from .spi_fabric import SpiBus

PUMP_CADENCE_US = 1000
TICK_CADENCE_US = 1000

CS_SD = "sd"


class ScriptError(Exception):
    pass


class SimulationAssertion(Exception):
    """A run-wide invariant (chunk discipline etc.) was violated."""


def default_mapping() -> Dict[int, str]:
    text = importlib.resources.files("playersim.data").joinpath(
        "remote_default.map").read_text(encoding="utf-8")
    return ir_nec.parse_mapping(text)


def default_codec_config() -> CodecConfig:
    from .codec1063 import parse_codec_config
    text = importlib.resources.files("playersim.data").joinpath(
        "codec_default.cfg").read_text(encoding="utf-8")
    return parse_codec_config(text)


def invert_mapping(mapping: Dict[int, str]) -> Dict[str, int]:
    inverse: Dict[str, int] = {}
    for command, name in mapping.items():
        inverse.setdefault(name.lower(), command)
    return inverse


@dataclass
class ScriptDirective:
    at_us: int
    kind: str  # "press" | "hold" | "snapshot"
    button: Optional[str] = None
    hold_us: int = 0


def parse_script(text: str, mapping: Dict[int, str]) -> List[ScriptDirective]:
    """Event script: ``t=<ms> press <BUTTON>``, ``t=<ms> hold <BUTTON> <ms>``,
    ``t=<ms> snapshot``.  Comments start with #."""
    known = set(invert_mapping(mapping))
    directives: List[ScriptDirective] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if not parts[0].startswith("t="):
                raise ValueError("line must start with t=<ms>")
            at_us = int(parts[0][2:]) * 1000
            kind = parts[1]
            if kind == "press" and len(parts) == 3:
                button = parts[2].lower()
                directives.append(ScriptDirective(at_us, "press", button))
            elif kind == "hold" and len(parts) == 4:
                button = parts[2].lower()
                directives.append(ScriptDirective(at_us, "hold", button, int(parts[3]) * 1000))
            elif kind == "snapshot" and len(parts) == 2:
                directives.append(ScriptDirective(at_us, "snapshot"))
            else:
                raise ValueError(f"unknown directive {kind!r}")
        except (ValueError, IndexError) as exc:
            raise ScriptError(f"script line {lineno}: {raw!r}: {exc}") from exc
        last = directives[-1]
        if last.kind in ("press", "hold") and last.button not in known:
            raise ScriptError(f"script line {lineno}: unknown button {last.button!r}")
    directives.sort(key=lambda d: d.at_us)
    return directives


class Board:
    """One assembled device over a disk image."""

    def __init__(self, image: SectorImage,
                 mapping: Optional[Dict[int, str]] = None,
                 codec_config: Optional[CodecConfig] = None,
                 timings: NecTimings = DEFAULT_TIMINGS,
                 lcd_columns: int = 16, lcd_rows: int = 2,
                 acmd41_delay: int = 1):
        self.scheduler = Scheduler()
        self.timings = timings
        self.mapping = mapping or default_mapping()
        self._commands = invert_mapping(self.mapping)

        self.bus = SpiBus(self.scheduler)
        self.card = SdCardModel(image, acmd41_delay=acmd41_delay)
        self.bus.attach(CS_SD, self.card)
        self.sd = SdSpiHost(self.bus, CS_SD, self.scheduler)

        self.codec_model = CodecModel(self.scheduler,
                                      codec_config or default_codec_config())
        self.bus.attach(self.codec_model.pins.cs_command, self.codec_model.command_port)
        self.bus.attach(self.codec_model.pins.cs_data, self.codec_model.data_port)
        self.codec = CodecHost(self.bus, self.codec_model, self.scheduler)

        self.lcd_model = LcdModel(self.scheduler, columns=lcd_columns, rows=lcd_rows)
        self.lcd = LcdDriver(self.lcd_model, self.scheduler)

        self.volume: Optional[fat32_ro.FatVolume] = None
        self.app: Optional[PlayerApp] = None
        self.ir_queue: List[IrEvent] = []
        self.snapshots: List[str] = []
        self._running = False
        self._last_tick_us = 0

    # -- bring-up -----------------------------------------------------------

    def power_up(self) -> None:
        """Init every peripheral, mount the card, boot the app loop."""
        self.sd.power_on()
        self.sd.disk_initialize()
        self.volume = fat32_ro.mount(self.sd)

        self.codec.vs_test_init_hardware()
        self.codec.vs_test_init_software(volume=VOLUME_TABLE[DEFAULT_VOLUME_STEP])

        self.app = PlayerApp(self.volume, self.codec, self.lcd, self.mapping)
        self.app.boot()

        self._running = True
        self._last_tick_us = self.scheduler.now
        self.scheduler.schedule_in(TICK_CADENCE_US, self._tick_event)
        self.scheduler.schedule_in(PUMP_CADENCE_US, self._pump_event)

    # -- periodic work ---------------------------------------------------------

    def _tick_event(self, event) -> None:
        now = self.scheduler.now
        self.codec_model.tick(now - self._last_tick_us)
        self._last_tick_us = now
        self.sd.disk_timeproc()
        if self._running:
            self.scheduler.schedule(max(now, event.fire_at + TICK_CADENCE_US),
                                    self._tick_event)

    def _pump_event(self, event) -> None:
        # Bus transfers consume virtual time, so this event can fire while
        # another transaction still holds a chip select (the model's
        # equivalent of an interrupt).  The firmware main loop is single
        # threaded: defer until the bus is free again.
        if self.bus.any_selected():
            self.scheduler.schedule(self.scheduler.now + PUMP_CADENCE_US,
                                    self._pump_event)
            return
        self.app.pump(self.ir_queue)
        if self.app.halted:
            self._running = False
        if self._running:
            self.scheduler.schedule(max(self.scheduler.now, event.fire_at + PUMP_CADENCE_US),
                                    self._pump_event)

    # -- remote control ----------------------------------------------------------

    def command_for(self, button: str) -> int:
        try:
            return self._commands[button.lower()]
        except KeyError:
            raise ScriptError(f"unknown button {button!r}") from None

    def schedule_press(self, at_us: int, button: str, hold_us: int = 0) -> None:
        """Queue the frame (and any repeats) for decode at their air times."""
        command = self.command_for(button)
        at_us = max(at_us, self.scheduler.now)  # device may still be booting
        frame = ir_nec.encode_frame(ir_nec.DEFAULT_ADDRESS, command, self.timings)
        self._schedule_train(at_us, frame)
        repeat = ir_nec.encode_repeat(self.timings)
        for offset in ir_nec.repeat_offsets_us(hold_us, self.timings):
            self._schedule_train(at_us + offset, repeat)

    def _schedule_train(self, start_us: int, train: PulseTrain) -> None:
        arrival = start_us + train.duration()
        self.scheduler.schedule(arrival, lambda event, t=train: self._deliver(t))

    def _deliver(self, train: PulseTrain) -> None:
        self.ir_queue.append(ir_nec.decode(train, self.timings))

    # -- snapshots ------------------------------------------------------------------

    def format_snapshot(self) -> str:
        app = self.app.snapshot()
        lcd = self.lcd_model.render()
        codec = self.codec_model
        lines = [
            f"t={self.scheduler.now}us",
            (f"mode={app.mode} track={app.track_index} "
             f"playing={'yes' if app.playing else 'no'} "
             f"volume={app.volume_step} scroll={app.scroll_line}"),
        ]
        lines += [f"lcd{r}=|{row}|" for r, row in enumerate(lcd)]
        lines.append(
            f"codec consumed={codec.consumed_bytes} fifo={len(codec.stream_fifo)} "
            f"accepted={codec.accepted_bytes} fast={'yes' if codec.fast_mode else 'no'} "
            f"vol=0x{codec.registers.get(SCI_VOL, 0):04x}")
        lines.append(f"halted={'yes' if app.halted else 'no'}")
        return "\n".join(lines) + "\n"

    def take_snapshot(self) -> str:
        block = self.format_snapshot()
        self.snapshots.append(block)
        return block

    # -- script runs -----------------------------------------------------------------

    def run_script(self, directives: List[ScriptDirective]) -> List[str]:
        """Replay a parsed script deterministically; returns snapshot blocks."""
        if self.app is None:
            self.power_up()
        end = self.scheduler.now
        for d in directives:
            if d.kind == "snapshot":
                at = max(d.at_us, self.scheduler.now)
                self.scheduler.schedule(at, lambda event: self.take_snapshot())
                end = max(end, at)
            else:
                self.schedule_press(d.at_us, d.button, d.hold_us)
                frame_air = d.at_us + 70_000  # frame duration rounds under 69 ms
                end = max(end, frame_air + d.hold_us + self.timings.repeat_period)
        self.scheduler.advance(end + 2 * PUMP_CADENCE_US)
        return self.snapshots

    def run_until(self, t_us: int) -> None:
        self.scheduler.advance(t_us)

    def press_and_settle(self, button: str, hold_us: int = 0) -> None:
        """Interactive helper: deliver a press and run past its effects."""
        start = self.scheduler.now
        self.schedule_press(start, button, hold_us)
        frame_air = ir_nec.encode_frame(0, 0, self.timings).duration()
        settle = start + frame_air + hold_us + self.timings.repeat_period
        self.scheduler.advance(settle + 2 * PUMP_CADENCE_US)
