"""Command-line tools: IR capture generate/decode, image inspection,
file extraction, and the scripted/interactive device simulator.

Exit codes: 0 ok, 2 usage, 3 disk/mount error, 4 not found,
5 simulation assertion.
"""

from __future__ import annotations

import argparse
import importlib.resources
import sys
from typing import List, Optional

from . import fat32_ro, ir_nec
from .board import Board, ScriptError, SimulationAssertion, parse_script
from .codec1063 import Backpressure, ChunkTooLarge
from .ir_nec import DEFAULT_TIMINGS, NecTimings
from .sd_stack import SdError, SectorImage

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DISK = 3
EXIT_NOT_FOUND = 4
EXIT_SIM_ASSERT = 5


def _default_mapping_text() -> str:
    return importlib.resources.files("playersim.data").joinpath(
        "remote_default.map").read_text(encoding="utf-8")


def _load_mapping(path: Optional[str]):
    if path is None:
        return ir_nec.parse_mapping(_default_mapping_text())
    return ir_nec.load_mapping(path)


def _open_image(path: str) -> SectorImage:
    return SectorImage.from_file(path)


def _mounted_board(path: str, trace: Optional[str] = None,
                   trace_out=None) -> Board:
    device = Board(_open_image(path))
    if trace == "bus":
        sink = trace_out or sys.stderr
        device.bus.trace_sink = lambda line: print(line, file=sink)
    device.power_up()
    return device


# --- subcommands ----------------------------------------------------------

def cmd_ir_decode(args) -> int:
    try:
        train = ir_nec.load_capture(args.capture)
    except (OSError, ir_nec.IrError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DISK
    timings = NecTimings(tolerance=args.tolerance)
    for event in ir_nec.decode_stream(train, timings, args.address):
        if event.kind == "frame":
            print(f"frame addr={event.frame.address:02x} cmd={event.frame.command:02x}")
        elif event.kind == "repeat":
            print("repeat")
        else:
            print(f"garbage {event.reason}")
    return EXIT_OK


def cmd_ir_gen(args) -> int:
    try:
        mapping = _load_mapping(args.mapping)
    except (OSError, ir_nec.IrError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DISK
    commands = {name.lower(): cmd for cmd, name in mapping.items()}
    button = args.button.lower()
    if button not in commands:
        print(f"error: unknown button {args.button!r}", file=sys.stderr)
        return EXIT_USAGE
    train = ir_nec.encode_press(ir_nec.DEFAULT_ADDRESS, commands[button],
                                hold_us=args.hold * 1000)
    text = ir_nec.dump_capture(train)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sd_inspect(args) -> int:
    try:
        image = _open_image(args.image)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DISK

    print(f"image: {args.image} ({image.sector_count} sectors)")
    try:
        mbr = fat32_ro.Mbr.parse(image.read_sector(0))
    except fat32_ro.DiskError:
        print("mbr-signature-invalid", file=sys.stderr)
        return EXIT_DISK
    print("mbr: signature ok")
    for i, part in enumerate(mbr.partitions):
        print(f"partition {i}: type=0x{part.kind:02x} start={part.start_lba} "
              f"sectors={part.sector_count}")
    try:
        volume = fat32_ro.mount(image)
    except fat32_ro.FatError as exc:
        print(f"mount failed: {exc}", file=sys.stderr)
        return EXIT_DISK
    print(f"volume: bytes/sector={volume.bytes_per_sector} "
          f"sectors/cluster={volume.sectors_per_cluster} "
          f"reserved={volume.reserved_sectors} fats={volume.fat_count} "
          f"fat-sectors={volume.fat_size_sectors}")
    print(f"root-cluster={volume.root_dir_cluster} clusters={volume.total_clusters}")
    print("root listing:")
    for entry in fat32_ro.list_dir(volume, "/"):
        kind = "<dir>" if entry.is_directory else str(entry.size_bytes)
        print(f"  {entry.name} {kind}")
    return EXIT_OK


def cmd_fs_cat(args) -> int:
    try:
        image = _open_image(args.image)
        volume = fat32_ro.mount(image)
    except (OSError, ValueError, fat32_ro.FatError) as exc:
        print(f"mount failed: {exc}", file=sys.stderr)
        return EXIT_DISK
    try:
        handle = fat32_ro.open_path(volume, args.path)
    except (fat32_ro.NotFound, fat32_ro.IsDirectory) as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    sys.stdout.buffer.write(handle.read_all())
    handle.close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.script is None and not args.interactive:
        print("error: need --script or --interactive", file=sys.stderr)
        return EXIT_USAGE

    mapping = None
    if args.mapping:
        mapping = ir_nec.load_mapping(args.mapping)
    else:
        mapping = ir_nec.parse_mapping(_default_mapping_text())

    directives = None
    if args.script is not None:
        try:
            with open(args.script, "r", encoding="utf-8") as fh:
                directives = parse_script(fh.read(), mapping)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DISK
        except ScriptError as exc:
            print(f"script error: {exc}", file=sys.stderr)
            return EXIT_USAGE

    trace_fh = None
    try:
        try:
            image = _open_image(args.image)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DISK
        device = Board(image, mapping=mapping)
        if args.trace == "bus":
            trace_fh = open(args.trace_out, "w", encoding="utf-8") if args.trace_out else sys.stderr
            device.bus.trace_sink = lambda line, fh=trace_fh: print(line, file=fh)
        try:
            device.power_up()
        except (SdError, fat32_ro.FatError) as exc:
            print(f"device bring-up failed: {exc}", file=sys.stderr)
            return EXIT_DISK

        try:
            if directives is not None:
                blocks = device.run_script(directives)
                out = "\n".join(blocks)
                if args.snapshot_out:
                    with open(args.snapshot_out, "w", encoding="utf-8") as fh:
                        fh.write(out)
                else:
                    sys.stdout.write(out)
            else:
                _interactive_loop(device)
        except (ChunkTooLarge, Backpressure, SimulationAssertion) as exc:
            print(f"simulation assertion: {exc}", file=sys.stderr)
            return EXIT_SIM_ASSERT
        return EXIT_OK
    finally:
        if trace_fh is not None and trace_fh is not sys.stderr:
            trace_fh.close()


# --- interactive mode --------------------------------------------------------

_KEY_BUTTONS = {
    "p": "power", "a": "a", "b": "b", "c": "c",
    "u": "up", "d": "down", "l": "left", "r": "right",
    "\r": "center", "\n": "center",
}
_ARROW_BUTTONS = {"A": "up", "B": "down", "C": "right", "D": "left"}


def _draw(device: Board) -> None:
    rows = device.lcd_model.render()
    app = device.app.snapshot()
    print("+" + "-" * device.lcd_model.columns + "+")
    for row in rows:
        print(f"|{row}|")
    print("+" + "-" * device.lcd_model.columns + "+")
    print(f"[mode={app.mode} vol={app.volume_step} "
          f"consumed={device.codec_model.consumed_bytes}]  "
          "keys: p a b c arrows enter, q quits")


def _read_key(stdin) -> Optional[str]:
    ch = stdin.read(1)
    if not ch:
        return None
    if ch == "\x1b":  # arrow keys arrive as ESC [ A..D
        seq = stdin.read(2)
        if len(seq) == 2 and seq[0] == "[" and seq[1] in _ARROW_BUTTONS:
            return _ARROW_BUTTONS[seq[1]]
        return ""
    if ch == "q":
        return None
    return _KEY_BUTTONS.get(ch, "")


def _interactive_loop(device: Board) -> None:
    import contextlib

    stdin = sys.stdin
    raw = stdin.isatty()
    ctx = contextlib.nullcontext()
    if raw:
        import termios
        import tty

        class _RawMode:
            def __enter__(self):
                self.saved = termios.tcgetattr(stdin.fileno())
                tty.setcbreak(stdin.fileno())

            def __exit__(self, *exc):
                termios.tcsetattr(stdin.fileno(), termios.TCSADRAIN, self.saved)

        ctx = _RawMode()

    with ctx:
        _draw(device)
        while not device.app.halted:
            if raw:
                button = _read_key(stdin)
            else:
                line = stdin.readline()
                if not line:
                    button = None
                else:
                    token = line.strip().lower()
                    if token == "q":
                        button = None
                    elif token == "":
                        button = "center"
                    else:
                        button = _KEY_BUTTONS.get(token, token)
            if button is None:
                break
            if not button:
                continue
            try:
                device.press_and_settle(button)
            except ScriptError:
                continue
            _draw(device)


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="playersim",
        description="Deterministic emulation of an SD-card music player / text reader.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ir-decode", help="decode an IR capture file")
    p.add_argument("--capture", required=True)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TIMINGS.tolerance)
    p.add_argument("--address", type=lambda s: int(s, 16), default=ir_nec.DEFAULT_ADDRESS)
    p.set_defaults(func=cmd_ir_decode)

    p = sub.add_parser("ir-gen", help="generate an IR capture for a button press")
    p.add_argument("--button", required=True)
    p.add_argument("--mapping")
    p.add_argument("--hold", type=int, default=0, help="hold time in ms")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ir_gen)

    p = sub.add_parser("sd-inspect", help="report MBR/FAT geometry of an image")
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_sd_inspect)

    p = sub.add_parser("fs-cat", help="print a file from the image to stdout")
    p.add_argument("--image", required=True)
    p.add_argument("--path", required=True)
    p.set_defaults(func=cmd_fs_cat)

    p = sub.add_parser("simulate", help="run the emulated device")
    p.add_argument("--image", required=True)
    p.add_argument("--script")
    p.add_argument("--interactive", action="store_true")
    p.add_argument("--snapshot-out")
    p.add_argument("--mapping")
    p.add_argument("--trace", choices=["bus"])
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
