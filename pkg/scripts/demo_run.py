#!/usr/bin/env python3
"""Build a fixture image, boot the emulated device, replay a short script.

Run from the repository root: python scripts/demo_run.py
"""

import pathlib
import subprocess
import sys
import tempfile

REPO = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from playersim.board import Board, parse_script  # noqa: E402
from playersim.sd_stack import SectorImage  # noqa: E402

SCRIPT = """
t=100 press A          # enter music mode
t=300 snapshot
t=500 hold UP 250      # volume up, held (one repeat lands)
t=900 snapshot
t=1000 press RIGHT     # next track
t=1200 snapshot
t=1300 press B         # ignored inside music mode
t=1400 press C         # back to menu
t=1500 press B         # reading mode
t=1700 press DOWN      # scroll one line
t=1900 snapshot
"""


def main():
    with tempfile.TemporaryDirectory() as tmp:
        image = pathlib.Path(tmp) / "demo.img"
        subprocess.run(
            [sys.executable, str(REPO / "scripts" / "make_fat32_image.py"),
             "--out", str(image),
             "--payload-dir", str(REPO / "tests" / "fixtures" / "payload")],
            check=True, capture_output=True)

        device = Board(SectorImage.from_file(image))
        device.power_up()
        print("device up, virtual t=%d µs" % device.scheduler.now)
        print("SD init trace (command, argument, crc byte, r1):")
        for index, argument, crc, r1 in device.sd.command_trace:
            print(f"  CMD{index:<2} 0x{argument:08x} 0x{crc:02x} -> 0x{r1:02x}")
        print()
        for block in device.run_script(parse_script(SCRIPT, device.mapping)):
            print(block)
    return 0


if __name__ == "__main__":
    sys.exit(main())
