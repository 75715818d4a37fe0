#!/usr/bin/env python3
"""Generate the committed fixture payload tree and its manifest.

Payloads are seeded pseudo-random (songs) and fixed text, so regenerating
always reproduces the committed bytes.  The manifest records one line per
file: ``<path>,<size>,<sha-256 hex>``.

Usage: make_fixture_payload.py --dir tests/fixtures
"""

import argparse
import hashlib
import os
import random
import sys

README_TEXT = """ROAD NOTES
----------
Keep the charger in the glovebox.
The speaker wire is the blue pair.
Coolant top-up every other month.
Tire pressure 32 front 30 rear.
Wiper blades bought 2026-03.
Oil change due at 84000 km.
Spare fuses under the seat.
Jack handle clips to the boot lid.
First aid kit expires 2027-11.
Map light switch sticks sometimes.
Radio code is in the service book.
Rear left door lock needs grease.
Antenna unscrews for the car wash.
Roof rack bolts in the toolbox.
Tow hook cover pops off forward.
Check plate lamps before winter.
"""

NESTED_TEXT = "nested file for path-walk checks\nsecond line\n"


def _song(seed, size):
    return random.Random(seed).randbytes(size)


PAYLOADS = {
    "SONG1.MP3": _song(0xA1, 40960),
    "SONG2.MP3": _song(0xA2, 24576),
    "README.TXT": README_TEXT.encode("ascii"),
    "IGNORE.DAT": _song(0xA3, 1000),
    os.path.join("SUB", "NESTED.TXT"): NESTED_TEXT.encode("ascii"),
}

EMPTY_DIRS = ["EMPTY"]


def write_payload(payload_dir):
    for rel, data in PAYLOADS.items():
        path = os.path.join(payload_dir, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(data)
    for rel in EMPTY_DIRS:
        os.makedirs(os.path.join(payload_dir, rel), exist_ok=True)


def manifest_lines(payload_dir):
    lines = []
    for base, _dirs, files in os.walk(payload_dir):
        for name in files:
            path = os.path.join(base, name)
            rel = "/" + os.path.relpath(path, payload_dir).replace(os.sep, "/")
            with open(path, "rb") as fh:
                data = fh.read()
            lines.append(f"{rel},{len(data)},{hashlib.sha256(data).hexdigest()}")
    return sorted(lines)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dir", required=True, help="fixture root directory")
    args = parser.parse_args()
    payload_dir = os.path.join(args.dir, "payload")
    write_payload(payload_dir)
    manifest = os.path.join(args.dir, "manifest.txt")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest_lines(payload_dir)) + "\n")
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
