#!/usr/bin/env python3
"""Offline FAT32 chain dump — an oracle independent of the main package.

Parses MBR + BPB with its own minimal code and prints the cluster chain
starting at a given cluster, one number per line.

Usage: dump_fat_chain.py IMAGE FIRST_CLUSTER
"""

import struct
import sys

SECTOR = 512


def read_sector(fh, lba):
    fh.seek(lba * SECTOR)
    return fh.read(SECTOR)


def volume_geometry(fh):
    mbr = read_sector(fh, 0)
    if mbr[510:512] != b"\x55\xaa":
        raise SystemExit("bad MBR signature")
    part_start = None
    for i in range(4):
        entry = mbr[446 + 16 * i: 446 + 16 * (i + 1)]
        if entry[4] in (0x0B, 0x0C):
            part_start = struct.unpack_from("<I", entry, 8)[0]
            break
    if part_start is None:
        raise SystemExit("no FAT32 partition")
    vbr = read_sector(fh, part_start)
    reserved = struct.unpack_from("<H", vbr, 14)[0]
    fatsz32 = struct.unpack_from("<I", vbr, 36)[0]
    return part_start + reserved, fatsz32


def chain(fh, fat_start, first_cluster):
    clusters = []
    cluster = first_cluster
    while True:
        clusters.append(cluster)
        off = cluster * 4
        sector = read_sector(fh, fat_start + off // SECTOR)
        entry = struct.unpack_from("<I", sector, off % SECTOR)[0] & 0x0FFFFFFF
        if entry >= 0x0FFFFFF8:
            return clusters
        if entry < 2:
            raise SystemExit(f"broken chain at cluster {cluster} -> {entry:#x}")
        cluster = entry


def main():
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    image, first = sys.argv[1], int(sys.argv[2], 0)
    with open(image, "rb") as fh:
        fat_start, _ = volume_geometry(fh)
        for cluster in chain(fh, fat_start, first):
            print(cluster)
    return 0


if __name__ == "__main__":
    sys.exit(main())
