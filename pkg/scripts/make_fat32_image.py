#!/usr/bin/env python3
"""Build an MBR-partitioned FAT32 disk image from a payload directory.

Write-only formatter, intentionally independent of the playersim package:
the read driver is tested against images this tool produces, so the two
sides must never share code.

Layout: MBR (one 0x0C partition), FAT32 volume with two FATs, fixed
timestamps and volume id so the output is byte-reproducible.  Cluster
count stays above the 65525 FAT32 floor; the file is written sparsely.

Usage: make_fat32_image.py --out disk.img --payload-dir payload/
"""

import argparse
import os
import struct
import sys

SECTOR = 512
PART_START = 64
RESERVED = 32
NUM_FATS = 2
SPC = 1  # sectors per cluster
DATA_CLUSTERS = 65600  # > 65525 so the volume is genuinely FAT32
VOLUME_ID = 0x20260809
VOLUME_LABEL = b"MUSIC      "

# fixed timestamps keep images byte-identical across runs
FAT_DATE = ((2026 - 1980) << 9) | (8 << 5) | 9
FAT_TIME = (12 << 11) | (0 << 5) | 0

ATTR_DIRECTORY = 0x10
ATTR_ARCHIVE = 0x20
ATTR_VOLUME_ID = 0x08

EOC = 0x0FFFFFFF


def fat_size_sectors():
    entries = DATA_CLUSTERS + 2
    return (entries * 4 + SECTOR - 1) // SECTOR


def short_name(name):
    """Encode an 8.3 filename into the 11-byte directory form."""
    name = name.upper()
    if "." in name:
        base, ext = name.rsplit(".", 1)
    else:
        base, ext = name, ""
    if not base or len(base) > 8 or len(ext) > 3:
        raise SystemExit(f"{name!r} is not a valid 8.3 name")
    for ch in base + ext:
        if ch in ' "*+,/:;<=>?[\\]|' or ord(ch) < 0x20:
            raise SystemExit(f"{name!r} contains a character invalid in 8.3 names")
    return base.ljust(8).encode("ascii") + ext.ljust(3).encode("ascii")


def dir_entry(name11, attrs, cluster, size):
    return struct.pack(
        "<11sBBBHHHHHHHI",
        name11, attrs, 0, 0,
        FAT_TIME, FAT_DATE, FAT_DATE,
        (cluster >> 16) & 0xFFFF,
        FAT_TIME, FAT_DATE,
        cluster & 0xFFFF, size)


class Node:
    def __init__(self, name, is_dir, payload=b"", children=None):
        self.name = name
        self.is_dir = is_dir
        self.payload = payload
        self.children = children or []
        self.first_cluster = 0
        self.cluster_count = 0


def scan_tree(root_dir):
    def walk(path, name):
        if os.path.isdir(path):
            children = []
            for child in sorted(os.listdir(path)):
                children.append(walk(os.path.join(path, child), child))
            return Node(name, True, children=children)
        with open(path, "rb") as fh:
            return Node(name, False, payload=fh.read())

    return walk(root_dir, "")


def dir_bytes_size(node, is_root):
    entries = len(node.children) + (1 if is_root else 2)  # label or dot pair
    return entries * 32


def allocate(root):
    """Assign cluster runs in a deterministic depth-first order."""
    next_cluster = [2]

    def assign(node, is_root):
        size = dir_bytes_size(node, is_root) if node.is_dir else len(node.payload)
        clusters = max(1, (size + SPC * SECTOR - 1) // (SPC * SECTOR)) if node.is_dir \
            else (size + SPC * SECTOR - 1) // (SPC * SECTOR)
        if clusters:
            node.first_cluster = next_cluster[0]
            node.cluster_count = clusters
            next_cluster[0] += clusters
        for child in node.children:
            assign(child, False)

    assign(root, True)
    used = next_cluster[0] - 2
    if used > DATA_CLUSTERS:
        raise SystemExit(f"payload needs {used} clusters, image holds {DATA_CLUSTERS}")
    return used


def serialize_dir(node, is_root, parent_cluster):
    out = bytearray()
    if is_root:
        out += dir_entry(VOLUME_LABEL, ATTR_VOLUME_ID, 0, 0)
    else:
        out += dir_entry(b".          ", ATTR_DIRECTORY, node.first_cluster, 0)
        out += dir_entry(b"..         ", ATTR_DIRECTORY,
                         0 if parent_cluster == 2 else parent_cluster, 0)
    for child in node.children:
        attrs = ATTR_DIRECTORY if child.is_dir else ATTR_ARCHIVE
        size = 0 if child.is_dir else len(child.payload)
        out += dir_entry(short_name(child.name), attrs, child.first_cluster, size)
    return bytes(out)


def boot_sector(total_sectors, fatsz):
    bs = bytearray(SECTOR)
    bs[0:3] = b"\xeb\x58\x90"
    bs[3:11] = b"MKIMG1.0"
    struct.pack_into("<H", bs, 11, SECTOR)          # bytes per sector
    bs[13] = SPC
    struct.pack_into("<H", bs, 14, RESERVED)
    bs[16] = NUM_FATS
    struct.pack_into("<H", bs, 17, 0)               # FAT32: no root entries
    struct.pack_into("<H", bs, 19, 0)               # totsec16
    bs[21] = 0xF8                                   # media descriptor
    struct.pack_into("<H", bs, 22, 0)               # fatsz16
    struct.pack_into("<H", bs, 24, 32)              # sectors per track
    struct.pack_into("<H", bs, 26, 64)              # heads
    struct.pack_into("<I", bs, 28, PART_START)      # hidden sectors
    struct.pack_into("<I", bs, 32, total_sectors)   # totsec32
    struct.pack_into("<I", bs, 36, fatsz)           # fatsz32
    struct.pack_into("<H", bs, 40, 0)               # ext flags: mirrored
    struct.pack_into("<H", bs, 42, 0)               # fs version
    struct.pack_into("<I", bs, 44, 2)               # root cluster
    struct.pack_into("<H", bs, 48, 1)               # fsinfo sector
    struct.pack_into("<H", bs, 50, 6)               # backup boot sector
    bs[64] = 0x80                                   # drive number
    bs[66] = 0x29                                   # extended boot signature
    struct.pack_into("<I", bs, 67, VOLUME_ID)
    bs[71:82] = VOLUME_LABEL
    bs[82:90] = b"FAT32   "
    bs[510] = 0x55
    bs[511] = 0xAA
    return bytes(bs)


def fsinfo_sector(free_clusters, next_free):
    fs = bytearray(SECTOR)
    struct.pack_into("<I", fs, 0, 0x41615252)
    struct.pack_into("<I", fs, 484, 0x61417272)
    struct.pack_into("<I", fs, 488, free_clusters)
    struct.pack_into("<I", fs, 492, next_free)
    struct.pack_into("<I", fs, 508, 0xAA550000)
    return bytes(fs)


def mbr_sector(total_volume_sectors):
    mbr = bytearray(SECTOR)
    entry = struct.pack("<BBBBBBBBII",
                        0x00,            # not bootable
                        0xFE, 0xFF, 0xFF,  # CHS start (LBA marker)
                        0x0C,            # FAT32 LBA
                        0xFE, 0xFF, 0xFF,  # CHS end
                        PART_START, total_volume_sectors)
    mbr[446:462] = entry
    mbr[510] = 0x55
    mbr[511] = 0xAA
    return bytes(mbr)


def build_image(out_path, payload_dir):
    fatsz = fat_size_sectors()
    volume_sectors = RESERVED + NUM_FATS * fatsz + DATA_CLUSTERS * SPC
    image_sectors = PART_START + volume_sectors

    root = scan_tree(payload_dir)
    used = allocate(root)

    fat = {0: 0x0FFFFFF8, 1: EOC}

    def chain(node):
        for i in range(node.cluster_count):
            cl = node.first_cluster + i
            fat[cl] = (cl + 1) if i + 1 < node.cluster_count else EOC
        for child in node.children:
            chain(child)

    chain(root)

    with open(out_path, "wb") as fh:
        fh.truncate(image_sectors * SECTOR)

        def write_at(lba, data):
            fh.seek(lba * SECTOR)
            fh.write(data)

        write_at(0, mbr_sector(volume_sectors))
        vbr = boot_sector(volume_sectors, fatsz)
        write_at(PART_START, vbr)
        write_at(PART_START + 1, fsinfo_sector(DATA_CLUSTERS - used, 2 + used))
        write_at(PART_START + 6, vbr)
        write_at(PART_START + 7, fsinfo_sector(DATA_CLUSTERS - used, 2 + used))

        fat_start = PART_START + RESERVED
        fat_image = bytearray((max(fat) // (SECTOR // 4) + 1) * SECTOR)
        for cl, value in fat.items():
            struct.pack_into("<I", fat_image, cl * 4, value)
        for copy in range(NUM_FATS):
            write_at(fat_start + copy * fatsz, bytes(fat_image))

        data_start = fat_start + NUM_FATS * fatsz

        def cluster_lba(cl):
            return data_start + (cl - 2) * SPC

        def write_node(node, is_root, parent_cluster):
            data = serialize_dir(node, is_root, parent_cluster) if node.is_dir \
                else node.payload
            if node.cluster_count:
                write_at(cluster_lba(node.first_cluster), data)
            for child in node.children:
                write_node(child, False, node.first_cluster)

        write_node(root, True, 2)

    return image_sectors * SECTOR


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--payload-dir", required=True)
    args = parser.parse_args()
    size = build_image(args.out, args.payload_dir)
    print(f"{args.out}: {size} bytes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
