"""Read-only FAT32 driver over a block-device contract.

The contract is a single method: ``read_sector(lba) -> bytes`` (512 bytes,
absolute LBA).  Both the SD host driver and a plain image file satisfy it.
Volumes must carry an MBR — sector 0 is only trusted when it ends in the
0x55,0xAA signature — and the first FAT32-typed partition wins.  Short
(8.3) names only; long-filename entries are skipped, not parsed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator, List, Optional

SECTOR_SIZE = 512

MBR_SIGNATURE_OFFSET = 510
FAT32_PARTITION_TYPES = (0x0B, 0x0C)
FAT32_MIN_CLUSTERS = 65525

FAT_ENTRY_MASK = 0x0FFFFFFF
FAT_EOC_MIN = 0x0FFFFFF8
FAT_BAD = 0x0FFFFFF7

ATTR_READ_ONLY = 0x01
ATTR_HIDDEN = 0x02
ATTR_SYSTEM = 0x04
ATTR_VOLUME_ID = 0x08
ATTR_DIRECTORY = 0x10
ATTR_ARCHIVE = 0x20
ATTR_LONG_NAME = 0x0F


class FatError(Exception):
    pass


class DiskError(FatError):
    """Device-level failure; carries the classic numeric code 3."""

    code = 3


class NoFatPartition(FatError):
    pass


class BadBpb(FatError):
    pass


class NotFound(FatError):
    pass


class IsDirectory(FatError):
    pass


class ClosedHandle(FatError):
    pass


class ChainError(FatError):
    """FAT entry is free, bad, or points outside the cluster space."""


@dataclass(frozen=True)
class PartitionEntry:
    kind: int
    start_lba: int
    sector_count: int


@dataclass(frozen=True)
class Mbr:
    partitions: List[PartitionEntry]

    @classmethod
    def parse(cls, sector0: bytes) -> "Mbr":
        if sector0[MBR_SIGNATURE_OFFSET:MBR_SIGNATURE_OFFSET + 2] != b"\x55\xaa":
            raise DiskError("sector 0 lacks the 0x55,0xAA boot signature")
        parts = []
        for i in range(4):
            raw = sector0[446 + 16 * i: 446 + 16 * (i + 1)]
            kind = raw[4]
            start, count = struct.unpack_from("<II", raw, 8)
            if kind != 0 and count > 0:
                parts.append(PartitionEntry(kind, start, count))
        return cls(partitions=parts)


@dataclass(frozen=True)
class DirEntry:
    name: str
    attributes: int
    first_cluster: int
    size_bytes: int

    @property
    def is_directory(self) -> bool:
        return bool(self.attributes & ATTR_DIRECTORY)

    @property
    def extension(self) -> str:
        _, _, ext = self.name.rpartition(".")
        return ext


def _format_short_name(raw: bytes) -> str:
    base = raw[0:8].decode("ascii", errors="replace").rstrip(" ")
    ext = raw[8:11].decode("ascii", errors="replace").rstrip(" ")
    return f"{base}.{ext}" if ext else base


@dataclass
class FatVolume:
    """Mounted geometry; immutable once mount() returns."""

    device: object
    partition_start_lba: int
    bytes_per_sector: int
    sectors_per_cluster: int
    reserved_sectors: int
    fat_count: int
    fat_size_sectors: int
    fat_start_lba: int
    data_start_lba: int
    root_dir_cluster: int
    total_clusters: int

    def cluster_lba(self, cluster: int) -> int:
        return self.data_start_lba + (cluster - 2) * self.sectors_per_cluster

    @property
    def cluster_size(self) -> int:
        return self.sectors_per_cluster * self.bytes_per_sector


def mount(device) -> FatVolume:
    """Parse MBR + BPB and return the volume geometry.

    Raises DiskError (code 3) on a bad MBR signature, NoFatPartition when
    no FAT32-typed entry exists, BadBpb when the BPB is not a usable
    FAT32 layout.
    """
    mbr = Mbr.parse(device.read_sector(0))
    fat_parts = [p for p in mbr.partitions if p.kind in FAT32_PARTITION_TYPES]
    if not fat_parts:
        raise NoFatPartition("no FAT32 partition entry in the MBR")
    part = fat_parts[0]

    vbr = device.read_sector(part.start_lba)
    if vbr[MBR_SIGNATURE_OFFSET:MBR_SIGNATURE_OFFSET + 2] != b"\x55\xaa":
        raise BadBpb("volume boot record lacks its signature")

    bytes_per_sector = struct.unpack_from("<H", vbr, 11)[0]
    sectors_per_cluster = vbr[13]
    reserved = struct.unpack_from("<H", vbr, 14)[0]
    fat_count = vbr[16]
    root_entries = struct.unpack_from("<H", vbr, 17)[0]
    fatsz16 = struct.unpack_from("<H", vbr, 22)[0]
    totsec16 = struct.unpack_from("<H", vbr, 19)[0]
    totsec32 = struct.unpack_from("<I", vbr, 32)[0]
    fatsz32 = struct.unpack_from("<I", vbr, 36)[0]
    root_cluster = struct.unpack_from("<I", vbr, 44)[0]

    if bytes_per_sector != SECTOR_SIZE:
        raise BadBpb(f"unsupported sector size {bytes_per_sector}")
    if sectors_per_cluster == 0 or sectors_per_cluster & (sectors_per_cluster - 1):
        raise BadBpb(f"bad sectors-per-cluster {sectors_per_cluster}")
    if fat_count == 0 or fatsz32 == 0 or root_entries != 0 or fatsz16 != 0:
        raise BadBpb("BPB is not a FAT32 layout")

    total_sectors = totsec32 or totsec16
    data_sectors = total_sectors - reserved - fat_count * fatsz32
    total_clusters = data_sectors // sectors_per_cluster
    if total_clusters < FAT32_MIN_CLUSTERS:
        raise BadBpb(f"{total_clusters} clusters is below the FAT32 threshold")
    if root_cluster < 2:
        raise BadBpb(f"bad root directory cluster {root_cluster}")

    fat_start = part.start_lba + reserved
    return FatVolume(
        device=device,
        partition_start_lba=part.start_lba,
        bytes_per_sector=bytes_per_sector,
        sectors_per_cluster=sectors_per_cluster,
        reserved_sectors=reserved,
        fat_count=fat_count,
        fat_size_sectors=fatsz32,
        fat_start_lba=fat_start,
        data_start_lba=fat_start + fat_count * fatsz32,
        root_dir_cluster=root_cluster,
        total_clusters=total_clusters,
    )


def next_cluster(volume: FatVolume, cluster: int) -> Optional[int]:
    """Follow one FAT link; None at end-of-chain."""
    if not 2 <= cluster < volume.total_clusters + 2:
        raise ChainError(f"cluster {cluster} outside cluster space")
    byte_offset = cluster * 4
    lba = volume.fat_start_lba + byte_offset // SECTOR_SIZE
    sector = volume.device.read_sector(lba)
    entry = struct.unpack_from("<I", sector, byte_offset % SECTOR_SIZE)[0] & FAT_ENTRY_MASK
    if entry >= FAT_EOC_MIN:
        return None
    if entry == 0:
        raise ChainError(f"cluster {cluster} links to a free entry")
    if entry == FAT_BAD:
        raise ChainError(f"cluster {cluster} links to a bad-cluster mark")
    if not 2 <= entry < volume.total_clusters + 2:
        raise ChainError(f"cluster {cluster} links outside cluster space ({entry:#x})")
    return entry


def _cluster_chain(volume: FatVolume, first: int) -> Iterator[int]:
    cluster = first
    seen = 0
    while cluster is not None:
        yield cluster
        seen += 1
        if seen > volume.total_clusters:
            raise ChainError("cluster chain loops")
        cluster = next_cluster(volume, cluster)


def _iter_dir_entries(volume: FatVolume, first_cluster: int) -> Iterator[DirEntry]:
    """Raw 32-byte entries in on-disk order; terminator/deleted/LFN skipped."""
    for cluster in _cluster_chain(volume, first_cluster):
        base = volume.cluster_lba(cluster)
        for s in range(volume.sectors_per_cluster):
            sector = volume.device.read_sector(base + s)
            for off in range(0, SECTOR_SIZE, 32):
                raw = sector[off:off + 32]
                first = raw[0]
                if first == 0x00:
                    return
                if first == 0xE5:
                    continue
                attrs = raw[11]
                if attrs & ATTR_LONG_NAME == ATTR_LONG_NAME:
                    continue
                if attrs & ATTR_VOLUME_ID:
                    continue
                cluster_hi = struct.unpack_from("<H", raw, 20)[0]
                cluster_lo = struct.unpack_from("<H", raw, 26)[0]
                size = struct.unpack_from("<I", raw, 28)[0]
                yield DirEntry(
                    name=_format_short_name(raw),
                    attributes=attrs,
                    first_cluster=(cluster_hi << 16) | cluster_lo,
                    size_bytes=size,
                )


def _split_path(path: str) -> List[str]:
    parts = [p for p in path.replace("\\", "/").split("/") if p]
    return [p.upper() for p in parts]


def _resolve(volume: FatVolume, path: str) -> Optional[DirEntry]:
    """Walk a path from the root; None means the root directory itself."""
    parts = _split_path(path)
    if not parts:
        return None
    current = volume.root_dir_cluster
    entry: Optional[DirEntry] = None
    for i, name in enumerate(parts):
        entry = None
        for candidate in _iter_dir_entries(volume, current):
            if candidate.name.upper() == name:
                entry = candidate
                break
        if entry is None:
            raise NotFound(path)
        if i < len(parts) - 1:
            if not entry.is_directory:
                raise NotFound(path)
            current = entry.first_cluster or volume.root_dir_cluster
    return entry


def list_dir(volume: FatVolume, path: str = "/") -> List[DirEntry]:
    """Entries of a directory in on-disk order, dot entries filtered."""
    entry = _resolve(volume, path)
    if entry is None:
        cluster = volume.root_dir_cluster
    else:
        if not entry.is_directory:
            raise NotFound(f"{path} is not a directory")
        cluster = entry.first_cluster or volume.root_dir_cluster
    return [e for e in _iter_dir_entries(volume, cluster)
            if e.name not in (".", "..")]


@dataclass
class FileHandle:
    """Open-file cursor: sequential reads that follow the cluster chain."""

    volume: FatVolume
    entry: DirEntry
    offset_bytes: int = 0
    is_open: bool = True
    _cluster: Optional[int] = field(default=None, repr=False)
    _cluster_index: int = field(default=0, repr=False)
    _cached_lba: Optional[int] = field(default=None, repr=False)
    _cached_sector: bytes = field(default=b"", repr=False)

    @property
    def size_bytes(self) -> int:
        return self.entry.size_bytes

    def _sector(self, lba: int) -> bytes:
        if lba != self._cached_lba:
            self._cached_sector = self.volume.device.read_sector(lba)
            self._cached_lba = lba
        return self._cached_sector

    def read(self, n: int) -> bytes:
        """Return up to ``n`` bytes, fewer only at end of file."""
        if not self.is_open:
            raise ClosedHandle("read on a closed handle")
        if n < 0:
            raise ValueError("read size must be non-negative")
        remaining = self.size_bytes - self.offset_bytes
        n = min(n, remaining)
        if n <= 0:
            return b""

        if self._cluster is None:
            if self.entry.first_cluster < 2:
                raise ChainError("file has data but no first cluster")
            self._cluster = self.entry.first_cluster
            self._cluster_index = 0

        vol = self.volume
        out = bytearray()
        while n > 0:
            target_index = self.offset_bytes // vol.cluster_size
            while self._cluster_index < target_index:
                nxt = next_cluster(vol, self._cluster)
                if nxt is None:
                    raise ChainError("chain ended before the recorded file size")
                self._cluster = nxt
                self._cluster_index += 1
            in_cluster = self.offset_bytes % vol.cluster_size
            lba = vol.cluster_lba(self._cluster) + in_cluster // SECTOR_SIZE
            in_sector = self.offset_bytes % SECTOR_SIZE
            take = min(n, SECTOR_SIZE - in_sector)
            out += self._sector(lba)[in_sector:in_sector + take]
            self.offset_bytes += take
            n -= take
        return bytes(out)

    def read_all(self) -> bytes:
        return self.read(self.size_bytes - self.offset_bytes)

    def close(self) -> None:
        if not self.is_open:
            raise ClosedHandle("handle already closed")
        self.is_open = False


def open_path(volume: FatVolume, path: str) -> FileHandle:
    """Open a file by absolute 8.3 path (case-insensitive)."""
    entry = _resolve(volume, path)
    if entry is None or entry.is_directory:
        if entry is None:
            raise IsDirectory("cannot open the root directory as a file")
        raise IsDirectory(path)
    return FileHandle(volume=volume, entry=entry)
