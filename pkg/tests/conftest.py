"""Shared fixtures: the canonical disk image built from committed payload.

The image is produced by scripts/make_fat32_image.py (a write-only
formatter that shares no code with the read driver) into a session tmp
dir.  Before building, the committed payload is checked against the
committed manifest so a stale checkout fails loudly.
"""

import hashlib
import importlib.util
import pathlib
import shutil
import subprocess
import sys

import pytest

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = pathlib.Path(__file__).resolve().parent / "fixtures"
PAYLOAD_DIR = FIXTURES / "payload"
MANIFEST = FIXTURES / "manifest.txt"
SCRIPTS = REPO_ROOT / "scripts"


def load_script_module(name):
    """Import a file from scripts/ (kept importable but never packaged)."""
    spec = importlib.util.spec_from_file_location(name, SCRIPTS / f"{name}.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def read_manifest():
    entries = {}
    for line in MANIFEST.read_text().splitlines():
        if not line.strip():
            continue
        path, size, digest = line.split(",")
        entries[path] = (int(size), digest)
    return entries


@pytest.fixture(scope="session")
def manifest():
    return read_manifest()


@pytest.fixture(scope="session")
def payload_dir(manifest):
    for path, (size, digest) in manifest.items():
        data = (PAYLOAD_DIR / path.lstrip("/")).read_bytes()
        assert len(data) == size, f"{path}: committed payload size drifted"
        assert hashlib.sha256(data).hexdigest() == digest, \
            f"{path}: committed payload hash drifted"
    # git cannot track an empty directory; the fixture tree defines one
    (PAYLOAD_DIR / "EMPTY").mkdir(exist_ok=True)
    return PAYLOAD_DIR


@pytest.fixture(scope="session")
def image_path(tmp_path_factory, payload_dir):
    out = tmp_path_factory.mktemp("image") / "fixture.img"
    subprocess.run(
        [sys.executable, str(SCRIPTS / "make_fat32_image.py"),
         "--out", str(out), "--payload-dir", str(payload_dir)],
        check=True, capture_output=True)
    return out


@pytest.fixture()
def image_copy(image_path, tmp_path):
    """A private mutable copy for corruption tests."""
    dst = tmp_path / "scratch.img"
    shutil.copyfile(image_path, dst)
    return dst


@pytest.fixture()
def sector_image(image_path):
    from playersim.sd_stack import SectorImage
    return SectorImage.from_file(image_path)


@pytest.fixture()
def board(image_path):
    from playersim.board import Board
    from playersim.sd_stack import SectorImage
    device = Board(SectorImage.from_file(image_path))
    device.power_up()
    return device


def build_custom_image(tmp_path, files, empty_dirs=()):
    """Build a throwaway image whose root holds the given {name: bytes}."""
    payload = tmp_path / "payload"
    for name, data in files.items():
        target = payload / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
    payload.mkdir(exist_ok=True)
    for name in empty_dirs:
        (payload / name).mkdir(parents=True, exist_ok=True)
    out = tmp_path / "custom.img"
    subprocess.run(
        [sys.executable, str(SCRIPTS / "make_fat32_image.py"),
         "--out", str(out), "--payload-dir", str(payload)],
        check=True, capture_output=True)
    return out
