import subprocess
import sys

import pytest

from playersim.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


SCRIPT = """# scripted run
t=100 press A
t=200 snapshot
t=400 hold DOWN 300
t=800 snapshot
t=900 press CENTER
t=1000 snapshot
t=1200 snapshot
t=1300 press C
t=1400 snapshot
"""


class TestIrTools:
    def test_gen_decode_round_trip(self, capsys, tmp_path):
        capture = tmp_path / "cap.txt"
        code, _, _ = run_cli(capsys, "ir-gen", "--button", "a",
                             "--out", str(capture))
        assert code == 0
        code, out, _ = run_cli(capsys, "ir-decode", "--capture", str(capture))
        assert code == 0
        assert out == "frame addr=10 cmd=46\n"

    def test_hold_500_gives_frame_plus_four_repeats(self, capsys, tmp_path):
        capture = tmp_path / "cap.txt"
        run_cli(capsys, "ir-gen", "--button", "down", "--hold", "500",
                "--out", str(capture))
        code, out, _ = run_cli(capsys, "ir-decode", "--capture", str(capture))
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 5
        assert lines[0] == "frame addr=10 cmd=15"
        assert lines[1:] == ["repeat"] * 4

    def test_decode_reports_wrong_address(self, capsys, tmp_path):
        from playersim import ir_nec
        capture = tmp_path / "cap.txt"
        capture.write_text(ir_nec.dump_capture(ir_nec.encode_frame(0x20, 0x45)))
        code, out, _ = run_cli(capsys, "ir-decode", "--capture", str(capture))
        assert code == 0
        assert out == "garbage wrong-address\n"

    def test_unknown_button_rejected(self, capsys):
        code, _, err = run_cli(capsys, "ir-gen", "--button", "launch")
        assert code == 2
        assert "unknown button" in err

    def test_tolerance_flag_controls_classification(self, capsys, tmp_path):
        import random
        from playersim import ir_nec
        rng = random.Random(4)
        train = ir_nec.PulseTrain()
        for level, duration in ir_nec.encode_frame(0x10, 0x45):
            train.append(level, round(duration * (1 + rng.uniform(-0.12, 0.12))))
        capture = tmp_path / "noisy.cap"
        capture.write_text(ir_nec.dump_capture(train))
        _, out, _ = run_cli(capsys, "ir-decode", "--capture", str(capture))
        assert out == "frame addr=10 cmd=45\n"  # default 0.20 tolerance
        _, out, _ = run_cli(capsys, "ir-decode", "--capture", str(capture),
                            "--tolerance", "0.01")
        assert out.startswith("garbage")

    def test_unreadable_capture_file(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "ir-decode", "--capture",
                               str(tmp_path / "absent.txt"))
        assert code != 0

    def test_unknown_flag_is_an_error(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            main(["ir-gen", "--button", "a", "--frobnicate"])
        assert excinfo.value.code == 2


class TestSdInspect:
    def test_valid_image_report(self, capsys, image_path, manifest):
        code, out, _ = run_cli(capsys, "sd-inspect", "--image", str(image_path))
        assert code == 0
        assert "mbr: signature ok" in out
        assert "partition 0: type=0x0c" in out
        assert "root-cluster=2" in out
        for path, (size, _) in manifest.items():
            name = path.lstrip("/")
            if "/" not in name:
                assert f"{name} {size}" in out

    def test_corrupted_sector0(self, capsys, image_copy):
        raw = bytearray(image_copy.read_bytes())
        raw[510:512] = b"\x00\x00"
        image_copy.write_bytes(raw)
        code, _, err = run_cli(capsys, "sd-inspect", "--image", str(image_copy))
        assert code == 3
        assert "mbr-signature-invalid" in err

    def test_empty_file_is_a_size_error(self, capsys, tmp_path):
        empty = tmp_path / "empty.img"
        empty.write_bytes(b"")
        code, _, err = run_cli(capsys, "sd-inspect", "--image", str(empty))
        assert code == 3
        assert "multiple of 512" in err


class TestFsCat:
    def test_payload_bytes_exact(self, image_path, manifest, tmp_path):
        import hashlib
        # use a subprocess so stdout stays binary-clean end to end
        result = subprocess.run(
            [sys.executable, "-m", "playersim", "fs-cat",
             "--image", str(image_path), "--path", "/SONG2.MP3"],
            capture_output=True)
        assert result.returncode == 0
        size, digest = manifest["/SONG2.MP3"]
        assert len(result.stdout) == size
        assert hashlib.sha256(result.stdout).hexdigest() == digest

    def test_missing_path_exits_4(self, capsys, image_path):
        code, _, err = run_cli(capsys, "fs-cat", "--image", str(image_path),
                               "--path", "/NOPE.TXT")
        assert code == 4

    def test_unmountable_image_exits_3(self, capsys, image_copy):
        raw = bytearray(image_copy.read_bytes())
        raw[510:512] = b"\x00\x00"
        image_copy.write_bytes(raw)
        code, _, _ = run_cli(capsys, "fs-cat", "--image", str(image_copy),
                             "--path", "/SONG1.MP3")
        assert code == 3


class TestSimulate:
    def test_scripted_run_snapshots(self, capsys, image_path, tmp_path):
        script = tmp_path / "run.script"
        script.write_text(SCRIPT)
        out_file = tmp_path / "snaps.txt"
        code, _, _ = run_cli(capsys, "simulate", "--image", str(image_path),
                             "--script", str(script),
                             "--snapshot-out", str(out_file))
        assert code == 0
        text = out_file.read_text()
        blocks = [b for b in text.split("\n\n") if b.strip()]
        assert len(blocks) == 5
        assert "mode=music" in blocks[0]
        assert "mode=menu" in blocks[4]

    def test_two_runs_are_byte_identical(self, capsys, image_path, tmp_path):
        script = tmp_path / "run.script"
        script.write_text(SCRIPT)
        outputs = []
        for n in range(2):
            out_file = tmp_path / f"snaps{n}.txt"
            code, _, _ = run_cli(capsys, "simulate", "--image", str(image_path),
                                 "--script", str(script),
                                 "--snapshot-out", str(out_file))
            assert code == 0
            outputs.append(out_file.read_bytes())
        assert outputs[0] == outputs[1]

    def test_script_parse_error_exits_2_before_running(self, capsys, image_path,
                                                       tmp_path):
        script = tmp_path / "bad.script"
        script.write_text("t=100 press WARP\n")
        code, _, err = run_cli(capsys, "simulate", "--image", str(image_path),
                               "--script", str(script))
        assert code == 2
        assert "unknown button" in err

    def test_malformed_line_exits_2(self, capsys, image_path, tmp_path):
        script = tmp_path / "bad.script"
        script.write_text("press A at some point\n")
        code, _, _ = run_cli(capsys, "simulate", "--image", str(image_path),
                             "--script", str(script))
        assert code == 2

    def test_requires_script_or_interactive(self, capsys, image_path):
        code, _, _ = run_cli(capsys, "simulate", "--image", str(image_path))
        assert code == 2

    def test_bus_trace_emitted(self, capsys, image_path, tmp_path):
        script = tmp_path / "run.script"
        script.write_text("t=100 press A\nt=200 snapshot\n")
        trace = tmp_path / "bus.trace"
        code, _, _ = run_cli(capsys, "simulate", "--image", str(image_path),
                             "--script", str(script),
                             "--snapshot-out", str(tmp_path / "s.txt"),
                             "--trace", "bus", "--trace-out", str(trace))
        assert code == 0
        first = trace.read_text().splitlines()[0]
        assert first.startswith("t=")
        assert " cs=" in first and " mosi=" in first and " miso=" in first \
            and " mode=" in first

    def test_console_script_entry_point(self, image_path, tmp_path):
        script = tmp_path / "run.script"
        script.write_text("t=100 press A\nt=250 snapshot\n")
        result = subprocess.run(
            ["playersim", "simulate", "--image", str(image_path),
             "--script", str(script)],
            capture_output=True, text=True)
        assert result.returncode == 0
        assert "mode=music" in result.stdout
