import pytest
from hypothesis import given
from hypothesis import strategies as st

from playersim.simcore import Scheduler
from playersim.spi_fabric import (NoSlaveSelected, SpiBus, SpiConfig, SpiSlave,
                                  UnknownChipSelect, bitrate_remainder,
                                  effective_bitrate, transfer_duration_us)


class EchoSlave(SpiSlave):
    """Queues bytes to transmit; logs every byte it receives."""

    def __init__(self, config=None):
        super().__init__(config or SpiConfig.from_mode(0))
        self.tx_queue = []
        self.received = []
        self.select_edges = 0
        self.deselect_edges = 0

    def on_select(self):
        self.select_edges += 1

    def on_deselect(self):
        self.deselect_edges += 1

    def exchange(self, mosi, bitrate_hz):
        out = self.tx_queue.pop(0) if self.tx_queue else 0xFF
        self.received.append(mosi)
        return out


def make_bus(master_mode=0, slave_mode=0, divisor=24):
    sch = Scheduler()
    bus = SpiBus(sch, SpiConfig.from_mode(master_mode, divisor=divisor))
    slave = EchoSlave(SpiConfig.from_mode(slave_mode))
    bus.attach("dev", slave)
    return sch, bus, slave


class TestBitrate:
    def test_48mhz_divided_by_24_is_2mhz(self):
        assert effective_bitrate(SpiConfig(divisor=24)) == 2_000_000

    def test_identity_divisor(self):
        cfg = SpiConfig(divisor=1, source_clock_hz=7_372_800)
        assert effective_bitrate(cfg) == 7_372_800

    def test_divisor_400_gives_120khz(self):
        assert effective_bitrate(SpiConfig(divisor=400)) == 120_000

    def test_remainder_reported_separately(self):
        cfg = SpiConfig(divisor=7, source_clock_hz=100)
        assert effective_bitrate(cfg) == 14
        assert bitrate_remainder(cfg) == 2

    @given(st.integers(1, 1 << 16), st.integers(1, 1 << 14))
    def test_exact_division_inverts(self, rate, divisor):
        cfg = SpiConfig(divisor=divisor, source_clock_hz=rate * divisor)
        assert effective_bitrate(cfg) * divisor == cfg.source_clock_hz

    def test_bad_configs_rejected(self):
        with pytest.raises(ValueError):
            SpiConfig(divisor=0)
        with pytest.raises(ValueError):
            SpiConfig(ckph=2)
        with pytest.raises(ValueError):
            SpiConfig(source_clock_hz=0)


class TestModeTable:
    def test_mode_numbering(self):
        assert SpiConfig(ckph=0, ckpl=0).mode == 0
        assert SpiConfig(ckph=0, ckpl=1).mode == 1
        assert SpiConfig(ckph=1, ckpl=0).mode == 2
        assert SpiConfig(ckph=1, ckpl=1).mode == 3

    def test_from_mode_round_trip(self):
        for mode in range(4):
            assert SpiConfig.from_mode(mode).mode == mode


class TestTransfer:
    def test_matched_modes_exchange_cleanly(self):
        _, bus, slave = make_bus()
        slave.tx_queue = [0xA3]
        bus.select("dev")
        assert bus.transfer("dev", 0x5A) == 0xA3
        assert slave.received == [0x5A]

    def test_conservation_in_all_matched_modes(self):
        payload = bytes(range(0, 256, 7))
        for mode in range(4):
            _, bus, slave = make_bus(master_mode=mode, slave_mode=mode)
            slave.tx_queue = list(payload)
            bus.select("dev")
            got = bytes(bus.transfer("dev", b) for b in payload)
            assert got == payload
            assert bytes(slave.received) == payload

    def test_mismatch_corrupts_both_directions(self):
        _, bus, slave = make_bus(master_mode=2, slave_mode=0)
        slave.tx_queue = [0xA3, 0xA3]
        bus.select("dev")
        got = bus.transfer("dev", 0x5A)
        assert got != 0xA3
        assert slave.received != [0x5A]

    def test_corruption_iff_phase_or_polarity_differ(self):
        for m in range(4):
            for s in range(4):
                _, bus, slave = make_bus(master_mode=m, slave_mode=s)
                slave.tx_queue = [0x37]
                bus.select("dev")
                got = bus.transfer("dev", 0x5C)
                if m == s:
                    assert (got, slave.received) == (0x37, [0x5C])
                else:
                    assert got != 0x37 or slave.received != [0x5C]

    def test_corruption_is_deterministic(self):
        results = set()
        for _ in range(3):
            _, bus, slave = make_bus(master_mode=1, slave_mode=2)
            slave.tx_queue = [0x81]
            bus.select("dev")
            results.add((bus.transfer("dev", 0x7E), slave.received[0]))
        assert len(results) == 1

    def test_receive_only_idiom_clocks_dummy_ff(self):
        _, bus, slave = make_bus()
        slave.tx_queue = [0x42]
        bus.select("dev")
        assert bus.transfer("dev", 0xFF) == 0x42
        assert slave.received == [0xFF]


class TestReceiveMulti:
    def test_count_one_equals_single_transfer(self):
        _, bus, slave = make_bus()
        slave.tx_queue = [0x99]
        bus.select("dev")
        assert bus.receive_multi("dev", 1) == b"\x99"

    def test_multi_matches_byte_loop_oracle(self):
        payload = bytes((i * 37 + 5) & 0xFF for i in range(512))
        _, bus_a, slave_a = make_bus()
        slave_a.tx_queue = list(payload)
        bus_a.select("dev")
        multi = bus_a.receive_multi("dev", 512)

        _, bus_b, slave_b = make_bus()
        slave_b.tx_queue = list(payload)
        bus_b.select("dev")
        loop = bytes(bus_b.transfer("dev", 0xFF) for _ in range(512))

        assert multi == loop == payload

    def test_count_zero_rejected(self):
        _, bus, _ = make_bus()
        bus.select("dev")
        with pytest.raises(ValueError):
            bus.receive_multi("dev", 0)


class TestChipSelect:
    def test_transfer_without_select_fails(self):
        _, bus, _ = make_bus()
        with pytest.raises(NoSlaveSelected):
            bus.transfer("dev", 0x00)

    def test_unknown_cs(self):
        _, bus, _ = make_bus()
        with pytest.raises(UnknownChipSelect):
            bus.select("nope")

    def test_slave_observes_edges(self):
        _, bus, slave = make_bus()
        bus.select("dev")
        bus.select("dev")  # already asserted: no second edge
        bus.deselect("dev")
        assert (slave.select_edges, slave.deselect_edges) == (1, 1)

    def test_unattached_line_has_no_slave(self):
        sch = Scheduler()
        bus = SpiBus(sch)
        bus.add_chip_select("empty")
        bus.select("empty")
        with pytest.raises(NoSlaveSelected):
            bus.transfer("empty", 0xFF)

    def test_two_lines_route_independently(self):
        sch = Scheduler()
        bus = SpiBus(sch, SpiConfig.from_mode(0))
        a, b = EchoSlave(), EchoSlave()
        bus.attach("cmd", a)
        bus.attach("dat", b)
        bus.select("cmd")
        bus.select("dat")
        bus.transfer("cmd", 0x11)
        bus.transfer("dat", 0x22)
        assert a.received == [0x11]
        assert b.received == [0x22]


class TestTiming:
    def test_transfer_duration_rounding(self):
        assert transfer_duration_us(SpiConfig(divisor=24)) == 4  # 2 MHz
        assert transfer_duration_us(SpiConfig(divisor=400)) == 67  # 120 kHz

    def test_n_transfers_cost_n_durations(self):
        sch, bus, slave = make_bus(divisor=400)
        slave.tx_queue = [0] * 100
        bus.select("dev")
        start = sch.now
        for _ in range(100):
            bus.transfer("dev", 0xFF)
        per = transfer_duration_us(SpiConfig(divisor=400))
        elapsed = sch.now - start
        assert elapsed == 100 * per
        assert abs(elapsed - 100 * 8_000_000 / 120_000) <= 100  # ±1 µs per transfer

    def test_clock_idle_advances_time_and_requires_cs_high(self):
        sch, bus, _ = make_bus(divisor=24)
        bus.clock_idle(10)
        assert sch.now == 10 * 4
        bus.select("dev")
        with pytest.raises(Exception):
            bus.clock_idle(1)


class TestTrace:
    def test_trace_line_format(self):
        lines = []
        sch, bus, slave = make_bus(master_mode=2, slave_mode=0, divisor=24)
        bus.trace_sink = lines.append
        slave.tx_queue = [0x12]
        bus.select("dev")
        bus.transfer("dev", 0xAB)
        assert len(lines) == 1
        assert lines[0].startswith(f"t={sch.now} cs=dev mosi=ab miso=")
        assert lines[0].endswith("mode=2/0")
