"""Full-duplex SPI bus model: one master, chip-selected slaves, four modes.

Transfers are byte-granular.  Each exchange burns 8/bitrate of virtual
time, where bitrate = source clock / divisor.  When master and slave
disagree on clock phase/polarity the exchanged bytes are corrupted
deterministically (phase mismatch rotates the byte one bit toward the
offending edge, polarity mismatch inverts the first sampled bit), so
misconfiguration bugs reproduce identically run after run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

from .simcore import Scheduler


class SpiError(Exception):
    pass


class NoSlaveSelected(SpiError):
    """Transfer attempted on a line that is deasserted or unattached."""


class UnknownChipSelect(SpiError):
    pass


@dataclass(frozen=True)
class SpiConfig:
    """Clock phase/polarity, bit order, and bit-clock divisor."""

    ckph: int = 0
    ckpl: int = 0
    msb_first: bool = True
    divisor: int = 1
    source_clock_hz: int = 48_000_000

    def __post_init__(self):
        if self.ckph not in (0, 1) or self.ckpl not in (0, 1):
            raise ValueError("ckph/ckpl must be 0 or 1")
        if self.divisor < 1:
            raise ValueError("divisor must be >= 1")
        if self.source_clock_hz <= 0:
            raise ValueError("source clock must be positive")

    @property
    def mode(self) -> int:
        # Mode 0=(0,0) latch-then-shift, 1=(0,1), 2=(1,0) shift-then-latch, 3=(1,1)
        return (self.ckph << 1) | self.ckpl

    @classmethod
    def from_mode(cls, mode: int, **kwargs) -> "SpiConfig":
        if mode not in (0, 1, 2, 3):
            raise ValueError("mode must be 0..3")
        return cls(ckph=mode >> 1, ckpl=mode & 1, **kwargs)


def effective_bitrate(config: SpiConfig) -> int:
    """Bit clock in Hz: source clock divided by the pre-scaler."""
    return config.source_clock_hz // config.divisor


def bitrate_remainder(config: SpiConfig) -> int:
    """Division remainder left over by the integer pre-scaler."""
    return config.source_clock_hz % config.divisor


def transfer_duration_us(config: SpiConfig) -> int:
    """Virtual time of one 8-bit exchange, rounded to the nearest µs."""
    rate = effective_bitrate(config)
    return (8_000_000 + rate // 2) // rate


@dataclass
class BusEndpoint:
    """Transmit/receive buffer pair with polled readiness flags."""

    role: str
    config: SpiConfig
    tx_buffer: int = 0xFF
    rx_buffer: int = 0xFF
    tx_ready: bool = True
    rx_ready: bool = False


class SpiSlave:
    """Base class for bus peripherals.

    ``exchange`` must produce MISO from current state *before* absorbing
    the MOSI byte — both directions shift simultaneously on real silicon.
    """

    def __init__(self, config: SpiConfig):
        self.endpoint = BusEndpoint(role="slave", config=config)

    @property
    def config(self) -> SpiConfig:
        return self.endpoint.config

    def on_select(self) -> None:
        pass

    def on_deselect(self) -> None:
        pass

    def exchange(self, mosi: int, bitrate_hz: int) -> int:
        raise NotImplementedError


def _mismatch_corrupt(value: int, master: SpiConfig, slave: SpiConfig) -> int:
    v = value & 0xFF
    if master.ckph != slave.ckph:
        if master.ckph > slave.ckph:
            v = ((v << 1) | (v >> 7)) & 0xFF
        else:
            v = ((v >> 1) | ((v & 1) << 7)) & 0xFF
    if master.ckpl != slave.ckpl:
        v ^= 0x80 if master.msb_first else 0x01
    return v


class SpiBus:
    """Single-master bus with named chip-select lines.

    An optional trace sink receives one text line per exchange:
    ``t=<µs> cs=<id> mosi=<hex> miso=<hex> mode=<m>/<s>``.
    """

    def __init__(self, scheduler: Scheduler, master_config: Optional[SpiConfig] = None):
        self.scheduler = scheduler
        self.master = BusEndpoint(role="master", config=master_config or SpiConfig())
        self._slaves: Dict[str, Optional[SpiSlave]] = {}
        self._asserted: Dict[str, bool] = {}
        self.trace_sink: Optional[Callable[[str], None]] = None

    # -- wiring ----------------------------------------------------------

    def add_chip_select(self, cs: str) -> None:
        self._slaves.setdefault(cs, None)
        self._asserted.setdefault(cs, False)

    def attach(self, cs: str, slave: SpiSlave) -> None:
        self.add_chip_select(cs)
        if self._slaves[cs] is not None:
            raise SpiError(f"chip select {cs!r} already has a slave")
        self._slaves[cs] = slave

    def configure(self, config: SpiConfig) -> None:
        """Reprogram the master (drivers do this when switching devices)."""
        self.master.config = config

    # -- chip select -----------------------------------------------------

    def _check_cs(self, cs: str) -> None:
        if cs not in self._slaves:
            raise UnknownChipSelect(cs)

    def select(self, cs: str) -> None:
        self._check_cs(cs)
        if not self._asserted[cs]:
            self._asserted[cs] = True
            slave = self._slaves[cs]
            if slave is not None:
                slave.on_select()

    def deselect(self, cs: str) -> None:
        self._check_cs(cs)
        if self._asserted[cs]:
            self._asserted[cs] = False
            slave = self._slaves[cs]
            if slave is not None:
                slave.on_deselect()

    def is_selected(self, cs: str) -> bool:
        self._check_cs(cs)
        return self._asserted[cs]

    def any_selected(self) -> bool:
        """True while some transaction window is open on the bus."""
        return any(self._asserted.values())

    # -- data ------------------------------------------------------------

    def transfer(self, cs: str, byte_out: int) -> int:
        """One full-duplex 8-bit exchange on an asserted line."""
        self._check_cs(cs)
        slave = self._slaves[cs]
        if slave is None or not self._asserted[cs]:
            raise NoSlaveSelected(cs)

        mcfg = self.master.config
        scfg = slave.config
        corrupted = (mcfg.ckph, mcfg.ckpl) != (scfg.ckph, scfg.ckpl)
        rate = effective_bitrate(mcfg)

        self.master.tx_buffer = byte_out & 0xFF
        self.master.tx_ready = True  # byte moved to shifter immediately

        mosi = byte_out & 0xFF
        if corrupted:
            mosi = _mismatch_corrupt(mosi, mcfg, scfg)
        miso = slave.exchange(mosi, rate) & 0xFF
        if corrupted:
            miso = _mismatch_corrupt(miso, mcfg, scfg)

        self.scheduler.advance_by(transfer_duration_us(mcfg))
        self.master.rx_buffer = miso
        self.master.rx_ready = True

        if self.trace_sink is not None:
            self.trace_sink(
                f"t={self.scheduler.now} cs={cs} mosi={byte_out & 0xFF:02x} "
                f"miso={miso:02x} mode={mcfg.mode}/{scfg.mode}"
            )
        return miso

    def receive_multi(self, cs: str, count: int) -> bytes:
        """Clock ``count`` bytes out of the slave by sending 0xFF dummies."""
        if count < 1:
            raise ValueError("count must be >= 1")
        return bytes(self.transfer(cs, 0xFF) for _ in range(count))

    def clock_idle(self, nbytes: int) -> None:
        """Run the clock with every chip select deasserted (wake-up idiom)."""
        if any(self._asserted.values()):
            raise SpiError("clock_idle requires all chip selects deasserted")
        self.scheduler.advance_by(nbytes * transfer_duration_us(self.master.config))
